"""Decay rate and level shift versus atom height above a slab, written as CSV.

    python scripts/height_profile.py configs/half_slab.yaml --points 12 > profile.csv
"""

import argparse
import csv
import sys
import warnings

import numpy as np

from mdqed.emission import MarkovWarning, decay_and_shift
from mdqed.scenario import build, load_scenario, set_param


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--points", type=int, default=10)
    ap.add_argument("--gap", type=float, default=0.05, help="closest distance to the slab surface and the wall")
    args = ap.parse_args()
    sc = load_scenario(args.config)
    top = max(reg.box.hi[2] for reg in sc.layout.regions)
    heights = np.linspace(top + args.gap, sc.geometry.lengths[2] - args.gap, args.points)
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["z", "gamma", "delta", "uncertainty", "flags"])
    for z in heights:
        point = build(set_param(sc.raw, "atom.position.2", float(z)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MarkovWarning)
            res = decay_and_shift(point.geometry, point.layout, point.atom, point.basis, units=point.units)
        out.writerow([repr(float(z)), repr(res.gamma), repr(res.delta), repr(res.uncertainty), ";".join(res.flags)])


if __name__ == "__main__":
    main()
