"""Command-line entry point: ``mdqed run|validate|converge|sweep <scenario.yaml>``.

Exit codes: 0 success, 2 validation failure, 3 a result is flagged as not
converged, 4 the time-domain fit found a non-Markovian decay, 5 a sweep was
aborted on a negative decay constant.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import tempfile
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import yaml

from .coupling import LayoutError
from .dynamics import IntegrationError, NonMarkovianError, simulate
from .emission import FLAG_MARKOV, FLAG_NEGATIVE_GAMMA, FLAG_NOT_CONVERGED, MarkovWarning, decay_and_shift
from .geometry import GeometryError
from .scenario import Scenario, ScenarioError, build, echo, load_scenario, set_param

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NOT_CONVERGED = 3
EXIT_NON_MARKOVIAN = 4
EXIT_NEGATIVE_GAMMA = 5

COLUMNS = ("scenario_id", "omega0", "R_x", "R_y", "R_z", "dipole_x", "dipole_y", "dipole_z", "gamma", "delta",
           "gamma_dynamic", "ratio", "omega_cut", "quad_pts", "flags")

FLAG_NON_MARKOVIAN = "non-markovian"
THREADS_ENV = "MDQED_THREADS"


@dataclass
class PointResult:
    row: dict
    ladder: list = field(default_factory=list)
    wall_time: float = 0.0
    error: str | None = None
    trajectory: object = None


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def run_point(scenario: Scenario) -> PointResult:
    """Evaluate one scenario in its requested mode."""
    t0 = time.perf_counter()
    a = scenario.atom
    row = dict(scenario_id=scenario.id, omega0=a.omega0, R_x=a.position[0], R_y=a.position[1], R_z=a.position[2],
               dipole_x=a.dipole[0], dipole_y=a.dipole[1], dipole_z=a.dipole[2], gamma=math.nan, delta=math.nan,
               gamma_dynamic=math.nan, ratio=math.nan, omega_cut=scenario.basis.cutoff(scenario.geometry),
               quad_pts=scenario.basis.quadrature_points, flags="")
    flags: list[str] = []
    out = PointResult(row)
    spectral = None
    if scenario.mode in ("spectral", "both"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MarkovWarning)
            spectral = decay_and_shift(scenario.geometry, scenario.layout, a, scenario.basis,
                                       ladder_levels=scenario.ladder_levels, rtol=scenario.rtol, atol=scenario.atol,
                                       denominator=scenario.denominator, units=scenario.units,
                                       markov_threshold=scenario.markov_threshold)
        row.update(gamma=spectral.gamma, delta=spectral.delta, omega_cut=spectral.omega_cut,
                   quad_pts=spectral.quadrature_points)
        flags.extend(spectral.flags)
        out.ladder = [asdict(level) for level in spectral.ladder]
    if scenario.mode in ("dynamics", "both"):
        try:
            traj, fit = simulate(scenario.geometry, scenario.layout, a, scenario.basis, scenario.dynamics,
                                 units=scenario.units)
            out.trajectory = traj
            row["gamma_dynamic"] = fit.rate
            if not fit.conclusive:
                flags.append("fit-inconclusive")
        except NonMarkovianError as exc:
            flags.append(FLAG_NON_MARKOVIAN)
            out.error = str(exc)
    if spectral is not None and not math.isnan(row["gamma_dynamic"]) and FLAG_MARKOV not in flags:
        if spectral.gamma != 0:
            row["ratio"] = row["gamma_dynamic"] / spectral.gamma
    row["flags"] = ";".join(flags)
    out.wall_time = time.perf_counter() - t0
    return out


def _ladder_rows(scenario: Scenario):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MarkovWarning)
        res = decay_and_shift(scenario.geometry, scenario.layout, scenario.atom, scenario.basis,
                              ladder_levels=scenario.ladder_levels, rtol=scenario.rtol, atol=scenario.atol,
                              denominator=scenario.denominator, units=scenario.units,
                              markov_threshold=scenario.markov_threshold)
    return res


def write_atomic(path: str, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in COLUMNS])
    return buf.getvalue()


def summary_text(scenario: Scenario, results: list[PointResult], verb: str) -> str:
    lines = [f"# {verb} {scenario.id}  config sha256 {scenario.config_hash}"]
    total = 0.0
    for i, res in enumerate(results):
        total += res.wall_time
        r = res.row
        lines.append(f"point {i}: gamma={_fmt(r['gamma'])} delta={_fmt(r['delta'])} "
                     f"gamma_dynamic={_fmt(r['gamma_dynamic'])} ratio={_fmt(r['ratio'])} flags=[{r['flags']}] "
                     f"wall={res.wall_time:.3f}s cumulative={total:.3f}s")
        for lv in res.ladder:
            lines.append(f"    ladder n_max={lv['n_max']} omega_cut={lv['omega_cut']:.6g} modes={lv['n_modes']} "
                         f"quad={lv['quadrature_points']} gamma={lv['gamma']!r} delta={lv['delta']!r}")
        if res.error:
            lines.append(f"    error: {res.error}")
    lines.append(f"total wall time {total:.3f}s")
    return "\n".join(lines) + "\n"


def _exit_code(results: list[PointResult]) -> int:
    flags = {f for r in results for f in r.row["flags"].split(";") if f}
    if FLAG_NEGATIVE_GAMMA in flags:
        return EXIT_NEGATIVE_GAMMA
    if FLAG_NON_MARKOVIAN in flags:
        return EXIT_NON_MARKOVIAN
    if FLAG_NOT_CONVERGED in flags:
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _emit(scenario: Scenario, results: list[PointResult], verb: str, output: str | None, stdout) -> None:
    body = csv_text([r.row for r in results])
    summary = summary_text(scenario, results, verb)
    csv_path = output or scenario.outputs.get("csv")
    if csv_path:
        write_atomic(csv_path, body)
        stdout.write(summary)
    else:
        stdout.write(body)
        stdout.write("\n" + summary)
    if scenario.outputs.get("summary"):
        write_atomic(scenario.outputs["summary"], summary)
    if scenario.outputs.get("trajectory") and results and results[0].trajectory is not None:
        results[0].trajectory.to_csv(scenario.outputs["trajectory"])


def parse_values(text: str) -> list:
    """``"4.0,4.5"`` gives scalars; ``"0.4,0.5,0.8;0.4,0.5,0.9"`` gives 3-vectors."""
    out = []
    for item in text.split(";") if ";" in text else text.split(","):
        parts = [p for p in item.split(",") if p.strip()]
        try:
            nums = [float(p) for p in parts]
        except ValueError:
            raise ScenarioError("--values", f"not a number: {item!r}") from None
        out.append(nums[0] if len(nums) == 1 else nums)
    if not out:
        raise ScenarioError("--values", "empty list")
    return out


def sweep(scenario: Scenario, param: str, values: list, workers: int = 1) -> tuple[list[PointResult], bool]:
    """Evaluate ``scenario`` at each value of ``param``.

    Points are validated first (all or nothing).  A negative decay constant
    stops the sweep; the second return value tells whether that happened.
    """
    points = [build(set_param(scenario.raw, param, v)) for v in values]
    results: list[PointResult] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for res in pool.map(run_point, points):
                results.append(res)
                if FLAG_NEGATIVE_GAMMA in res.row["flags"]:
                    return results, True
        return results, False
    for p in points:
        res = run_point(p)
        results.append(res)
        if FLAG_NEGATIVE_GAMMA in res.row["flags"]:
            return results, True
    return results, False


def _workers() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ScenarioError(THREADS_ENV, f"expected an integer, got {raw!r}") from None
    return max(1, n)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdqed", description="Decay rate and level shift of an atom in a cavity with "
                                                          "lossy magnetodielectric regions.")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, help_text in (("run", "evaluate the scenario in its run.mode"),
                            ("validate", "check the scenario and print the materialized config"),
                            ("converge", "print the convergence ladder only")):
        s = sub.add_parser(verb, help=help_text)
        s.add_argument("config")
        if verb == "run":
            s.add_argument("--output", help="CSV path (overrides output.csv)")
            s.add_argument("--mode", choices=("spectral", "dynamics", "both"), help="override run.mode")
    s = sub.add_parser("sweep", help="evaluate the scenario for several values of one parameter")
    s.add_argument("config")
    s.add_argument("--param", required=True, help="dotted key, e.g. atom.omega0 or atom.position.2")
    s.add_argument("--values", required=True, help="comma list, or ';'-separated vectors")
    s.add_argument("--output", help="CSV path (overrides output.csv)")
    return p


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args.config)
        if getattr(args, "mode", None):
            scenario = build(set_param(scenario.raw, "run.mode", args.mode))
        if args.verb == "validate":
            stdout.write(echo(scenario))
            return EXIT_OK
        if args.verb == "converge":
            res = _ladder_rows(scenario)
            stdout.write(f"# converge {scenario.id}  config sha256 {scenario.config_hash}\n")
            stdout.write("level,n_max,omega_cut,n_modes,quad_pts,gamma,delta\n")
            for i, lv in enumerate(res.ladder):
                stdout.write(f"{i},{lv.n_max},{lv.omega_cut!r},{lv.n_modes},{lv.quadrature_points},"
                             f"{lv.gamma!r},{lv.delta!r}\n")
            stdout.write(f"uncertainty={res.uncertainty!r} converged={res.converged}\n")
            return EXIT_OK if res.converged else EXIT_NOT_CONVERGED
        if args.verb == "run":
            results = [run_point(scenario)]
            _emit(scenario, results, "run", args.output, stdout)
            return _exit_code(results)
        values = parse_values(args.values)
        results, aborted = sweep(scenario, args.param, values, _workers())
        _emit(scenario, results, "sweep", args.output, stdout)
        if aborted:
            stderr.write(f"sweep aborted: {FLAG_NEGATIVE_GAMMA} at point {len(results) - 1}\n")
        return _exit_code(results)
    except (ScenarioError, GeometryError, LayoutError, yaml.YAMLError) as exc:
        stderr.write(f"{type(exc).__name__}: {exc}\n")
        return EXIT_VALIDATION
    except IntegrationError as exc:
        stderr.write(f"IntegrationError: {exc}\n")
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
