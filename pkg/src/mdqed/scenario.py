"""YAML scenario files: schema, validation and defaults.

A scenario file looks like::

    id: half-slab
    units: natural
    cavity: {L: [1.0, 1.1, 1.2]}
    media:
      - box: {lo: [0, 0, 0], hi: [1.0, 1.1, 0.6]}
        electric: [{strength: 0.16, resonance: 4.0, damping: 0.4}]
        magnetic: [{strength: 0.16, resonance: 4.0, damping: 0.4}]
    atom: {position: [0.43, 0.52, 0.85], dipole: [1, 0.3, 0.2], omega0: 4.0}
    basis: {n_max: 4}
    run: {mode: spectral}

Every omitted key is filled in by :func:`materialize`, and the result
round-trips through :func:`load_scenario`.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import yaml

from .coupling import AtomInMediumError, Box, LayoutError, MediumLayout, Region, default_free_region
from .dynamics import DynamicsConfig
from .emission import AtomConfig
from .geometry import CavityGeometry, GeometryError, ModeBasisConfig
from .material import LorentzModel, MaterialError, MultiLorentz, SusceptibilityPair
from .units import UnitsConfig

MODES = ("spectral", "dynamics", "both")
DENOMINATORS = ("homogeneous", "exact-diagonal")


class ScenarioError(ValueError):
    """Schema violation; ``field`` is the dotted path of the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


DEFAULTS = {
    "id": "scenario",
    "units": "natural",
    "unit_values": {"hbar": 1.0, "eps0": 1.0, "mu0": 1.0, "c": 1.0},
    "media": [],
    "free_region": None,
    "atom": {"coupling": 1.0, "gamma0": 0.0, "delta0": 0.0},
    "basis": {"n_max": 8, "quadrature_points": 32, "omega_cut": None, "smearing": None},
    "run": {"mode": "spectral", "ladder_levels": 2, "rtol": 1e-3, "atol": 1e-12, "denominator": "homogeneous",
            "markov_threshold": 0.1},
    "dynamics": {"bandwidth": 0.5, "bins": 160, "t_end": 600.0, "dt": None, "samples": 400, "out_of_band": True,
                 "photon_window": None, "fit_start": 0.0},
    "output": {"csv": None, "summary": None, "trajectory": None},
}


@dataclass(frozen=True, eq=False)
class Scenario:
    id: str
    geometry: CavityGeometry
    layout: MediumLayout
    atom: AtomConfig
    basis: ModeBasisConfig
    units: UnitsConfig
    mode: str
    ladder_levels: int
    rtol: float
    atol: float
    denominator: str
    markov_threshold: float
    dynamics: DynamicsConfig
    outputs: dict
    raw: dict  # materialized configuration, the echo

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    """sha256 of the canonical JSON form of a materialized configuration."""
    text = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _merge(defaults: dict, given: dict, where: str) -> dict:
    if not isinstance(given, dict):
        raise ScenarioError(where, "expected a mapping")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ScenarioError(f"{where}.{sorted(unknown)[0]}" if where else sorted(unknown)[0], "unknown key")
    out = copy.deepcopy(defaults)
    out.update(copy.deepcopy(given))
    return out


def _number(value, field: str, positive: bool = False, allow_none: bool = False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(field, f"expected a number, got {value!r}")
    if positive and not value > 0:
        raise ScenarioError(field, f"must be > 0, got {value!r}")
    return float(value)


def _vector(value, field: str) -> list:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ScenarioError(field, "expected a list of 3 numbers")
    return [_number(v, f"{field}[{i}]") for i, v in enumerate(value)]


def _response(terms, field: str):
    if terms is None or terms == []:
        return None
    if isinstance(terms, dict):
        terms = [terms]
    if not isinstance(terms, list):
        raise ScenarioError(field, "expected a list of Lorentz terms")
    models = []
    for i, t in enumerate(terms):
        f = f"{field}[{i}]"
        if not isinstance(t, dict) or set(t) != {"strength", "resonance", "damping"}:
            raise ScenarioError(f, "each Lorentz term needs exactly strength, resonance, damping")
        try:
            models.append(LorentzModel(_number(t["strength"], f + ".strength"), _number(t["resonance"], f + ".resonance"),
                                       _number(t["damping"], f + ".damping")))
        except MaterialError as exc:
            raise ScenarioError(f, str(exc)) from exc
    return models[0] if len(models) == 1 else MultiLorentz(tuple(models))


def materialize(data: dict) -> dict:
    """Fill every default into a parsed scenario mapping (no physics checks)."""
    if not isinstance(data, dict):
        raise ScenarioError("<root>", "scenario must be a mapping")
    for key in ("cavity", "atom"):
        if key not in data:
            raise ScenarioError(key, "required section missing")
    top = {k: v for k, v in DEFAULTS.items()}
    top["cavity"] = None
    raw = _merge(top, data, "")
    raw["cavity"] = _merge({"L": None}, data["cavity"], "cavity")
    raw["unit_values"] = _merge(DEFAULTS["unit_values"], data.get("unit_values", {}), "unit_values")
    atom_defaults = dict(DEFAULTS["atom"], position=None, dipole=None, omega0=None)
    raw["atom"] = _merge(atom_defaults, data["atom"], "atom")
    for section in ("basis", "run", "dynamics", "output"):
        raw[section] = _merge(DEFAULTS[section], data.get(section) or {}, section)
    media = data.get("media") or []
    if not isinstance(media, list):
        raise ScenarioError("media", "expected a list of regions")
    raw["media"] = [_merge({"box": None, "electric": None, "magnetic": None}, m, f"media[{i}]")
                    for i, m in enumerate(media)]
    if raw["free_region"] is not None:
        raw["free_region"] = _merge({"center": None, "side": None}, raw["free_region"], "free_region")
    return raw


def build(raw: dict) -> Scenario:
    """Turn a materialized mapping into a validated :class:`Scenario`."""
    if raw["units"] != "natural":
        raise ScenarioError("units", f"only 'natural' units are supported, got {raw['units']!r}")
    uv = raw["unit_values"]
    units = UnitsConfig(**{k: _number(uv[k], f"unit_values.{k}", positive=True) for k in ("hbar", "eps0", "mu0", "c")})
    L = raw["cavity"]["L"]
    if L is None:
        raise ScenarioError("cavity.L", "required")
    L = _vector(L, "cavity.L")
    try:
        geom = CavityGeometry(*L, c=units.c)
    except GeometryError as exc:
        raise GeometryError(f"cavity.L: {exc}") from exc
    regions = []
    for i, m in enumerate(raw["media"]):
        f = f"media[{i}]"
        if not isinstance(m["box"], dict) or set(m["box"]) != {"lo", "hi"}:
            raise ScenarioError(f + ".box", "expected {lo: [x, y, z], hi: [x, y, z]}")
        lo, hi = _vector(m["box"]["lo"], f + ".box.lo"), _vector(m["box"]["hi"], f + ".box.hi")
        try:
            box = Box(tuple(lo), tuple(hi))
        except (ValueError, GeometryError) as exc:
            raise LayoutError(f"{f}.box: {exc}") from exc
        regions.append(Region(box, SusceptibilityPair(_response(m["electric"], f + ".electric"),
                                                      _response(m["magnetic"], f + ".magnetic"))))
    a = raw["atom"]
    for key in ("position", "dipole", "omega0"):
        if a[key] is None:
            raise ScenarioError(f"atom.{key}", "required")
    try:
        atom = AtomConfig(tuple(_vector(a["position"], "atom.position")), tuple(_vector(a["dipole"], "atom.dipole")),
                          _number(a["omega0"], "atom.omega0"), _number(a["coupling"], "atom.coupling"),
                          _number(a["gamma0"], "atom.gamma0"), _number(a["delta0"], "atom.delta0"))
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError("atom", str(exc)) from exc
    fr = raw["free_region"]
    if fr is None:
        free = default_free_region(geom, atom.R)
    else:
        free = Box.centered(_vector(fr["center"], "free_region.center"), _number(fr["side"], "free_region.side", True))
    layout = MediumLayout(tuple(regions), free)
    layout.validate(geom, atom.R)  # LayoutError / AtomInMediumError / GeometryError
    b = raw["basis"]
    if isinstance(b["n_max"], bool) or not isinstance(b["n_max"], int):
        raise ScenarioError("basis.n_max", "expected an integer")
    if isinstance(b["quadrature_points"], bool) or not isinstance(b["quadrature_points"], int):
        raise ScenarioError("basis.quadrature_points", "expected an integer")
    try:
        basis = ModeBasisConfig(b["n_max"], b["quadrature_points"],
                                _number(b["omega_cut"], "basis.omega_cut", True, allow_none=True),
                                _number(b["smearing"], "basis.smearing", allow_none=True))
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError("basis", str(exc)) from exc
    r = raw["run"]
    if r["mode"] not in MODES:
        raise ScenarioError("run.mode", f"expected one of {MODES}, got {r['mode']!r}")
    if r["denominator"] not in DENOMINATORS:
        raise ScenarioError("run.denominator", f"expected one of {DENOMINATORS}")
    if isinstance(r["ladder_levels"], bool) or not isinstance(r["ladder_levels"], int) or r["ladder_levels"] < 2:
        raise ScenarioError("run.ladder_levels", "expected an integer >= 2")
    d = raw["dynamics"]
    try:
        dyn = DynamicsConfig(
            bandwidth=_number(d["bandwidth"], "dynamics.bandwidth", True),
            bins=int(_number(d["bins"], "dynamics.bins", True)),
            t_end=_number(d["t_end"], "dynamics.t_end", True),
            dt=_number(d["dt"], "dynamics.dt", True, allow_none=True),
            samples=int(_number(d["samples"], "dynamics.samples", True)),
            out_of_band=bool(d["out_of_band"]),
            photon_window=_number(d["photon_window"], "dynamics.photon_window", True, allow_none=True),
            fit_start=_number(d["fit_start"], "dynamics.fit_start"),
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError("dynamics", str(exc)) from exc
    if r["mode"] != "spectral" and atom.omega0 - dyn.bandwidth <= 0:
        raise ScenarioError("dynamics.bandwidth", "band reaches omega <= 0")
    if not isinstance(raw["id"], str) or not raw["id"]:
        raise ScenarioError("id", "expected a non-empty string")
    return Scenario(
        id=raw["id"], geometry=geom, layout=layout, atom=atom, basis=basis, units=units, mode=r["mode"],
        ladder_levels=r["ladder_levels"], rtol=_number(r["rtol"], "run.rtol", True),
        atol=_number(r["atol"], "run.atol"), denominator=r["denominator"],
        markov_threshold=_number(r["markov_threshold"], "run.markov_threshold", True),
        dynamics=dyn, outputs=dict(raw["output"]), raw=raw,
    )


def parse_scenario(data: dict) -> Scenario:
    return build(materialize(data))


def load_scenario(path) -> Scenario:
    """Read, default and validate a YAML scenario file.

    Raises :class:`ScenarioError` for schema problems, ``GeometryError`` for
    bad cavity dimensions and :class:`AtomInMediumError` when the atom sits
    inside a medium region.
    """
    path = Path(path)
    if not path.is_file():
        raise ScenarioError("<file>", f"{path} does not exist")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError("<file>", f"YAML parse error: {exc}") from exc
    return parse_scenario(data)


def echo(scenario: Scenario) -> str:
    """Materialized configuration as YAML, headed by its content hash."""
    return f"# sha256: {scenario.config_hash}\n" + yaml.safe_dump(scenario.raw, sort_keys=True)


def set_param(raw: dict, name: str, value) -> dict:
    """Copy of ``raw`` with the dotted key ``name`` set (``atom.position.2`` indexes lists)."""
    out = copy.deepcopy(raw)
    node = out
    parts = name.split(".")
    for i, part in enumerate(parts):
        last = i == len(parts) - 1
        if isinstance(node, list):
            try:
                k = int(part)
                node[k]
            except (ValueError, IndexError):
                raise ScenarioError(name, f"bad list index {part!r}") from None
        elif isinstance(node, dict):
            if part not in node:
                raise ScenarioError(name, "unknown parameter")
            k = part
        else:
            raise ScenarioError(name, "unknown parameter")
        if last:
            node[k] = value
        else:
            node = node[k]
    return out


__all__ = ["AtomInMediumError", "LayoutError", "GeometryError", "Scenario", "ScenarioError", "load_scenario",
           "parse_scenario", "materialize", "build", "echo", "set_param", "config_hash"]
