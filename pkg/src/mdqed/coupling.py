"""Medium layouts, region overlap matrices and the mode-coupling matrix W.

A layout is a list of axis-aligned boxes, each filled with one homogeneous
:class:`~mdqed.material.SusceptibilityPair`, plus the free box ``V0`` that
holds the atom.  Everything outside the regions is vacuum.

Overlap integrals are separable: on a box every mode component is a product of
one-dimensional sines and cosines, so a region integral of a product of two
components is the product of three 1-D Gauss-Legendre overlaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    F_PATTERN,
    G_PATTERN,
    CavityGeometry,
    GeometryError,
    ModeBasisConfig,
    ModeSet,
    gauss_legendre,
    _trig,
)
from .material import SusceptibilityPair, ZSettings, DEFAULT_Z, coupling_f_squared, coupling_g_squared, z_pair
from .units import NATURAL, UnitsConfig


class LayoutError(GeometryError):
    """Regions overlapping, leaving the cavity, or touching the free box."""


class AtomInMediumError(LayoutError):
    """The atom sits inside a polarizable region."""


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise LayoutError("box corners must be 3-vectors")
        if any(not (b > a) for a, b in zip(lo, hi)):
            raise LayoutError(f"box must have positive extent, got lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def centered(cls, center, side) -> "Box":
        c = np.asarray(center, dtype=float)
        s = np.broadcast_to(np.asarray(side, dtype=float), (3,))
        return cls(tuple(c - s / 2), tuple(c + s / 2))

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def contains(self, r, strict: bool = False) -> bool:
        r = np.asarray(r, dtype=float)
        lo, hi = np.array(self.lo), np.array(self.hi)
        if strict:
            return bool(np.all(r > lo) and np.all(r < hi))
        return bool(np.all(r >= lo) and np.all(r <= hi))

    def intersects(self, other: "Box", tol: float = 1e-12) -> bool:
        """True if the interiors overlap (shared faces are allowed)."""
        return all(min(h1, h2) - max(l1, l2) > tol for l1, h1, l2, h2 in zip(self.lo, self.hi, other.lo, other.hi))

    def inside(self, geom: CavityGeometry, tol: float = 1e-12) -> bool:
        L = geom.lengths
        return bool(np.all(np.array(self.lo) >= -tol * L) and np.all(np.array(self.hi) <= L * (1 + tol)))


@dataclass(frozen=True)
class Region:
    box: Box
    response: SusceptibilityPair


@dataclass(frozen=True)
class MediumLayout:
    regions: tuple = ()
    free_region: Box | None = None

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))

    @property
    def is_empty(self) -> bool:
        return all(reg.response.is_zero for reg in self.regions)

    def medium_volume(self) -> float:
        return sum(reg.box.volume for reg in self.regions)

    def validate(self, geom: CavityGeometry, atom_position=None) -> None:
        for i, reg in enumerate(self.regions):
            if not reg.box.inside(geom):
                raise LayoutError(f"region {i} extends outside the cavity")
            for j in range(i):
                if reg.box.intersects(self.regions[j].box):
                    raise LayoutError(f"regions {j} and {i} overlap")
        if atom_position is not None:
            R = geom.require_inside(atom_position, "atom position")
            for i, reg in enumerate(self.regions):
                if reg.box.contains(R):
                    raise AtomInMediumError(f"atom at {tuple(R)} lies inside medium region {i}")
        if self.free_region is not None:
            if not self.free_region.inside(geom):
                raise LayoutError("free region V0 extends outside the cavity")
            for i, reg in enumerate(self.regions):
                if reg.box.intersects(self.free_region):
                    raise LayoutError(f"free region V0 overlaps medium region {i}")
            if atom_position is not None and not self.free_region.contains(atom_position, strict=True):
                raise LayoutError("atom must lie strictly inside the free region V0")

    def with_free_region(self, geom: CavityGeometry, R, side: float | None = None) -> "MediumLayout":
        """Copy with ``V0`` set to a cube around ``R`` (default side ``min(L)/50``)."""
        side = float(geom.lengths.min()) / 50.0 if side is None else side
        return MediumLayout(self.regions, Box.centered(R, side))


def default_free_region(geom: CavityGeometry, R) -> Box:
    return Box.centered(R, float(geom.lengths.min()) / 50.0)


# -- separable overlaps ----------------------------------------------------------


def _axis_table(nmax: int, a: float, b: float, L: float, kinds: str, npts: int) -> np.ndarray:
    """``int_a^b T(n x) T'(m x) dx`` for n, m = 1..nmax, kinds e.g. ``"cs"``.

    Composite Gauss-Legendre: the interval is split so that each panel sees
    at most ``npts / 4`` oscillation periods, which keeps the rule exact to
    rounding for the trigonometric products.
    """
    panels = 1 + int(4 * nmax * (b - a) / (L * max(npts, 2)))
    edges = np.linspace(a, b, panels + 1)
    n = np.arange(1, nmax + 1, dtype=float)
    out = np.zeros((nmax, nmax))
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre(lo, hi, npts)
        t1 = _trig(n, x, L, kinds[0])
        t2 = _trig(n, x, L, kinds[1])
        out += (t1 * w) @ t2.T
    return out


def profile_overlaps(geom: CavityGeometry, idx: np.ndarray, box: Box, which: str, npts: int, idx2: np.ndarray | None = None) -> np.ndarray:
    """``O[a, n, m] = int_box p_a(n, r) p_a(m, r) d^3r`` for profiles ``f`` or ``g``.

    Returns shape (3, N, M).
    """
    idx2 = idx if idx2 is None else idx2
    pattern = F_PATTERN if which == "f" else G_PATTERN
    L = geom.lengths
    if idx.shape[0] == 0 or idx2.shape[0] == 0:
        return np.zeros((3, idx.shape[0], idx2.shape[0]))
    nmax = int(max(idx.max(), idx2.max()))
    tables = {}
    for ax in range(3):
        for k in "cs":
            tables[ax, k] = _axis_table(nmax, box.lo[ax], box.hi[ax], L[ax], k + k, npts)
    out = np.empty((3, idx.shape[0], idx2.shape[0]))
    for a, pat in enumerate(pattern):
        prod = np.ones((idx.shape[0], idx2.shape[0]))
        for ax in range(3):
            T = tables[ax, pat[ax]]
            prod *= T[np.ix_(idx[:, ax] - 1, idx2[:, ax] - 1)]
        out[a] = prod
    return out


def _branch_vectors(ms: ModeSet, kind: str) -> np.ndarray:
    """Direction vectors per triplet, shape (N, B, 3).

    ``u``: the two polarizations; ``s``: ``khat x e`` for both; ``v``/``s3``
    variants append the longitudinal ``khat`` as third branch.
    """
    pol = ms.polarizations()
    if kind == "u":
        return pol
    kh = ms.khat
    if kind == "s":
        return np.cross(kh[:, None, :], pol)
    if kind == "v":
        return np.concatenate([pol, kh[:, None, :]], axis=1)
    if kind == "s3":
        return np.concatenate([np.cross(kh[:, None, :], pol), kh[:, None, :]], axis=1)
    raise ValueError(kind)


def gram_matrix(geom: CavityGeometry, ms: ModeSet, box: Box, kind: str, npts: int, ms2: ModeSet | None = None, kind2: str | None = None) -> np.ndarray:
    """``(8/V) int_box a_{n b} . b_{m b'}`` for mode families ``kind``/``kind2``.

    ``kind`` is one of ``u``, ``s`` (photonic, 2 branches), ``v``, ``s3``
    (medium, 3 branches).  Returns shape (N, B, M, B').
    """
    ms2 = ms if ms2 is None else ms2
    kind2 = kind if kind2 is None else kind2
    which = "g" if kind in ("s", "s3") else "f"
    if (kind2 in ("s", "s3")) != (which == "g"):
        raise ValueError("cannot mix electric and magnetic mode families")
    O = profile_overlaps(geom, ms.idx, box, which, npts, ms2.idx)
    A = _branch_vectors(ms, kind)
    B = _branch_vectors(ms2, kind2)
    return (8.0 / geom.volume) * np.einsum("nba,anm,mca->nbmc", A, O, B, optimize=True)


# -- W --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RegionOverlaps:
    """Electric and magnetic Gram blocks of one region for a mode set."""

    electric: np.ndarray  # (N, 2, N, 2)
    magnetic: np.ndarray


def region_overlaps(geom: CavityGeometry, ms: ModeSet, layout: MediumLayout, npts: int) -> list[RegionOverlaps]:
    return [
        RegionOverlaps(gram_matrix(geom, ms, reg.box, "u", npts), gram_matrix(geom, ms, reg.box, "s", npts))
        for reg in layout.regions
    ]


def coupling_matrix(
    geom: CavityGeometry,
    layout: MediumLayout,
    ms: ModeSet,
    w,
    npts: int,
    on_axis: bool = False,
    overlaps: list[RegionOverlaps] | None = None,
    zsettings: ZSettings = DEFAULT_Z,
) -> np.ndarray:
    """Full matrix ``W[n, lam, n', lam']`` at argument ``w``."""
    N = ms.size
    W = np.zeros((N, 2, N, 2), dtype=complex)
    if N == 0 or not layout.regions:
        return W
    overlaps = region_overlaps(geom, ms, layout, npts) if overlaps is None else overlaps
    for reg, ov in zip(layout.regions, overlaps):
        ze, zm = z_pair(reg.response, w, on_axis, zsettings)
        if ze:
            W += ze * ov.electric
        if zm:
            W += zm * ov.magnetic
    ratio = np.sqrt(ms.omega[None, :] / ms.omega[:, None])
    return W * ratio[:, None, :, None]


def overlap_W(
    geom: CavityGeometry,
    layout: MediumLayout,
    n,
    lam: int,
    n2,
    lam2: int,
    w,
    basis_cfg: ModeBasisConfig,
    on_axis: bool = False,
    zsettings: ZSettings = DEFAULT_Z,
) -> complex:
    """Single entry ``W_{n lam}^{n' lam'}(w)``."""
    from .geometry import mode_set as _ms

    if lam not in (1, 2) or lam2 not in (1, 2):
        raise GeometryError("photonic branch must be 1 or 2")
    full = _ms(geom, basis_cfg)
    single = _single_mode_sets(full, [tuple(n), tuple(n2)])
    a, b = single
    total = 0j
    for reg in layout.regions:
        ze, zm = z_pair(reg.response, w, on_axis, zsettings)
        if ze:
            total += ze * gram_matrix(geom, a, reg.box, "u", basis_cfg.quadrature_points, b, "u")[0, lam - 1, 0, lam2 - 1]
        if zm:
            total += zm * gram_matrix(geom, a, reg.box, "s", basis_cfg.quadrature_points, b, "s")[0, lam - 1, 0, lam2 - 1]
    return complex(total * math.sqrt(b.omega[0] / a.omega[0]))


def _single_mode_sets(full: ModeSet, triplets) -> list[ModeSet]:
    out = []
    for t in triplets:
        t = tuple(int(v) for v in t)
        if min(t) < 1:
            raise GeometryError(f"mode indices start at 1, got {t}")
        hit = np.nonzero(np.all(full.idx == np.array(t), axis=1))[0]
        if hit.size == 0:
            raise GeometryError(f"mode {t} is outside the truncated mode set")
        i = hit[0]
        out.append(
            ModeSet(full.geom, full.omega_cut, full.idx[i : i + 1], full.k[i : i + 1], full.omega[i : i + 1], full.e1[i : i + 1], full.e2[i : i + 1], full.smearing)
        )
    return out


def homogeneous_W(layout: MediumLayout, geom: CavityGeometry, w, on_axis: bool = False, zsettings: ZSettings = DEFAULT_Z) -> complex:
    """Volume-fraction estimate ``sum_i (|Omega_i| / V)(Z_e^i + Z_m^i)``."""
    total = 0j
    for reg in layout.regions:
        ze, zm = z_pair(reg.response, w, on_axis, zsettings)
        total += reg.box.volume / geom.volume * (ze + zm)
    return complex(total)


# -- Q / L overlaps -------------------------------------------------------------


def overlap_QL(
    geom: CavityGeometry,
    layout: MediumLayout,
    n,
    lam: int,
    m,
    nu: int,
    omega_k: float,
    basis_cfg: ModeBasisConfig,
    units: UnitsConfig = NATURAL,
) -> tuple[complex, complex]:
    """Photon / medium-mode overlaps ``(Q, L)`` at continuum frequency ``omega_k``.

    ``f`` and ``g`` are the nonnegative square roots of the squared coupling
    functions of each region.
    """
    from .geometry import mode_set as _ms

    if lam not in (1, 2):
        raise GeometryError("photonic branch must be 1 or 2")
    if nu not in (1, 2, 3):
        raise GeometryError("medium branch must be 1, 2 or 3")
    if omega_k <= 0:
        return 0j, 0j
    full = _ms(geom, basis_cfg)
    a = _single_mode_sets(full, [tuple(n)])[0]
    b = _mode_set_for(full, geom, m)
    V = geom.volume
    wn = a.omega[0]
    q = l = 0.0
    for reg in layout.regions:
        f = math.sqrt(float(coupling_f_squared(reg.response.electric, omega_k, units))) if reg.response.electric else 0.0
        g = math.sqrt(float(coupling_g_squared(reg.response.magnetic, omega_k, units))) if reg.response.magnetic else 0.0
        npts = basis_cfg.quadrature_points
        if f:
            q += f * (V / 8) * gram_matrix(geom, a, reg.box, "u", npts, b, "v")[0, lam - 1, 0, nu - 1]
        if g:
            l += g * (V / 8) * gram_matrix(geom, a, reg.box, "s", npts, b, "s3")[0, lam - 1, 0, nu - 1]
    Q = 1j * math.sqrt(32 * units.hbar * wn / (units.eps0 * V**2)) * q
    L = math.sqrt(32 * units.hbar * units.mu0 * wn / V**2) * l
    return complex(Q), complex(L)


def _mode_set_for(full: ModeSet, geom: CavityGeometry, m) -> ModeSet:
    """One-triplet mode set for an arbitrary medium index (not cut off)."""
    from .geometry import _polarizations

    m = np.array([int(v) for v in m])
    if m.min() < 1:
        raise GeometryError(f"mode indices start at 1, got {tuple(m)}")
    k = math.pi * m / geom.lengths
    kabs = float(np.linalg.norm(k))
    e1, e2 = _polarizations((k / kabs)[None, :])
    return ModeSet(geom, full.omega_cut, m[None, :], k[None, :], np.array([geom.c * kabs]), e1, e2, full.smearing)
