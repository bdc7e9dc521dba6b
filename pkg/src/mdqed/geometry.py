"""Rectangular cavity eigenmodes, mode functions and quadrature grids.

Conventions
-----------
Positions live in the closed box ``[0, L1] x [0, L2] x [0, L3]``.  For a mode
triplet ``n = (n1, n2, n3)`` with all ``n_i >= 1`` the wave vector is
``k_n = (n1 pi / L1, n2 pi / L2, n3 pi / L3)`` and ``omega_n = c |k_n|``.

The photonic fields are

    u_{n lam}(r) = sum_a e_a(n, lam) f_a(n, r) xhat_a,        lam = 1, 2

with ``f_1 = cos sin sin``, ``f_2 = sin cos sin``, ``f_3 = sin sin cos``.  The
medium fields are ``v_{n nu} = u_{n nu}`` for ``nu = 1, 2`` and
``v_{n3} = khat_a f_a xhat_a``; ``s_{n nu} = curl u_{n nu} / |k_n|`` for
``nu = 1, 2`` and ``s_{n3} = khat_a g_a xhat_a`` with ``g_1 = sin cos cos``,
``g_2 = cos sin cos``, ``g_3 = cos cos sin``.  Every one of these is normalised
so that ``(8 / V) int_V |field|^2 = 1``.

Note that the vector-potential prefactor used elsewhere in the package is
``sqrt(4 hbar / (eps0 V omega_n))``, i.e. the one that goes with this
``8 / V`` normalisation, not the textbook ``sqrt(hbar / (2 eps0 V omega))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class GeometryError(ValueError):
    """Invalid cavity, mode index or position."""


@dataclass(frozen=True)
class CavityGeometry:
    L1: float
    L2: float
    L3: float
    c: float = 1.0

    def __post_init__(self):
        for name in ("L1", "L2", "L3", "c"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise GeometryError(f"{name} must be positive and finite, got {value!r}")

    @property
    def lengths(self) -> np.ndarray:
        return np.array([self.L1, self.L2, self.L3], dtype=float)

    @property
    def volume(self) -> float:
        return self.L1 * self.L2 * self.L3

    def contains(self, r, tol: float = 1e-12) -> bool:
        r = np.asarray(r, dtype=float)
        L = self.lengths
        return bool(np.all(r >= -tol * L) and np.all(r <= L * (1 + tol)))

    def require_inside(self, r, what: str = "position") -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if r.shape[-1] != 3:
            raise GeometryError(f"{what} must be a 3-vector")
        L = self.lengths
        pts = r.reshape(-1, 3)
        if np.any(pts < -1e-12 * L) or np.any(pts > L * (1 + 1e-12)):
            raise GeometryError(f"{what} lies outside the cavity")
        return r


@dataclass(frozen=True)
class ModeIndex:
    n1: int
    n2: int
    n3: int

    def __post_init__(self):
        for v in (self.n1, self.n2, self.n3):
            if int(v) != v or v < 1:
                raise GeometryError(f"mode indices start at 1, got {(self.n1, self.n2, self.n3)}")

    def as_array(self) -> np.ndarray:
        return np.array([self.n1, self.n2, self.n3], dtype=float)


def _as_index(n) -> ModeIndex:
    return n if isinstance(n, ModeIndex) else ModeIndex(*n)


@dataclass(frozen=True)
class ModeBasisConfig:
    """Truncation and quadrature settings for every mode sum.

    ``n_max`` sets the isotropic frequency cutoff
    ``omega_cut = c pi n_max / max(L)`` unless ``omega_cut`` is given
    explicitly.  ``smearing`` is the radius ``a`` of a Gaussian dipole form
    factor ``exp(-(k_n a)^2 / 2)`` applied to the atom-field coupling.
    ``None`` picks ``min(L) / 10``; ``0`` is a point dipole, for which the
    medium-induced mode sums grow without bound as the cutoff is raised.
    """

    n_max: int = 8
    quadrature_points: int = 32
    omega_cut: float | None = None
    smearing: float | None = None

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.quadrature_points < 2:
            raise ValueError("quadrature_points must be >= 2")
        if self.omega_cut is not None and not self.omega_cut > 0:
            raise ValueError("omega_cut must be positive")
        if self.smearing is not None and self.smearing < 0:
            raise ValueError("smearing must be >= 0")

    def smearing_length(self, geom: CavityGeometry) -> float:
        if self.smearing is None:
            return float(geom.lengths.min()) / 10.0
        return float(self.smearing)

    def cutoff(self, geom: CavityGeometry) -> float:
        if self.omega_cut is not None:
            return float(self.omega_cut)
        return geom.c * math.pi * self.n_max / float(geom.lengths.max())

    def refined(self, factor: float = 1.5) -> "ModeBasisConfig":
        """Next level of a convergence ladder (more modes, more nodes)."""
        cut = None if self.omega_cut is None else self.omega_cut * factor
        return ModeBasisConfig(
            n_max=max(self.n_max + 1, int(math.ceil(self.n_max * factor))),
            quadrature_points=max(self.quadrature_points + 1, int(math.ceil(self.quadrature_points * factor))),
            omega_cut=cut,
            smearing=self.smearing,
        )


# -- single-mode operations ---------------------------------------------------


def wave_vector(geom: CavityGeometry, n) -> np.ndarray:
    n = _as_index(n)
    return math.pi * n.as_array() / geom.lengths


def mode_frequency(geom: CavityGeometry, n) -> float:
    return geom.c * float(np.linalg.norm(wave_vector(geom, n)))


def _polarizations(khat: np.ndarray, angle: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised polarization pair for unit vectors ``khat`` of shape (..., 3)."""
    khat = np.asarray(khat, dtype=float)
    z = np.zeros_like(khat)
    z[..., 2] = 1.0
    x = np.zeros_like(khat)
    x[..., 0] = 1.0
    e1 = np.cross(khat, z)
    norm = np.linalg.norm(e1, axis=-1, keepdims=True)
    parallel = norm[..., 0] < 1e-12
    if np.any(parallel):
        alt = np.cross(khat, x)
        e1 = np.where(parallel[..., None], alt, e1)
        norm = np.linalg.norm(e1, axis=-1, keepdims=True)
    e1 = e1 / norm
    e2 = np.cross(khat, e1)
    if angle:
        ca, sa = math.cos(angle), math.sin(angle)
        e1, e2 = ca * e1 + sa * e2, -sa * e1 + ca * e2
    return e1, e2


def polarization_basis(geom: CavityGeometry, n, angle: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(e(n,1), e(n,2))``.

    Default convention: ``e1 = khat x zhat / |.|`` (``khat x xhat`` if
    ``khat`` is parallel to z), ``e2 = khat x e1``.  ``angle`` rotates the pair
    inside the transverse plane; physical results must not depend on it.
    """
    k = wave_vector(geom, n)
    return _polarizations(k / np.linalg.norm(k), angle)


def _trig(n: np.ndarray, x: np.ndarray, L: float, kind: str) -> np.ndarray:
    arg = np.multiply.outer(n * math.pi / L, x)
    return np.cos(arg) if kind == "c" else np.sin(arg)


# Per-component axis patterns: f_a has cos along axis a, g_a has sin along a.
F_PATTERN = ("css", "scs", "ssc")
G_PATTERN = ("scc", "csc", "ccs")


def profile_functions(geom: CavityGeometry, idx: np.ndarray, r: np.ndarray, which: str = "f") -> np.ndarray:
    """Evaluate ``f_a(n, r)`` (or ``g_a``) for mode triplets ``idx`` (N, 3).

    Returns an array of shape (3, N, P) for ``P`` points ``r`` (P, 3).
    """
    idx = np.atleast_2d(idx).astype(float)
    r = np.atleast_2d(np.asarray(r, dtype=float))
    L = geom.lengths
    pattern = F_PATTERN if which == "f" else G_PATTERN
    tabs = {}
    for axis in range(3):
        for kind in "cs":
            tabs[axis, kind] = _trig(idx[:, axis], r[:, axis], L[axis], kind)
    out = np.empty((3, idx.shape[0], r.shape[0]))
    for a, pat in enumerate(pattern):
        out[a] = tabs[0, pat[0]] * tabs[1, pat[1]] * tabs[2, pat[2]]
    return out


def mode_function(geom: CavityGeometry, n, branch: int, kind: str, r, angle: float = 0.0) -> np.ndarray:
    """Vector field ``u``, ``v`` or ``s`` of mode ``n`` / ``branch`` at ``r``.

    ``r`` may be a single point (3,) or an array of points (P, 3); the result
    has the same leading shape with a trailing axis of length 3.
    """
    n = _as_index(n)
    if kind not in ("u", "v", "s"):
        raise ValueError(f"unknown mode kind {kind!r}")
    allowed = (1, 2) if kind == "u" else (1, 2, 3)
    if branch not in allowed:
        raise GeometryError(f"branch {branch} not allowed for kind {kind!r}")
    r = geom.require_inside(r)
    single = r.ndim == 1
    pts = np.atleast_2d(r)

    k = wave_vector(geom, n)
    khat = k / np.linalg.norm(k)
    if branch == 3:
        direction = khat
    else:
        e = polarization_basis(geom, n, angle)[branch - 1]
        direction = np.cross(khat, e) if kind == "s" else e
    which = "g" if kind == "s" else "f"
    prof = profile_functions(geom, n.as_array()[None, :], pts, which)[:, 0, :]
    out = (direction[:, None] * prof).T
    return out[0] if single else out


# -- truncated mode sets --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ModeSet:
    """All triplets with ``omega_n <= omega_cut``, sorted by frequency."""

    geom: CavityGeometry
    omega_cut: float
    idx: np.ndarray
    k: np.ndarray
    omega: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    smearing: float = 0.0

    @property
    def size(self) -> int:
        return self.idx.shape[0]

    @property
    def kabs(self) -> np.ndarray:
        return self.omega / self.geom.c

    @property
    def khat(self) -> np.ndarray:
        return self.k / self.kabs[:, None]

    @property
    def taper(self) -> np.ndarray:
        if self.smearing == 0.0:
            return np.ones(self.size)
        return np.exp(-0.5 * (self.kabs * self.smearing) ** 2)

    @property
    def max_index(self) -> np.ndarray:
        return self.idx.max(axis=0) if self.size else np.zeros(3, dtype=int)

    def polarizations(self) -> np.ndarray:
        """Array (N, 2, 3) with the two polarization vectors per triplet."""
        return np.stack([self.e1, self.e2], axis=1)

    def transverse_projector(self) -> np.ndarray:
        """``delta_ab - khat_a khat_b`` per triplet, shape (N, 3, 3)."""
        kh = self.khat
        return np.eye(3)[None] - kh[:, :, None] * kh[:, None, :]

    def magnetic_kernel(self) -> np.ndarray:
        """``sum_mu eps_{g mu a} khat_mu`` per triplet, shape (N, 3[a], 3[g]).

        This is ``sum_lam e_a (khat x e)_g``, the polarization-summed
        electric/magnetic cross term.
        """
        kh = self.khat
        out = np.zeros((self.size, 3, 3))
        # sum_mu eps_{g mu a} khat_mu ; eps_{g mu a} = eps_{a g mu}
        out[:, 0, 1] = kh[:, 2]   # a=x, g=y: eps_{y mu x} k_mu = eps_{yzx} kz = +kz
        out[:, 1, 0] = -kh[:, 2]
        out[:, 1, 2] = kh[:, 0]
        out[:, 2, 1] = -kh[:, 0]
        out[:, 2, 0] = kh[:, 1]
        out[:, 0, 2] = -kh[:, 1]
        return out


def _enumerate(geom: CavityGeometry, omega_cut: float, omega_min: float) -> np.ndarray:
    L = geom.lengths
    kmax = omega_cut / geom.c
    nmax = np.floor(kmax * L / math.pi).astype(int)
    if np.any(nmax < 1):
        return np.zeros((0, 3), dtype=int)
    grids = np.meshgrid(*(np.arange(1, m + 1) for m in nmax), indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)
    w = geom.c * np.linalg.norm(math.pi * idx / L, axis=1)
    keep = (w <= omega_cut * (1 + 1e-12)) & (w >= omega_min)
    idx, w = idx[keep], w[keep]
    order = np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0], w))
    return idx[order]


@lru_cache(maxsize=64)
def _cached_mode_set(geom: CavityGeometry, omega_cut: float, omega_min: float, smearing: float, angle: float) -> ModeSet:
    idx = _enumerate(geom, omega_cut, omega_min)
    k = math.pi * idx / geom.lengths
    omega = geom.c * np.linalg.norm(k, axis=1)
    if idx.shape[0]:
        e1, e2 = _polarizations(k / np.linalg.norm(k, axis=1, keepdims=True), angle)
    else:
        e1 = e2 = np.zeros((0, 3))
    for arr in (idx, k, omega, e1, e2):
        arr.setflags(write=False)
    return ModeSet(geom, omega_cut, idx, k, omega, e1, e2, smearing)


def mode_set(geom: CavityGeometry, cfg: ModeBasisConfig, omega_min: float = 0.0, angle: float = 0.0) -> ModeSet:
    return _cached_mode_set(geom, float(cfg.cutoff(geom)), float(omega_min), cfg.smearing_length(geom), float(angle))


# -- quadrature ---------------------------------------------------------------


@lru_cache(maxsize=32)
def _gl(npts: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(npts)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(a: float, b: float, npts: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = _gl(npts)
    half = 0.5 * (b - a)
    return half * x + 0.5 * (a + b), half * w


@dataclass(frozen=True, eq=False)
class BoxGrid:
    """Tensor-product Gauss-Legendre grid on an axis-aligned box."""

    lo: tuple
    hi: tuple
    nodes: tuple
    weights: tuple

    @classmethod
    def build(cls, lo, hi, npts: int) -> "BoxGrid":
        nodes, weights = [], []
        for a, b in zip(lo, hi):
            x, w = gauss_legendre(float(a), float(b), npts)
            nodes.append(x)
            weights.append(w)
        return cls(tuple(map(float, lo)), tuple(map(float, hi)), tuple(nodes), tuple(weights))

    @property
    def shape(self) -> tuple:
        return tuple(len(x) for x in self.nodes)

    def points(self) -> np.ndarray:
        X = np.meshgrid(*self.nodes, indexing="ij")
        return np.stack([x.ravel() for x in X], axis=1)

    def weight_tensor(self) -> np.ndarray:
        wx, wy, wz = self.weights
        return wx[:, None, None] * wy[None, :, None] * wz[None, None, :]

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integrate arrays whose last three axes are the grid axes."""
        return np.einsum("...ijk,ijk->...", values, self.weight_tensor())


def synthesize(geom: CavityGeometry, idx: np.ndarray, coeffs: np.ndarray, pattern: str, grid: BoxGrid) -> np.ndarray:
    """Evaluate ``sum_n coeffs[..., n] * T1(n1,x) T2(n2,y) T3(n3,z)`` on a grid.

    ``pattern`` is a three-letter string of ``c``/``s`` choosing cosine or sine
    along each axis.  The mode sum is done by sum factorisation through a
    dense coefficient cube, so the cost is independent of how sparse the
    spherical truncation is.
    """
    coeffs = np.asarray(coeffs)
    lead = coeffs.shape[:-1]
    flat = coeffs.reshape(-1, coeffs.shape[-1])
    mx = idx.max(axis=0)
    cube = np.zeros((flat.shape[0], mx[0], mx[1], mx[2]), dtype=np.result_type(flat, float))
    cube[:, idx[:, 0] - 1, idx[:, 1] - 1, idx[:, 2] - 1] = flat
    L = geom.lengths
    tabs = [_trig(np.arange(1, mx[a] + 1, dtype=float), grid.nodes[a], L[a], pattern[a]) for a in range(3)]
    out = np.einsum("mabc,ai->mibc", cube, tabs[0], optimize=True)
    out = np.einsum("mibc,bj->mijc", out, tabs[1], optimize=True)
    out = np.einsum("mijc,ck->mijk", out, tabs[2], optimize=True)
    return out.reshape(lead + grid.shape)


def analyze(geom: CavityGeometry, idx: np.ndarray, values: np.ndarray, pattern: str, grid: BoxGrid) -> np.ndarray:
    """Adjoint of :func:`synthesize`: ``int values * T1 T2 T3`` for each mode."""
    values = np.asarray(values)
    lead = values.shape[:-3]
    flat = values.reshape((-1,) + grid.shape)
    mx = idx.max(axis=0)
    L = geom.lengths
    tabs = [
        _trig(np.arange(1, mx[a] + 1, dtype=float), grid.nodes[a], L[a], pattern[a]) * grid.weights[a][None, :]
        for a in range(3)
    ]
    out = np.einsum("mijk,ck->mijc", flat, tabs[2], optimize=True)
    out = np.einsum("mijc,bj->mibc", out, tabs[1], optimize=True)
    out = np.einsum("mibc,ai->mabc", out, tabs[0], optimize=True)
    res = out[:, idx[:, 0] - 1, idx[:, 1] - 1, idx[:, 2] - 1]
    return res.reshape(lead + (idx.shape[0],))


def axis_overlaps(n: np.ndarray, m: np.ndarray, a: float, b: float, L: float, kind: str, npts: int) -> np.ndarray:
    """1-D overlap table ``int_a^b T(n x) T(m x) dx`` by Gauss-Legendre."""
    x, w = gauss_legendre(a, b, npts)
    tn = _trig(np.asarray(n, dtype=float), x, L, kind)
    tm = _trig(np.asarray(m, dtype=float), x, L, kind)
    return (tn * w) @ tm.T


# -- scalar Green function and transverse projection ----------------------------


def scalar_green(geom: CavityGeometry, r, rp, basis_cfg: ModeBasisConfig) -> float:
    """Truncated Dirichlet Green function ``(8/V) sum sin..sin.. / |k_n|^2``."""
    r = geom.require_inside(r, "r")
    rp = geom.require_inside(rp, "r'")
    if np.allclose(r, rp, rtol=0, atol=1e-12 * geom.lengths.max()):
        raise GeometryError("scalar Green function diverges at coincident points")
    ms = mode_set(geom, basis_cfg)
    L = geom.lengths

    def sss(p):
        return np.prod(np.sin(ms.idx * math.pi * p[None, :] / L[None, :]), axis=1)

    return float(8.0 / geom.volume * np.sum(sss(r) * sss(rp) / ms.kabs**2))


def full_grid(geom: CavityGeometry, basis_cfg: ModeBasisConfig) -> BoxGrid:
    return BoxGrid.build((0.0, 0.0, 0.0), tuple(geom.lengths), basis_cfg.quadrature_points)


def transverse_project(field_samples: np.ndarray, geom: CavityGeometry, basis_cfg: ModeBasisConfig) -> np.ndarray:
    """Project a sampled vector field onto the span of the ``u_{n lam}``.

    ``field_samples`` has shape (3, Q, Q, Q) on the full-box Gauss-Legendre
    grid with ``Q = basis_cfg.quadrature_points``; the result has the same
    shape.  Within the truncated mode set this is the transverse part of the
    field: ``(8/V) sum_{n lam} <u_{n lam}, F> u_{n lam}``.
    """
    grid = full_grid(geom, basis_cfg)
    field_samples = np.asarray(field_samples)
    if field_samples.shape != (3,) + grid.shape:
        raise GeometryError(f"field must be sampled on the {(3,) + grid.shape} quadrature grid, got {field_samples.shape}")
    ms = mode_set(geom, basis_cfg)
    if ms.size == 0:
        return np.zeros_like(field_samples)
    # components of F along f_a per triplet, then project on the (delta - khat khat) block
    comps = np.stack([analyze(geom, ms.idx, field_samples[a], F_PATTERN[a], grid) for a in range(3)], axis=1)
    proj = np.einsum("nab,nb->na", ms.transverse_projector(), comps) * (8.0 / geom.volume)
    return np.stack([synthesize(geom, ms.idx, proj[:, a], F_PATTERN[a], grid) for a in range(3)])
