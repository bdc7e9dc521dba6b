"""Vacuum and medium-induced Green dyadics at the atom position.

``g0_dyadic`` is the bare cavity sum.  ``g_dyadic`` evaluates the medium part
as a region integral of products of two single mode sums (the ``eta`` and
``zeta`` tensors), which is linear in the number of modes.  The quadratic
double sum over mode pairs is kept in :func:`g_dyadic_double_sum` as an
independent reference for small truncations.

All dyadics carry a factor ``e^2`` (``coupling`` argument) and the dipole form
factor ``t_n = exp(-(k_n a)^2 / 2)`` once per atom-side mode index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coupling import Box, MediumLayout, coupling_matrix, homogeneous_W, profile_overlaps, _branch_vectors
from .geometry import (
    F_PATTERN,
    G_PATTERN,
    BoxGrid,
    CavityGeometry,
    GeometryError,
    ModeBasisConfig,
    ModeSet,
    mode_function,
    mode_set,
    profile_functions,
    synthesize,
)
from .material import DEFAULT_Z, ZSettings, z_function_batch, z_pair
from .units import NATURAL, UnitsConfig


class PoleError(ValueError):
    """Evaluation point sits on a cavity resonance."""


@dataclass(frozen=True, eq=False)
class DyadicValue:
    matrix: np.ndarray
    w: complex
    omega_cut: float
    n_modes: int
    quadrature_points: int
    smearing: float = 0.0
    denominator: str = "homogeneous"
    on_axis: bool = False

    def quadratic_form(self, d) -> complex:
        d = np.asarray(d, dtype=float)
        return complex(d @ self.matrix @ d)


@dataclass(frozen=True, eq=False)
class EtaZetaTensors:
    eta_e: np.ndarray
    zeta_e: np.ndarray
    eta_m: np.ndarray
    zeta_m: np.ndarray


def _check_w(w: complex, on_axis: bool) -> complex:
    w = complex(w)
    if on_axis and w.imag != 0:
        raise ValueError("on-axis evaluation expects a real frequency")
    if not on_axis and w.imag == 0 and w.real > 0:
        raise ValueError("w on the positive real axis: pass on_axis=True for the omega + i0+ limit")
    return w


def _free_denominators(ms: ModeSet, w: complex, pole_tol: float) -> np.ndarray:
    d = w - ms.omega
    bad = np.abs(d) <= pole_tol * ms.omega
    if np.any(bad):
        i = int(np.argmax(bad))
        raise PoleError(f"w = {w} coincides with cavity resonance omega = {ms.omega[i]:.12g} of mode {tuple(ms.idx[i])}")
    return d


def atom_profiles(ms: ModeSet, R) -> np.ndarray:
    """``t_n f_a(n, R)``, shape (3, N)."""
    return profile_functions(ms.geom, ms.idx, np.asarray(R, dtype=float)[None, :], "f")[:, :, 0] * ms.taper[None, :]


def g0_dyadic(
    geom: CavityGeometry,
    R,
    w,
    basis_cfg: ModeBasisConfig,
    coupling: float = 1.0,
    units: UnitsConfig = NATURAL,
    pole_tol: float = 1e-10,
    angle: float = 0.0,
) -> DyadicValue:
    """``(4 e^2 / eps0 V) sum_{n lam} omega_n u(R) u(R) / (w - omega_n)``."""
    R = geom.require_inside(R, "atom position")
    w = complex(w)
    ms = mode_set(geom, basis_cfg, angle=angle)
    G = np.zeros((3, 3), dtype=complex)
    if ms.size:
        d = _free_denominators(ms, w, pole_tol)
        fR = atom_profiles(ms, R)
        P = ms.transverse_projector()
        c = ms.omega / d
        G = np.einsum("n,nab,an,bn->ab", c, P, fR, fR)
        G *= 4 * coupling / (units.eps0 * geom.volume)
    return DyadicValue(G, w, ms.omega_cut, ms.size, basis_cfg.quadrature_points, ms.smearing, "none", False)


# -- eta / zeta -----------------------------------------------------------------


def _branch_denominators(
    geom, layout, ms, w, on_axis, denominator, npts, zsettings
) -> np.ndarray | complex:
    """``w - omega_n (1 + W)`` for the eta tensors.

    Returns a scalar ``W`` for the homogeneous rule or an (N, 2) array of
    per-mode diagonal entries for ``exact-diagonal``.
    """
    if denominator == "homogeneous":
        return homogeneous_W(layout, geom, w, on_axis, zsettings)
    if denominator == "exact-diagonal":
        Wd = np.zeros((ms.size, 2), dtype=complex)
        for reg in layout.regions:
            ze, zm = z_pair(reg.response, w, on_axis, zsettings)
            if ze:
                Wd += ze * _gram_diagonal(geom, ms, reg.box, "u", npts)
            if zm:
                Wd += zm * _gram_diagonal(geom, ms, reg.box, "s", npts)
        return Wd
    raise ValueError(f"unknown denominator rule {denominator!r}")


def _gram_diagonal(geom, ms, box, kind, npts) -> np.ndarray:
    """Diagonal ``(8/V) int_box |a_{n lam}|^2`` without forming the full matrix."""
    which = "g" if kind == "s" else "f"
    O = _profile_self_overlaps(geom, ms.idx, box, which, npts)  # (3, N)
    A = _branch_vectors(ms, kind)  # (N, 2, 3)
    return (8.0 / geom.volume) * np.einsum("nba,an->nb", A**2, O)


def _profile_self_overlaps(geom, idx, box, which, npts) -> np.ndarray:
    from .coupling import _axis_table

    pattern = F_PATTERN if which == "f" else G_PATTERN
    L = geom.lengths
    if idx.shape[0] == 0:
        return np.zeros((3, 0))
    nmax = int(idx.max())
    diag = {}
    for ax in range(3):
        for k in "cs":
            diag[ax, k] = np.diag(_axis_table(nmax, box.lo[ax], box.hi[ax], L[ax], k + k, npts))
    out = np.ones((3, idx.shape[0]))
    for a, pat in enumerate(pattern):
        for ax in range(3):
            out[a] *= diag[ax, pat[ax]][idx[:, ax] - 1]
    return out


def _eta_zeta_coefficients(ms: ModeSet, R, w, Wden, pole_tol: float):
    """Per-mode coefficient tensors ``C[alpha, gamma, n]`` of the four tensors.

    Field at ``r``: ``eta^e_{ag}(r) = sum_n C^e[a, g, n] f_g(n, r)`` and
    ``eta^m_{ag}(r) = sum_n C^m[a, g, n] g_g(n, r)``.
    """
    V = ms.geom.volume
    fR = atom_profiles(ms, R)
    dz = _free_denominators(ms, w, pole_tol)
    cz = 4.0 / V * ms.omega / dz
    Pz = ms.transverse_projector()
    Kz = ms.magnetic_kernel()
    zeta_e = np.einsum("n,nag,an->agn", cz, Pz, fR)
    zeta_m = np.einsum("n,nag,an->agn", cz, Kz, fR)
    if np.ndim(Wden) == 0:
        de = w - ms.omega * (1.0 + Wden)
        if np.any(de == 0):
            raise PoleError("vanishing eta denominator")
        ce = 4.0 / V * ms.omega / de
        eta_e = np.einsum("n,nag,an->agn", ce, Pz, fR)
        eta_m = np.einsum("n,nag,an->agn", ce, Kz, fR)
    else:
        de = w - ms.omega[:, None] * (1.0 + Wden)  # (N, 2)
        if np.any(de == 0):
            raise PoleError("vanishing eta denominator")
        ce = 4.0 / V * ms.omega[:, None] / de
        E = _branch_vectors(ms, "u")
        S = _branch_vectors(ms, "s")
        eta_e = np.einsum("nl,nla,nlg,an->agn", ce, E, E, fR)
        eta_m = np.einsum("nl,nla,nlg,an->agn", ce, E, S, fR)
    return eta_e, zeta_e, eta_m, zeta_m


def eta_zeta(
    geom: CavityGeometry,
    layout: MediumLayout,
    R,
    r,
    w,
    basis_cfg: ModeBasisConfig,
    on_axis: bool = False,
    denominator: str = "homogeneous",
    zsettings: ZSettings = DEFAULT_Z,
    pole_tol: float = 1e-10,
    angle: float = 0.0,
) -> EtaZetaTensors:
    """The four tensors at a single medium point ``r`` (must differ from ``R``)."""
    R = geom.require_inside(R, "atom position")
    r = geom.require_inside(r, "medium point")
    if np.allclose(R, r, rtol=0, atol=1e-12 * geom.lengths.max()):
        raise GeometryError("eta/zeta tensors need R != r")
    w = _check_w(w, on_axis)
    ms = mode_set(geom, basis_cfg, angle=angle)
    Wden = _branch_denominators(geom, layout, ms, w, on_axis, denominator, basis_cfg.quadrature_points, zsettings)
    Ce, Cz, Cm, Czm = _eta_zeta_coefficients(ms, R, w, Wden, pole_tol)
    fr = profile_functions(geom, ms.idx, r[None, :], "f")[:, :, 0]
    gr = profile_functions(geom, ms.idx, r[None, :], "g")[:, :, 0]
    return EtaZetaTensors(
        np.einsum("agn,gn->ag", Ce, fr),
        np.einsum("agn,gn->ag", Cz, fr),
        np.einsum("agn,gn->ag", Cm, gr),
        np.einsum("agn,gn->ag", Czm, gr),
    )


def region_grid(geom: CavityGeometry, ms: ModeSet, box: Box, npts: int) -> BoxGrid:
    """Gauss-Legendre grid on a region, refined per axis for the highest mode index."""
    L = geom.lengths
    mx = ms.max_index
    counts = []
    for ax in range(3):
        span = (box.hi[ax] - box.lo[ax]) / L[ax]
        counts.append(max(npts, int(math.ceil(2 * mx[ax] * span)) + 16))
    nodes, weights = [], []
    from .geometry import gauss_legendre

    for ax in range(3):
        x, wq = gauss_legendre(box.lo[ax], box.hi[ax], counts[ax])
        nodes.append(x)
        weights.append(wq)
    return BoxGrid(box.lo, box.hi, tuple(nodes), tuple(weights))


def g_dyadic(
    geom: CavityGeometry,
    layout: MediumLayout,
    R,
    w,
    basis_cfg: ModeBasisConfig,
    on_axis: bool = False,
    denominator: str = "homogeneous",
    coupling: float = 1.0,
    units: UnitsConfig = NATURAL,
    zsettings: ZSettings = DEFAULT_Z,
    pole_tol: float = 1e-10,
    angle: float = 0.0,
) -> DyadicValue:
    """Medium-induced dyadic at the atom position.

    ``(2 e^2 / eps0) sum_i int_{Omega_i} sum_g [Z_e eta^e_{ag} zeta^e_{bg} + Z_m eta^m_{ag} zeta^m_{bg}]``,
    with each tensor synthesised on the region's quadrature grid.
    """
    R = geom.require_inside(R, "atom position")
    w = _check_w(w, on_axis)
    ms = mode_set(geom, basis_cfg, angle=angle)
    G = np.zeros((3, 3), dtype=complex)
    meta = dict(w=w, omega_cut=ms.omega_cut, n_modes=ms.size, quadrature_points=basis_cfg.quadrature_points,
                smearing=ms.smearing, denominator=denominator, on_axis=on_axis)
    if ms.size == 0 or layout.is_empty:
        return DyadicValue(G, **meta)
    Wden = _branch_denominators(geom, layout, ms, w, on_axis, denominator, basis_cfg.quadrature_points, zsettings)
    Ce, Cz, Cm, Czm = _eta_zeta_coefficients(ms, R, w, Wden, pole_tol)
    for reg in layout.regions:
        ze, zm = z_pair(reg.response, w, on_axis, zsettings)
        if ze == 0 and zm == 0:
            continue
        grid = region_grid(geom, ms, reg.box, basis_cfg.quadrature_points)
        wt = grid.weight_tensor()
        for zval, Ceta, Czeta, pattern in ((ze, Ce, Cz, F_PATTERN), (zm, Cm, Czm, G_PATTERN)):
            if zval == 0:
                continue
            for g in range(3):
                eta = synthesize(geom, ms.idx, Ceta[:, g, :], pattern[g], grid)  # (3[a], grid)
                zeta = synthesize(geom, ms.idx, Czeta[:, g, :], pattern[g], grid)
                G += zval * np.einsum("aijk,bijk,ijk->ab", eta, zeta, wt, optimize=True)
    G *= 2 * coupling / units.eps0
    return DyadicValue(G, **meta)


def g_dyadic_double_sum(
    geom: CavityGeometry,
    layout: MediumLayout,
    R,
    w,
    basis_cfg: ModeBasisConfig,
    on_axis: bool = False,
    denominator: str = "homogeneous",
    coupling: float = 1.0,
    units: UnitsConfig = NATURAL,
    zsettings: ZSettings = DEFAULT_Z,
    angle: float = 0.0,
    grid_points: int | None = None,
) -> DyadicValue:
    """Brute-force reference: explicit double sum over mode pairs.

    The overlap matrix is obtained from pointwise evaluation of the vector
    mode functions (explicit polarization vectors) on a 3-D grid per region,
    not from the separable tables used elsewhere.  Meant for a few dozen modes.
    """
    R = geom.require_inside(R, "atom position")
    w = _check_w(w, on_axis)
    ms = mode_set(geom, basis_cfg, angle=angle)
    N = ms.size
    npts = grid_points or basis_cfg.quadrature_points
    W = np.zeros((N, 2, N, 2), dtype=complex)
    for reg in layout.regions:
        ze, zm = z_pair(reg.response, w, on_axis, zsettings)
        grid = BoxGrid.build(reg.box.lo, reg.box.hi, npts)
        P = grid.points()
        wq = grid.weight_tensor().ravel()
        U = np.empty((N, 2, P.shape[0], 3))
        S = np.empty_like(U)
        for i in range(N):
            for lam in (1, 2):
                U[i, lam - 1] = mode_function(geom, tuple(ms.idx[i]), lam, "u", P, angle)
                S[i, lam - 1] = mode_function(geom, tuple(ms.idx[i]), lam, "s", P, angle)
        Eu = np.einsum("nlpa,mkpa,p->nlmk", U, U, wq) * 8 / geom.volume
        Es = np.einsum("nlpa,mkpa,p->nlmk", S, S, wq) * 8 / geom.volume
        W += ze * Eu + zm * Es
    W *= np.sqrt(ms.omega[None, :] / ms.omega[:, None])[:, None, :, None]
    if denominator == "homogeneous":
        Wd = np.full((N, 2), homogeneous_W(layout, geom, w, on_axis, zsettings))
    elif denominator == "exact-diagonal":
        Wd = np.einsum("nlnl->nl", W)
    else:
        raise ValueError(f"unknown denominator rule {denominator!r}")
    uR = np.stack([mode_function(geom, tuple(ms.idx[i]), lam, "u", R, angle) for i in range(N) for lam in (1, 2)]).reshape(N, 2, 3)
    uR = uR * ms.taper[:, None, None]
    d1 = w - ms.omega[:, None] * (1 + Wd)
    d2 = (w - ms.omega)[:, None] * np.ones((1, 2))
    pref = np.sqrt(ms.omega**3)[:, None] / d1
    pref2 = np.sqrt(ms.omega)[:, None] / d2
    G = np.einsum("nl,nla,nlmk,mk,mkb->ab", pref, uR, W, pref2, uR)
    G *= 4 * coupling / (units.eps0 * geom.volume)
    return DyadicValue(G, w, ms.omega_cut, N, npts, ms.smearing, denominator, on_axis)


class DyadicEvaluator:
    """Precomputed ``d . G(w) . d`` for one atom, dipole and layout.

    The mode-pair overlap matrices of every region are built once (separable
    1-D tables), after which each frequency costs one pass over the ``N x N``
    matrices.  Intended for frequency scans such as the memory kernel; the
    single-frequency path is :func:`g_dyadic`.
    """

    def __init__(
        self,
        geom: CavityGeometry,
        layout: MediumLayout,
        R,
        dipole,
        basis_cfg: ModeBasisConfig,
        coupling: float = 1.0,
        units: UnitsConfig = NATURAL,
        zsettings: ZSettings = DEFAULT_Z,
        angle: float = 0.0,
    ):
        self.geom = geom
        self.layout = layout
        self.units = units
        self.zsettings = zsettings
        self.coupling = coupling
        self.ms = ms = mode_set(geom, basis_cfg, angle=angle)
        R = geom.require_inside(R, "atom position")
        d = np.asarray(dipole, dtype=float)
        fR = atom_profiles(ms, R)
        # dipole-projected atom-side coefficients, per gamma: (3[g], N)
        ae = np.einsum("a,nag,an->gn", d, ms.transverse_projector(), fR)
        am = np.einsum("a,nag,an->gn", d, ms.magnetic_kernel(), fR)
        npts = basis_cfg.quadrature_points
        self.pairs = []
        for reg in layout.regions:
            Oe = profile_overlaps(geom, ms.idx, reg.box, "f", npts)
            Om = profile_overlaps(geom, ms.idx, reg.box, "g", npts)
            me = np.einsum("gn,gnm,gm->nm", ae, Oe, ae)
            mm = np.einsum("gn,gnm,gm->nm", am, Om, am)
            self.pairs.append((reg.response, me, mm))
        self.pref = 32.0 * coupling / (units.eps0 * geom.volume**2)

    def __call__(self, w, on_axis: bool = False, pole_tol: float = 1e-10) -> complex:
        w = _check_w(w, on_axis)
        ms = self.ms
        if ms.size == 0 or self.layout.is_empty:
            return 0j
        zs = [z_pair(resp, w, on_axis, self.zsettings) for resp, _, _ in self.pairs]
        V = self.geom.volume
        Wh = sum(reg.box.volume / V * (ze + zm) for reg, (ze, zm) in zip(self.layout.regions, zs))
        a = ms.omega / (w - ms.omega * (1 + Wh))
        b = ms.omega / _free_denominators(ms, w, pole_tol)
        total = 0j
        for (resp, me, mm), (ze, zm) in zip(self.pairs, zs):
            if ze:
                total += ze * (a @ me @ b)
            if zm:
                total += zm * (a @ mm @ b)
        return complex(self.pref * total)

    def batch(self, w) -> np.ndarray:
        """Vectorised evaluation for points strictly above the real axis."""
        w = np.asarray(w, dtype=complex)
        ms = self.ms
        if ms.size == 0 or self.layout.is_empty:
            return np.zeros_like(w)
        V = self.geom.volume
        zs = [
            (z_function_batch(resp.electric, w, settings=self.zsettings), z_function_batch(resp.magnetic, w, settings=self.zsettings))
            for resp, _, _ in self.pairs
        ]
        Wh = sum(reg.box.volume / V * (ze + zm) for reg, (ze, zm) in zip(self.layout.regions, zs))
        a = ms.omega[None, :] / (w[:, None] - ms.omega[None, :] * (1 + Wh[:, None]))
        b = ms.omega[None, :] / (w[:, None] - ms.omega[None, :])
        total = np.zeros(w.shape, dtype=complex)
        for (resp, me, mm), (ze, zm) in zip(self.pairs, zs):
            total += ze * np.einsum("wn,wn->w", a @ me, b) + zm * np.einsum("wn,wn->w", a @ mm, b)
        return self.pref * total
