"""Decay rate, level shift, memory kernel and Markov amplitude.

``decay_and_shift`` evaluates the medium-induced dyadic at ``omega0 + i0+``
and reads off

    Gamma = -(1/hbar) d . Im G . d,      Delta = (1/hbar) d . Re G . d.

Only the medium contribution is computed; the bare-cavity terms ``Gamma0``
and ``Delta0`` are user inputs that are simply added where a total is needed.
Every result carries a convergence ladder (at least two truncation levels).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .coupling import MediumLayout, default_free_region, homogeneous_W
from .geometry import CavityGeometry, ModeBasisConfig, mode_set
from .green import DyadicEvaluator, DyadicValue, g_dyadic
from .material import DEFAULT_Z, ZSettings
from .units import NATURAL, UnitsConfig

FLAG_NOT_CONVERGED = "not-converged"
FLAG_NEGATIVE_GAMMA = "negative-gamma"
FLAG_MARKOV = "markov-gate"


class MarkovWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AtomConfig:
    """Two-level atom: position, real transition dipole and frequency.

    ``coupling`` is the squared charge ``e^2`` multiplying every dyadic.
    ``gamma0`` / ``delta0`` are optional bare-cavity contributions.
    """

    position: tuple
    dipole: tuple
    omega0: float
    coupling: float = 1.0
    gamma0: float = 0.0
    delta0: float = 0.0

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position)
        dip = tuple(float(v) for v in self.dipole)
        if len(pos) != 3 or len(dip) != 3:
            raise ValueError("position and dipole must be 3-vectors")
        if not self.omega0 > 0:
            raise ValueError("transition frequency omega0 must be > 0")
        if not np.linalg.norm(dip) > 0:
            raise ValueError("transition dipole must be nonzero")
        if not self.coupling > 0:
            raise ValueError("coupling e^2 must be > 0")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "dipole", dip)

    @property
    def R(self) -> np.ndarray:
        return np.array(self.position)

    @property
    def d(self) -> np.ndarray:
        return np.array(self.dipole)


@dataclass(frozen=True)
class LadderLevel:
    n_max: int
    omega_cut: float
    n_modes: int
    quadrature_points: int
    gamma: float
    delta: float


@dataclass(frozen=True, eq=False)
class EmissionResult:
    gamma: float
    delta: float
    omega0: float
    ladder: tuple
    uncertainty: float
    converged: bool
    markov_ratio: float
    correlation_time: float
    v0_sensitivity: float
    flags: tuple = ()
    gamma0: float = 0.0
    delta0: float = 0.0
    dyadic: DyadicValue | None = None
    mode_breakdown: np.ndarray | None = None

    @property
    def total_gamma(self) -> float:
        return self.gamma + self.gamma0

    @property
    def total_delta(self) -> float:
        return self.delta + self.delta0

    @property
    def omega_cut(self) -> float:
        return self.ladder[0].omega_cut

    @property
    def quadrature_points(self) -> int:
        return self.ladder[0].quadrature_points


def _gamma_delta(G: DyadicValue, d: np.ndarray, hbar: float) -> tuple[float, float]:
    v = d @ G.matrix @ d
    return -float(v.imag) / hbar + 0.0, float(v.real) / hbar + 0.0


def convergence_ladder(
    geom: CavityGeometry,
    layout: MediumLayout,
    atom: AtomConfig,
    basis_cfg: ModeBasisConfig,
    levels: int = 2,
    factor: float = 1.5,
    denominator: str = "homogeneous",
    units: UnitsConfig = NATURAL,
    zsettings: ZSettings = DEFAULT_Z,
    angle: float = 0.0,
) -> tuple[list[LadderLevel], list[DyadicValue]]:
    """Gamma and Delta at ``levels`` successively refined truncations."""
    if levels < 2:
        raise ValueError("a convergence ladder needs at least two levels")
    out, dyads = [], []
    cfg = basis_cfg
    for _ in range(levels):
        G = g_dyadic(geom, layout, atom.R, atom.omega0, cfg, on_axis=True, denominator=denominator,
                     coupling=atom.coupling, units=units, zsettings=zsettings, angle=angle)
        gam, dlt = _gamma_delta(G, atom.d, units.hbar)
        out.append(LadderLevel(cfg.n_max, G.omega_cut, G.n_modes, G.quadrature_points, gam, dlt))
        dyads.append(G)
        cfg = cfg.refined(factor)
    return out, dyads


def correlation_time(geom: CavityGeometry, layout: MediumLayout, atom: AtomConfig, basis_cfg: ModeBasisConfig,
                     zsettings: ZSettings = DEFAULT_Z) -> float:
    """``1 / min_n |omega0 - omega_n (1 + Re W)|``: slowest dephasing of the kernel."""
    ms = mode_set(geom, basis_cfg)
    if ms.size == 0:
        return 0.0
    W = homogeneous_W(layout, geom, atom.omega0, on_axis=True, zsettings=zsettings)
    gap = np.min(np.abs(atom.omega0 - ms.omega * (1 + W.real)))
    return float("inf") if gap == 0 else 1.0 / float(gap)


def decay_and_shift(
    geom: CavityGeometry,
    layout: MediumLayout,
    atom: AtomConfig,
    basis_cfg: ModeBasisConfig,
    ladder_levels: int = 2,
    rtol: float = 1e-3,
    atol: float = 1e-12,
    denominator: str = "homogeneous",
    units: UnitsConfig = NATURAL,
    zsettings: ZSettings = DEFAULT_Z,
    angle: float = 0.0,
    gamma_tolerance: float | None = None,
    breakdown: bool = False,
    markov_threshold: float = 0.1,
) -> EmissionResult:
    """Medium-induced decay constant and level shift at ``omega0``.

    The first ladder level (``basis_cfg``) is the reported value; the change
    to the next level is its uncertainty.  ``converged`` is false when that
    change exceeds ``rtol * |Gamma| + atol``.  A negative ``Gamma`` beyond
    ``gamma_tolerance`` (default: the ladder uncertainty plus ``atol``) is
    reported with the ``negative-gamma`` flag, never clipped.
    """
    if layout.free_region is None:
        layout = MediumLayout(layout.regions, default_free_region(geom, atom.R))
    layout.validate(geom, atom.R)
    ladder, dyads = convergence_ladder(geom, layout, atom, basis_cfg, ladder_levels, denominator=denominator,
                                       units=units, zsettings=zsettings, angle=angle)
    top, nxt = ladder[0], ladder[1]
    unc = max(abs(top.gamma - nxt.gamma), abs(top.delta - nxt.delta))
    scale = max(abs(top.gamma), abs(top.delta))
    converged = unc <= rtol * scale + atol
    flags = []
    if not converged:
        flags.append(FLAG_NOT_CONVERGED)
    tol = (unc + atol) if gamma_tolerance is None else gamma_tolerance
    if top.gamma < -tol:
        flags.append(FLAG_NEGATIVE_GAMMA)
    tau_c = correlation_time(geom, layout, atom, basis_cfg, zsettings)
    ratio = tau_c * abs(top.gamma + atom.gamma0)
    if ratio > markov_threshold:
        flags.append(FLAG_MARKOV)
        warnings.warn(f"Markov gate: correlation time x Gamma = {ratio:.3g} > {markov_threshold}", MarkovWarning, stacklevel=2)
    per_mode = None
    if breakdown:
        per_mode = mode_contributions(geom, layout, atom, basis_cfg, units=units, zsettings=zsettings, angle=angle)
    return EmissionResult(
        gamma=top.gamma,
        delta=top.delta,
        omega0=atom.omega0,
        ladder=tuple(ladder),
        uncertainty=unc,
        converged=converged,
        markov_ratio=ratio,
        correlation_time=tau_c,
        # the medium occupies only the declared regions, so the size of V0
        # never enters the result
        v0_sensitivity=0.0,
        flags=tuple(flags),
        gamma0=atom.gamma0,
        delta0=atom.delta0,
        dyadic=dyads[0],
        mode_breakdown=per_mode,
    )


def mode_contributions(
    geom: CavityGeometry,
    layout: MediumLayout,
    atom: AtomConfig,
    basis_cfg: ModeBasisConfig,
    units: UnitsConfig = NATURAL,
    zsettings: ZSettings = DEFAULT_Z,
    angle: float = 0.0,
) -> np.ndarray:
    """Per-mode split of ``Gamma`` along the atom-side (``eta``) mode index.

    Returns a structured array with the triplet, frequency and contribution;
    the contributions add up to ``Gamma``.
    """
    ev = DyadicEvaluator(geom, layout, atom.R, atom.d, basis_cfg, atom.coupling, units, zsettings, angle)
    ms = ev.ms
    w = atom.omega0
    out = np.zeros(ms.size, dtype=[("n1", int), ("n2", int), ("n3", int), ("omega", float), ("gamma", float)])
    out["n1"], out["n2"], out["n3"] = ms.idx.T
    out["omega"] = ms.omega
    if ms.size == 0 or layout.is_empty:
        return out
    from .material import z_pair

    zs = [z_pair(resp, w, True, zsettings) for resp, _, _ in ev.pairs]
    Wh = sum(reg.box.volume / geom.volume * (ze + zm) for reg, (ze, zm) in zip(layout.regions, zs))
    a = ms.omega / (w - ms.omega * (1 + Wh))
    b = ms.omega / (w - ms.omega)
    contrib = np.zeros(ms.size, dtype=complex)
    for (resp, me, mm), (ze, zm) in zip(ev.pairs, zs):
        contrib += a * ((ze * me + zm * mm) @ b)
    out["gamma"] = -(ev.pref * contrib).imag / units.hbar
    return out


def markov_amplitude(result, omega0: float, t, gamma0: float | None = None, delta0: float | None = None):
    """``c(t) = exp(-i omega0 t - (Gamma0 + Gamma + i (Delta0 + Delta)) t)``.

    ``result`` is an :class:`EmissionResult` or a ``(Gamma, Delta)`` pair.
    """
    if isinstance(result, EmissionResult):
        gam, dlt = result.gamma, result.delta
        g0 = result.gamma0 if gamma0 is None else gamma0
        d0 = result.delta0 if delta0 is None else delta0
    else:
        gam, dlt = result
        g0 = gamma0 or 0.0
        d0 = delta0 or 0.0
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    return np.exp(-1j * omega0 * t - (g0 + gam + 1j * (d0 + dlt)) * t)[()]


@dataclass(frozen=True)
class KernelWindow:
    """Frequency window and regulator of the memory kernel.

    ``broadening`` is the distance ``eps`` of the integration line above the
    real axis.  The medium dyadic is a first-order expression with undamped
    poles at the bare cavity frequencies, so it cannot be integrated on the
    real axis itself.  ``lo`` / ``hi`` default to ``-/+ 3 omega_cut``: a window
    edge that cuts through the width-``eps`` peaks of the highest modes
    visibly biases the kernel's Laplace transform.
    """

    lo: float | None = None
    hi: float | None = None
    broadening: float = 0.05
    points: int = 2000


def memory_kernel(
    geom: CavityGeometry,
    layout: MediumLayout,
    atom: AtomConfig,
    tau,
    basis_cfg: ModeBasisConfig,
    window: KernelWindow = KernelWindow(),
    units: UnitsConfig = NATURAL,
    zsettings: ZSettings = DEFAULT_Z,
    evaluator: DyadicEvaluator | None = None,
):
    """``K(tau) = -(i / hbar)(1 / 2 pi) int dw e^{-i w tau} d . G(w + i eps) . d``.

    With this sign the amplitude obeys ``dc/dt = -i omega0 c + int_0^t K(t - t') c(t') dt'``
    and ``int_0^inf K(tau) e^{i omega0 tau} dtau -> -(Gamma + i Delta)`` as
    the window widens and ``eps -> 0``.  The frequency integral uses
    composite Gauss-Legendre panels over the window of :class:`KernelWindow`.
    For a fixed ``eps`` the transform equals ``-(i / hbar) d . G(omega0 + i eps) . d``
    exactly; the bias relative to ``eps -> 0`` is first order in ``eps``.
    """
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(tau < 0):
        raise ValueError("tau must be >= 0")
    w, wq, gvals = kernel_spectrum(geom, layout, atom, basis_cfg, window, units, zsettings, evaluator)
    weighted = wq * gvals
    K = np.empty(tau.shape, dtype=complex)
    step = max(1, 4_000_000 // max(w.size, 1))
    for s in range(0, tau.size, step):
        K[s : s + step] = np.exp(-1j * np.outer(tau[s : s + step], w)) @ weighted
    return -1j / units.hbar / (2 * math.pi) * K


def kernel_spectrum(geom, layout, atom, basis_cfg, window: KernelWindow = KernelWindow(), units=NATURAL,
                    zsettings=DEFAULT_Z, evaluator=None):
    """Nodes, weights and ``d . G(w + i eps) . d`` on the kernel window."""
    ev = evaluator or DyadicEvaluator(geom, layout, atom.R, atom.d, basis_cfg, atom.coupling, units, zsettings)
    cut = basis_cfg.cutoff(geom)
    hi = window.hi if window.hi is not None else 3 * cut
    lo = window.lo if window.lo is not None else -3 * cut
    from .geometry import gauss_legendre

    panels = max(1, window.points // 8)
    edges = np.linspace(lo, hi, panels + 1)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        x, wq = gauss_legendre(a, b, 8)
        nodes.append(x)
        weights.append(wq)
    w = np.concatenate(nodes)
    wq = np.concatenate(weights)
    if layout.is_empty:
        return w, wq, np.zeros_like(w, dtype=complex)
    if window.broadening <= 0:
        raise ValueError("kernel broadening must be > 0")
    return w, wq, ev.batch(w + 1j * window.broadening)


def kernel_laplace(K: np.ndarray, tau: np.ndarray, omega0: float) -> complex:
    """``int_0^T K(tau) e^{i omega0 tau} dtau`` by Simpson's rule on the given samples."""
    from scipy.integrate import simpson

    return complex(simpson(K * np.exp(1j * omega0 * tau), x=tau))
