"""Time-domain Weisskopf-Wigner simulation of the excited atom.

The one-excitation state is

    |psi> = c |2,vac> + sum F_{n lam} |1, photon n lam> + sum D |1, E-quantum> + sum M |1, M-quantum>,

and the amplitudes obey a linear Hermitian system (rotating-wave
approximation).  Two reductions make the medium continuum finite:

* Frequency: the ``d^3k`` integral over medium quanta depends on ``k`` only
  through ``omega_k = c |k|``, so it becomes ``(4 pi / c^3) int omega^2 d omega``
  and is sampled on Gauss-Legendre bins over ``[omega0 - B, omega0 + B]``.
* Space: the photon modes couple to the medium modes of region ``i`` only
  through the region Gram matrix ``S = (8/V) int_i u . u'``.  Writing
  ``S = U diag(lam) U^T`` gives one effective medium mode per nonzero
  eigenvalue, reproducing exactly the coupling obtained from a complete set
  of medium mode functions.

The medium outside the band still shifts the photon frequencies; that part is
added as a static Hermitian photon-photon term evaluated at ``omega0``
(``out_of_band=True``).
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as _quad

from .coupling import MediumLayout, default_free_region, gram_matrix
from .emission import AtomConfig
from .geometry import CavityGeometry, ModeBasisConfig, gauss_legendre, mode_set, profile_functions
from .material import DEFAULT_Z, ZSettings, coupling_f_squared, coupling_g_squared, pv_alpha
from .units import NATURAL, UnitsConfig


class IntegrationError(RuntimeError):
    """Norm drift beyond tolerance: the integrator is misconfigured."""


class NonMarkovianError(RuntimeError):
    """The decay curve shows revivals; no single exponential rate exists."""


@dataclass(frozen=True, eq=False)
class ContinuumDiscretization:
    nodes: np.ndarray
    weights: np.ndarray
    lo: float
    hi: float

    @property
    def bins(self) -> int:
        return self.nodes.size

    @property
    def bandwidth(self) -> float:
        return 0.5 * (self.hi - self.lo)

    def effective_coupling(self, model, kind: str = "e", units: UnitsConfig = NATURAL) -> np.ndarray:
        """Per-bin amplitude ``q_j = f(omega_j) omega_j sqrt(4 pi w_j / c^3)`` (``g`` for ``kind='m'``)."""
        if model is None:
            return np.zeros(self.bins)
        fsq = coupling_f_squared(model, self.nodes, units) if kind == "e" else coupling_g_squared(model, self.nodes, units)
        return np.sqrt(fsq) * self.nodes * np.sqrt(4 * math.pi * self.weights / units.c**3)


def build_discretization(omega0: float, bandwidth: float, bins: int, panel_size: int = 16) -> ContinuumDiscretization:
    """Composite Gauss-Legendre bins on ``[omega0 - B, omega0 + B]``.

    ``bins`` nodes in total, split into panels of at most ``panel_size``.
    """
    if bins < 2:
        raise ValueError("need at least 2 bins")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be > 0")
    lo, hi = omega0 - bandwidth, omega0 + bandwidth
    if lo <= 0:
        raise ValueError(f"band [{lo:g}, {hi:g}] reaches omega <= 0")
    panels = max(1, math.ceil(bins / panel_size))
    base, extra = divmod(bins, panels)
    edges = np.linspace(lo, hi, panels + 1)
    nodes, weights = [], []
    for p in range(panels):
        x, w = gauss_legendre(edges[p], edges[p + 1], base + (1 if p < extra else 0))
        nodes.append(x)
        weights.append(w)
    return ContinuumDiscretization(np.concatenate(nodes), np.concatenate(weights), lo, hi)


@dataclass(frozen=True, eq=False)
class MediumBlock:
    """One region/kind: photon-to-effective-mode matrix ``A`` (P, r) and bin couplings ``q`` (J,)."""

    A: np.ndarray
    q: np.ndarray

    @property
    def rank(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True, eq=False)
class WWSystem:
    """Hermitian generator (per hbar) in the frame rotating at ``omega0``."""

    omega0: float
    photon_omega: np.ndarray  # (P,)
    atom_coupling: np.ndarray  # g_n, amplitude of F driven by c, (P,)
    photon_static: np.ndarray | None  # (P, P) Hermitian out-of-band shift, or None
    bins: np.ndarray  # (J,)
    blocks: tuple

    @property
    def n_photon(self) -> int:
        return self.photon_omega.size

    @property
    def size(self) -> int:
        return 1 + self.n_photon + sum(b.rank * self.bins.size for b in self.blocks)

    def _slices(self):
        P, J = self.n_photon, self.bins.size
        start = 1 + P
        out = []
        for b in self.blocks:
            out.append(slice(start, start + b.rank * J))
            start += b.rank * J
        return out

    def apply(self, y: np.ndarray) -> np.ndarray:
        """``H y`` with ``H`` the rotating-frame generator (``i dy/dt = H y``)."""
        P, J = self.n_photon, self.bins.size
        out = np.empty_like(y)
        c = y[0]
        F = y[1 : 1 + P]
        dw_p = self.photon_omega - self.omega0
        dw_j = self.bins - self.omega0
        out[0] = np.vdot(self.atom_coupling, F)
        yF = dw_p * F + self.atom_coupling * c
        if self.photon_static is not None:
            yF = yF + self.photon_static @ F
        for b, sl in zip(self.blocks, self._slices()):
            D = y[sl].reshape(b.rank, J)
            yF = yF + b.A @ (D @ b.q)
            out[sl] = (dw_j[None, :] * D + np.outer(b.A.conj().T @ F, b.q.conj())).ravel()
        out[1 : 1 + P] = yF
        return out

    def dense(self) -> np.ndarray:
        """Explicit matrix, for Hermiticity checks on small truncations."""
        n = self.size
        H = np.zeros((n, n), dtype=complex)
        e = np.zeros(n, dtype=complex)
        for k in range(n):
            e[k] = 1.0
            H[:, k] = self.apply(e)
            e[k] = 0.0
        return H

    def spectral_radius_bound(self) -> float:
        """Cheap upper bound on ``||H||`` (max row sum of the block structure)."""
        bound = np.max(np.abs(self.photon_omega - self.omega0)) if self.n_photon else 0.0
        bound = max(bound, np.max(np.abs(self.bins - self.omega0)))
        extra = np.linalg.norm(self.atom_coupling)
        if self.photon_static is not None:
            extra += np.linalg.norm(self.photon_static, 2)
        for b in self.blocks:
            extra += np.linalg.norm(b.A, 2) * np.linalg.norm(b.q)
        return float(bound + extra)


def atom_photon_coupling(geom, ms, atom: AtomConfig, units: UnitsConfig = NATURAL, angle: float = 0.0) -> np.ndarray:
    """``g_{n lam} = i e sqrt(4 omega_n / (hbar eps0 V)) d . u_{n lam}(R) t_n``, flattened (P,)."""
    fR = profile_functions(geom, ms.idx, atom.R[None, :], "f")[:, :, 0]  # (3, N)
    pol = ms.polarizations()  # (N, 2, 3)
    du = np.einsum("a,nla,an->nl", atom.d, pol, fR) * ms.taper[:, None]
    amp = math.sqrt(atom.coupling) * np.sqrt(4 * ms.omega / (units.hbar * units.eps0 * geom.volume))
    return (1j * amp[:, None] * du).ravel()


def _effective_modes(S: np.ndarray, rel_tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    lam, U = np.linalg.eigh(0.5 * (S + S.T))
    keep = lam > rel_tol * max(lam.max(initial=0.0), 1e-300)
    return lam[keep], U[:, keep]


def band_alpha(model, omega0: float, lo: float, hi: float) -> float:
    """``(1/2 pi) PV int_lo^hi chi_i(x) / (omega0 - x) dx`` (in-band part of Re Z)."""
    if model is None:
        return 0.0
    if lo < omega0 < hi:
        val, _ = _quad.quad(model.chi_imag, lo, hi, weight="cauchy", wvar=omega0, epsabs=1e-13, epsrel=1e-11, limit=400)
        return -val / (2 * math.pi)
    val, _ = _quad.quad(lambda x: model.chi_imag(x) / (omega0 - x), lo, hi, epsabs=1e-13, limit=400)
    return val / (2 * math.pi)


def assemble(
    geom: CavityGeometry,
    layout: MediumLayout,
    atom: AtomConfig,
    disc: ContinuumDiscretization,
    basis_cfg: ModeBasisConfig,
    photon_window: float | None = None,
    out_of_band: bool = True,
    units: UnitsConfig = NATURAL,
    zsettings: ZSettings = DEFAULT_Z,
    angle: float = 0.0,
) -> WWSystem:
    """Build the amplitude equations for one atom and layout.

    ``photon_window`` keeps only photon modes with ``|omega_n - omega0|`` at
    most that value; ``None`` keeps the whole truncated set.  Below the lowest
    cavity resonance every mode is off-resonant and they all mediate the
    medium-induced decay, so dropping them changes the answer.
    """
    if layout.free_region is None:
        layout = MediumLayout(layout.regions, default_free_region(geom, atom.R))
    layout.validate(geom, atom.R)
    ms = mode_set(geom, basis_cfg, angle=angle)
    if photon_window is not None:
        ms = _restrict(ms, atom.omega0, photon_window)
    V = geom.volume
    npts = basis_cfg.quadrature_points
    omega_p = np.repeat(ms.omega, 2)
    g_atom = atom_photon_coupling(geom, ms, atom, units, angle)
    blocks = []
    static = np.zeros((omega_p.size, omega_p.size))
    sq = np.sqrt(omega_p)
    for reg in layout.regions:
        for kind, model in (("e", reg.response.electric), ("m", reg.response.magnetic)):
            if model is None or all(t.plasma_strength == 0 for t in model.terms):
                continue
            S = gram_matrix(geom, ms, reg.box, "u" if kind == "e" else "s", npts).reshape(omega_p.size, omega_p.size)
            lam, U = _effective_modes(S)
            if kind == "e":
                pref = 1j * np.sqrt(32 * units.hbar * omega_p / (units.eps0 * V**2))
                sign = 1.0
            else:
                pref = np.sqrt(32 * units.hbar * units.mu0 * omega_p / V**2) + 0j
                sign = -1.0
            A = sign * (pref[:, None] * (V / 8) * np.sqrt(lam)[None, :] * U) / units.hbar
            q = disc.effective_coupling(model, kind, units)
            blocks.append(MediumBlock(A, q))
            if out_of_band:
                a_out = pv_alpha(model, atom.omega0, zsettings) - band_alpha(model, atom.omega0, disc.lo, disc.hi)
                static += a_out * (sq[:, None] * S * sq[None, :])
    return WWSystem(
        omega0=atom.omega0,
        photon_omega=omega_p,
        atom_coupling=g_atom,
        photon_static=static if out_of_band and blocks else None,
        bins=disc.nodes,
        blocks=tuple(blocks),
    )


def _restrict(ms, omega0, window):
    from .geometry import ModeSet

    keep = np.abs(ms.omega - omega0) <= window
    return ModeSet(ms.geom, ms.omega_cut, ms.idx[keep], ms.k[keep], ms.omega[keep], ms.e1[keep], ms.e2[keep], ms.smearing)


@dataclass(frozen=True, eq=False)
class Trajectory:
    t: np.ndarray
    c: np.ndarray  # lab-frame atom amplitude
    norm: np.ndarray
    dt: float

    @property
    def population(self) -> np.ndarray:
        return np.abs(self.c) ** 2

    @property
    def max_norm_drift(self) -> float:
        return float(np.max(np.abs(self.norm - 1.0)))

    def to_csv(self, path) -> None:
        """Write ``t, Re c, Im c, |c|^2, norm`` atomically."""
        path = os.fspath(path)
        d = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["t", "re_c", "im_c", "abs_c2", "norm"])
                for row in zip(self.t, self.c.real, self.c.imag, self.population, self.norm):
                    w.writerow([repr(float(v)) for v in row])
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def integrate(
    system: WWSystem,
    t_end: float,
    dt: float | None = None,
    samples: int = 400,
    norm_abort: float = 1e-6,
) -> Trajectory:
    """Classical RK4 from ``c(0) = 1`` in the frame rotating at ``omega0``.

    ``dt`` defaults to ``0.05 / omega_max`` with ``omega_max`` a bound on the
    rotating-frame generator; a larger ``dt`` is rejected.  The run aborts
    with :class:`IntegrationError` once ``| ||y||^2 - 1 |`` exceeds
    ``norm_abort``.
    """
    wmax = system.spectral_radius_bound()
    dt_max = 0.05 / wmax if wmax > 0 else t_end
    if dt is None:
        dt = dt_max
    elif dt > dt_max * (1 + 1e-12):
        raise ValueError(f"dt = {dt:g} does not resolve the fastest frequency (need dt <= {dt_max:g})")
    steps = max(1, int(math.ceil(t_end / dt)))
    dt = t_end / steps
    every = max(1, steps // samples)
    y = np.zeros(system.size, dtype=complex)
    y[0] = 1.0
    f = system.apply
    ts, cs, ns = [0.0], [1.0 + 0j], [1.0]
    for k in range(1, steps + 1):
        k1 = -1j * f(y)
        k2 = -1j * f(y + 0.5 * dt * k1)
        k3 = -1j * f(y + 0.5 * dt * k2)
        k4 = -1j * f(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if k % every == 0 or k == steps:
            t = k * dt
            nrm = float(np.vdot(y, y).real)
            if abs(nrm - 1.0) > norm_abort:
                raise IntegrationError(f"norm drift {nrm - 1.0:.3e} at t = {t:g} exceeds {norm_abort:g}; reduce dt")
            ts.append(t)
            cs.append(y[0] * np.exp(-1j * system.omega0 * t))
            ns.append(nrm)
    return Trajectory(np.array(ts), np.array(cs), np.array(ns), dt)


@dataclass(frozen=True)
class DecayFit:
    rate: float  # amplitude rate: |c|^2 ~ exp(-2 rate t)
    intercept: float
    residual: float
    points: int
    conclusive: bool  # |c|^2 fell below 0.5 inside the window

    @property
    def population_rate(self) -> float:
        return 2.0 * self.rate


def fit_decay(traj: Trajectory, window: tuple | None = None, revival_tol: float = 0.02) -> DecayFit:
    """Least-squares slope of ``log |c|^2`` over ``window = (t0, t1)``.

    A rise of ``|c|^2`` by more than ``revival_tol`` (relative) above its
    running minimum is treated as a revival and raises
    :class:`NonMarkovianError`.  If ``|c|^2`` never drops below 0.5 the
    rate is still returned, with ``conclusive=False``.
    """
    t = traj.t
    p = traj.population
    t0, t1 = (t[0], t[-1]) if window is None else window
    sel = (t >= t0) & (t <= t1)
    if sel.sum() < 3:
        raise ValueError("fit window contains fewer than 3 samples")
    ts, ps = t[sel], p[sel]
    if np.any(ps <= 0):
        raise NonMarkovianError("|c|^2 reached zero inside the fit window")
    running_min = np.minimum.accumulate(ps)
    if np.any(ps - running_min > revival_tol * running_min):
        raise NonMarkovianError("non-Markovian regime: |c(t)|^2 shows revivals inside the fit window")
    y = np.log(ps)
    A = np.vstack([ts, np.ones_like(ts)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ np.array([slope, icpt]) - y) ** 2)))
    rate = -0.5 * float(slope)
    if abs(rate) < 1e-300:
        rate = 0.0
    return DecayFit(rate, float(icpt), resid, int(sel.sum()), bool(ps.min() < 0.5))


def medium_induced(traj: Trajectory, bare: Trajectory) -> Trajectory:
    """Ratio ``c(t) / c_bare(t)`` of a run to the same run without the medium.

    The bare run carries the atom's dressing by the discrete cavity modes,
    which the spectral route books separately (``gamma0``, ``delta0``).  Both
    trajectories must share their sample times.
    """
    if traj.t.shape != bare.t.shape or not np.allclose(traj.t, bare.t):
        raise ValueError("trajectories are sampled at different times")
    return Trajectory(traj.t, traj.c / bare.c, traj.norm, traj.dt)


@dataclass(frozen=True)
class DynamicsConfig:
    """Settings of one time-domain run."""

    bandwidth: float = 0.5
    bins: int = 160
    t_end: float = 600.0
    dt: float | None = None
    samples: int = 400
    out_of_band: bool = True
    photon_window: float | None = None
    fit_start: float = 0.0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be > 0")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")
        if not self.t_end > 0:
            raise ValueError("t_end must be > 0")


def simulate(geom, layout, atom: AtomConfig, basis_cfg: ModeBasisConfig, cfg: DynamicsConfig = DynamicsConfig(),
             units: UnitsConfig = NATURAL, zsettings: ZSettings = DEFAULT_Z) -> tuple[Trajectory, DecayFit]:
    """Assemble, integrate and fit one scenario; returns the trajectory and its decay fit."""
    disc = build_discretization(atom.omega0, cfg.bandwidth, cfg.bins)
    system = assemble(geom, layout, atom, disc, basis_cfg, cfg.photon_window, cfg.out_of_band, units, zsettings)
    traj = integrate(system, cfg.t_end, cfg.dt, cfg.samples)
    return traj, fit_decay(traj, (cfg.fit_start, cfg.t_end))
