"""Causal susceptibilities, medium coupling functions and Z transforms.

The medium is described by Lorentz oscillators

    chi(omega) = wp2 / (wT^2 - omega^2 - i gamma omega)

(one term or a sum of terms).  From a susceptibility the module derives

* the time-domain memory function ``chi(t)`` (zero for ``t <= 0``),
* the squared coupling functions ``|f(omega)|^2`` and ``|g(omega)|^2`` of the
  electric and magnetic oscillator continua, obtained by inverting the
  sine-transform relation between ``chi(t)`` and the coupling,
* the half-line Cauchy transform
  ``Z(w) = (1 / 2 pi) int_0^inf chi_i(x) / (w - x) dx`` of the imaginary part,
  including its boundary value on the positive real axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .units import NATURAL, UnitsConfig


class MaterialError(ValueError):
    pass


@dataclass(frozen=True)
class LorentzModel:
    plasma_strength: float  # wp^2
    resonance: float  # wT
    damping: float  # gamma

    def __post_init__(self):
        if not self.plasma_strength >= 0:
            raise MaterialError("plasma_strength must be >= 0")
        if not self.resonance > 0:
            raise MaterialError("resonance frequency must be > 0")
        if not self.damping > 0:
            raise MaterialError("damping must be > 0 (the medium must absorb)")

    @property
    def terms(self) -> tuple["LorentzModel", ...]:
        return (self,)

    @property
    def static(self) -> float:
        return self.plasma_strength / self.resonance**2

    def chi(self, omega):
        omega = np.asarray(omega, dtype=float)
        return self.plasma_strength / (self.resonance**2 - omega**2 - 1j * self.damping * omega)

    def chi_imag(self, omega):
        omega = np.asarray(omega, dtype=float)
        wt2 = self.resonance**2
        return self.plasma_strength * self.damping * omega / ((wt2 - omega**2) ** 2 + (self.damping * omega) ** 2)

    def chi_t(self, t):
        t = np.asarray(t, dtype=float)
        g2 = 0.5 * self.damping
        disc = self.resonance**2 - g2**2
        tp = np.where(t > 0, t, 0.0)
        if disc > 0:
            w = math.sqrt(disc)
            body = np.sin(w * tp) / w
        elif disc < 0:
            # overdamped: analytic continuation sin(i x)/i -> sinh(x)
            w = math.sqrt(-disc)
            body = np.sinh(w * tp) / w
        else:
            body = tp
        return np.where(t > 0, self.plasma_strength * np.exp(-g2 * tp) * body, 0.0)

    def tail_coefficient(self) -> float:
        """``C`` in ``chi_i(x) ~ C / x^3`` for ``x -> inf``."""
        return self.plasma_strength * self.damping

    def tail_coefficient5(self) -> float:
        """Next term ``D / x^5`` of the large-``x`` expansion of ``chi_i``."""
        return -self.tail_coefficient() * (self.damping**2 - 2 * self.resonance**2)

    def scale(self) -> float:
        return self.resonance


@dataclass(frozen=True)
class MultiLorentz:
    """Additive multi-resonance susceptibility."""

    terms: tuple[LorentzModel, ...]

    def __post_init__(self):
        if not self.terms:
            raise MaterialError("MultiLorentz needs at least one term")
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def static(self) -> float:
        return sum(t.static for t in self.terms)

    def chi(self, omega):
        return sum(t.chi(omega) for t in self.terms)

    def chi_imag(self, omega):
        return sum(t.chi_imag(omega) for t in self.terms)

    def chi_t(self, t):
        return sum(term.chi_t(t) for term in self.terms)

    def tail_coefficient(self) -> float:
        return sum(t.tail_coefficient() for t in self.terms)

    def tail_coefficient5(self) -> float:
        return sum(t.tail_coefficient5() for t in self.terms)

    def scale(self) -> float:
        return max(t.resonance for t in self.terms)


@dataclass(frozen=True)
class SusceptibilityPair:
    """Electric and magnetic response of one homogeneous piece; ``None`` means zero."""

    electric: LorentzModel | MultiLorentz | None = None
    magnetic: LorentzModel | MultiLorentz | None = None

    @property
    def is_zero(self) -> bool:
        return _is_zero(self.electric) and _is_zero(self.magnetic)


def _is_zero(model) -> bool:
    return model is None or all(t.plasma_strength == 0 for t in model.terms)


# -- frequency and time domain --------------------------------------------------


def chi_freq(model, omega):
    """Frequency-domain susceptibility; zero model gives 0."""
    if model is None:
        return np.zeros_like(np.asarray(omega, dtype=float), dtype=complex)[()]
    return model.chi(omega)[()]


def chi_time(model, t):
    """Memory function ``chi(t)``; exactly 0 for ``t <= 0``."""
    if model is None:
        return np.zeros_like(np.asarray(t, dtype=float))[()]
    return model.chi_t(t)[()]


def chi_imag(model, omega):
    if model is None:
        return np.zeros_like(np.asarray(omega, dtype=float))[()]
    return model.chi_imag(omega)[()]


# -- coupling functions --------------------------------------------------------


def _sine_transform(model, omega: np.ndarray) -> np.ndarray:
    # int_0^inf chi(t) sin(omega t) dt = Im chi(omega) for a causal chi(t)
    return np.asarray(chi_imag(model, omega), dtype=float)


def coupling_f_squared(model, omega, units: UnitsConfig = NATURAL):
    """``|f(omega)|^2 = hbar c^3 eps0 / (4 pi^2 omega^2) int_0^inf chi_e(t) sin(omega t) dt``.

    Zero at ``omega = 0``; negative frequencies are rejected.
    """
    return _coupling_sq(model, omega, units.hbar * units.c**3 * units.eps0)


def coupling_g_squared(model, omega, units: UnitsConfig = NATURAL):
    """Magnetic analog: ``hbar c^3 / (4 pi^2 mu0 omega^2) int chi_m(t) sin(omega t) dt``."""
    return _coupling_sq(model, omega, units.hbar * units.c**3 / units.mu0)


def _coupling_sq(model, omega, prefactor: float):
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise MaterialError("coupling functions are defined for omega >= 0 only")
    safe = np.where(w > 0, w, 1.0)
    val = prefactor / (4 * math.pi**2 * safe**2) * _sine_transform(model, safe)
    return np.where(w > 0, val, 0.0)[()]


def susceptibility_from_coupling(coupling_sq, t, prefactor: float = 1.0, epsabs: float = 1e-13) -> np.ndarray:
    """Forward map ``chi(t) = (8 pi / prefactor) int_0^inf w^2 |f(w)|^2 sin(w t) dw``.

    ``coupling_sq`` is a callable returning ``|f|^2``; ``prefactor`` is
    ``hbar c^3 eps0`` (electric) or ``hbar c^3 / mu0`` (magnetic).  The
    oscillatory half-line integral uses QUADPACK's Fourier-weighted rule.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    for i, ti in enumerate(t):
        if ti <= 0:
            continue
        val, _ = integrate.quad(lambda w: w * w * coupling_sq(w), 0.0, np.inf, weight="sin", wvar=ti, epsabs=epsabs, limlst=200)
        out[i] = 8 * math.pi / prefactor * val
    return out


# -- Z transform ---------------------------------------------------------------


@dataclass(frozen=True)
class ZSettings:
    """Numerical knobs of the Z transform.

    ``tail_factor``: the integral is done numerically up to
    ``tail_factor * max(scale, |w|)`` and analytically beyond, using the
    ``C / x^3`` decay of Lorentz absorption.  ``pv_window``: half-width of the
    singularity-subtraction window around the pole, in units of ``omega``.
    """

    tail_factor: float = 50.0
    pv_window: float = 0.5
    epsabs: float = 1e-13
    epsrel: float = 1e-11
    limit: int = 400


DEFAULT_Z = ZSettings()


def _tail(model, w, X):
    # chi_i ~ C / x^3 + D / x^5, and int_X^inf x^-p / (w - x) dx = -sum_k w^k / ((p + k) X^(p + k))
    C = model.tail_coefficient()
    D = model.tail_coefficient5()
    return -C * (1 / (3 * X**3) + w / (4 * X**4) + w * w / (5 * X**5)) - D * (1 / (5 * X**5) + w / (6 * X**6))


def pv_alpha(model, omega: float, settings: ZSettings = DEFAULT_Z) -> float:
    """``alpha(omega) = (1 / 2 pi) PV int_0^inf chi_i(x) / (omega - x) dx``.

    For ``omega > 0`` the pole is removed by subtracting ``chi_i(omega)``
    inside a symmetric window ``|x - omega| < h`` where the principal value of
    ``1 / (omega - x)`` vanishes.
    """
    if _is_zero(model):
        return 0.0
    omega = float(omega)
    X = settings.tail_factor * max(model.scale(), abs(omega))
    f = model.chi_imag
    kw = dict(epsabs=settings.epsabs, epsrel=settings.epsrel, limit=settings.limit)
    if omega <= 0:
        val, _ = integrate.quad(lambda x: f(x) / (omega - x), 0.0, X, **kw)
        return (val + _tail(model, omega, X)) / (2 * math.pi)
    h = min(settings.pv_window * omega, omega)
    fo = float(f(omega))

    def sub(x):
        return (f(x) - fo) / (omega - x)

    total = 0.0
    if omega - h > 0:
        total += integrate.quad(lambda x: f(x) / (omega - x), 0.0, omega - h, **kw)[0]
    total += integrate.quad(sub, omega - h, omega, **kw)[0]
    total += integrate.quad(sub, omega, omega + h, **kw)[0]
    total += integrate.quad(lambda x: f(x) / (omega - x), omega + h, X, points=None, **kw)[0]
    return (total + _tail(model, omega, X)) / (2 * math.pi)


def z_function(model, w, on_axis: bool = False, settings: ZSettings = DEFAULT_Z) -> complex:
    """Half-line Cauchy transform of ``chi_i`` at complex ``w``.

    Off the positive real axis the integral is evaluated directly.  With
    ``on_axis=True`` the argument is read as ``omega + i0+`` (``omega`` real)
    and the boundary value ``alpha(omega) - (i/2) chi_i(omega) theta(omega)``
    is returned.
    """
    if _is_zero(model):
        return 0j
    w = complex(w)
    if on_axis:
        if w.imag != 0:
            raise MaterialError("on-axis evaluation expects a real frequency")
        om = w.real
        gam = -0.5 * float(model.chi_imag(om)) if om > 0 else 0.0
        return complex(pv_alpha(model, om, settings), gam)
    if w.imag == 0 and w.real > 0:
        raise MaterialError("w on the positive real axis: pass on_axis=True to request the omega + i0+ limit")
    X = settings.tail_factor * max(model.scale(), abs(w))
    f = model.chi_imag
    kw = dict(epsabs=settings.epsabs, epsrel=settings.epsrel, limit=settings.limit)
    pts = []
    if 0 < w.real < X:
        width = max(abs(w.imag), 1e-12)
        pts = sorted({p for p in (w.real - 10 * width, w.real, w.real + 10 * width) if 0 < p < X})

    def g(x):
        return f(x) / (w - x)

    val = integrate.quad(g, 0.0, X, complex_func=True, points=pts or None, **kw)[0]
    return complex((val + _tail(model, w, X)) / (2 * math.pi))


def z_pair(pair: SusceptibilityPair, w, on_axis: bool = False, settings: ZSettings = DEFAULT_Z) -> tuple[complex, complex]:
    return (
        z_function(pair.electric, w, on_axis, settings),
        z_function(pair.magnetic, w, on_axis, settings),
    )


def kk_real_part(model, omega: float, settings: ZSettings = DEFAULT_Z) -> float:
    """Re chi(omega) rebuilt from Im chi by the Kramers-Kronig PV integral.

    Uses ``Re chi(omega) = (1/pi) PV int_0^inf chi_i(x) [1/(x - omega) + 1/(x + omega)] dx
    = -2 [alpha(omega) + alpha(-omega)]``.
    """
    return -2.0 * (pv_alpha(model, omega, settings) + pv_alpha(model, -omega, settings))


def z_function_batch(model, w, nodes: int = 4000, settings: ZSettings = DEFAULT_Z) -> np.ndarray:
    """Vectorised ``Z`` for many points strictly above the real axis.

    Uses subtraction of ``chi_i(Re w)`` and the exact integral of
    ``1 / (w - x)`` so that a fixed composite Gauss-Legendre grid on
    ``[0, X]`` stays accurate when ``Im w`` is small.  Intended for frequency
    scans; :func:`z_function` is the adaptive reference.
    """
    w = np.asarray(w, dtype=complex)
    if _is_zero(model):
        return np.zeros_like(w)
    if np.any(w.imag <= 0):
        raise MaterialError("z_function_batch needs Im w > 0")
    X = settings.tail_factor * max(model.scale(), float(np.max(np.abs(w))))
    # panels graded towards the resonance region, where chi_i varies fastest
    edges = np.unique(np.concatenate([np.linspace(0.0, 4 * model.scale(), nodes // 16 + 1), np.geomspace(4 * model.scale(), X, 33)]))
    xs, ws = [], []
    gx, gw = np.polynomial.legendre.leggauss(12)
    for a, b in zip(edges[:-1], edges[1:]):
        xs.append(0.5 * (b - a) * gx + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * gw)
    x = np.concatenate(xs)
    wx = np.concatenate(ws)
    fx = model.chi_imag(x)
    f0 = np.where(w.real > 0, model.chi_imag(np.where(w.real > 0, w.real, 1.0)), 0.0)
    out = np.empty(w.shape, dtype=complex)
    flat_w, flat_f0 = w.ravel(), f0.ravel()
    res = out.ravel()
    chunk = max(1, 2_000_000 // x.size)
    for s in range(0, flat_w.size, chunk):
        ww = flat_w[s : s + chunk, None]
        ff = flat_f0[s : s + chunk, None]
        body = ((fx[None, :] - ff) / (ww - x[None, :])) @ wx
        exact = ff[:, 0] * (np.log(ww[:, 0]) - np.log(ww[:, 0] - X))
        res[s : s + chunk] = body + exact
    out = res.reshape(w.shape)
    return (out + _tail(model, w, X)) / (2 * math.pi)
