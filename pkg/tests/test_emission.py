import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdqed import emission
from mdqed.coupling import Box, MediumLayout, Region
from mdqed.emission import (
    FLAG_MARKOV,
    FLAG_NEGATIVE_GAMMA,
    FLAG_NOT_CONVERGED,
    AtomConfig,
    KernelWindow,
    LadderLevel,
    MarkovWarning,
    convergence_ladder,
    correlation_time,
    decay_and_shift,
    kernel_laplace,
    markov_amplitude,
    memory_kernel,
    mode_contributions,
)
from mdqed.geometry import CavityGeometry, ModeBasisConfig
from mdqed.green import DyadicEvaluator
from mdqed.material import LorentzModel, SusceptibilityPair

GEOM = CavityGeometry(1.0, 1.1, 1.2)
MODEL = LorentzModel(0.72, 6.0, 1.5)
LAYOUT = MediumLayout((Region(Box((0, 0, 0), (1.0, 1.1, 0.6)), SusceptibilityPair(MODEL, MODEL)),))
ATOM = AtomConfig((0.43, 0.52, 0.85), (1.0, 0.3, 0.2), 4.0, coupling=0.02)
CFG = ModeBasisConfig(n_max=6)


def _quiet(*args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MarkovWarning)
        return decay_and_shift(*args, **kwargs)


def test_atom_config_validation():
    for bad in (dict(omega0=0.0), dict(dipole=(0, 0, 0)), dict(coupling=0.0), dict(position=(1, 2))):
        kw = dict(position=(0.5, 0.5, 0.5), dipole=(0, 0, 1), omega0=1.0)
        kw.update(bad)
        with pytest.raises(ValueError):
            AtomConfig(**kw)


def test_empty_medium_gives_exact_zero():
    zero = MediumLayout((Region(Box((0, 0, 0), (1.0, 1.1, 0.6)), SusceptibilityPair()),))
    for layout in (zero, MediumLayout(())):
        res = _quiet(GEOM, layout, ATOM, CFG)
        assert res.gamma == 0.0 and res.delta == 0.0
        assert res.converged and res.flags == ()
        assert all(lv.gamma == 0.0 and lv.delta == 0.0 for lv in res.ladder)


def test_result_metadata():
    res = _quiet(GEOM, LAYOUT, ATOM, CFG, ladder_levels=3)
    assert len(res.ladder) == 3
    assert res.omega_cut == pytest.approx(CFG.cutoff(GEOM))
    assert res.quadrature_points == CFG.quadrature_points
    assert res.ladder[1].n_modes > res.ladder[0].n_modes
    assert res.uncertainty == pytest.approx(max(abs(res.ladder[0].gamma - res.ladder[1].gamma),
                                                abs(res.ladder[0].delta - res.ladder[1].delta)))
    assert res.v0_sensitivity == 0.0
    assert res.total_gamma == res.gamma
    with pytest.raises(ValueError):
        convergence_ladder(GEOM, LAYOUT, ATOM, CFG, levels=1)


def test_not_converged_flag():
    res = _quiet(GEOM, LAYOUT, ATOM, ModeBasisConfig(n_max=4), rtol=1e-9)
    assert not res.converged and FLAG_NOT_CONVERGED in res.flags


def test_scaling_with_charge_and_dipole():
    base = _quiet(GEOM, LAYOUT, ATOM, CFG)
    strong = _quiet(GEOM, LAYOUT, AtomConfig(ATOM.position, ATOM.dipole, 4.0, coupling=0.06), CFG)
    double = _quiet(GEOM, LAYOUT, AtomConfig(ATOM.position, tuple(2 * np.array(ATOM.dipole)), 4.0, coupling=0.02), CFG)
    assert strong.gamma == pytest.approx(3 * base.gamma, rel=1e-12)
    assert double.gamma == pytest.approx(4 * base.gamma, rel=1e-12)
    assert double.delta == pytest.approx(4 * base.delta, rel=1e-12)


def test_polarization_convention_and_free_region_do_not_matter():
    a = _quiet(GEOM, LAYOUT, ATOM, CFG)
    b = _quiet(GEOM, LAYOUT, ATOM, CFG, angle=0.4)
    c = _quiet(GEOM, LAYOUT.with_free_region(GEOM, ATOM.R, side=0.2), ATOM, CFG)
    assert b.gamma == pytest.approx(a.gamma, rel=1e-12)
    assert c.gamma == a.gamma and c.delta == a.delta


@given(st.floats(1.0, 9.0), st.floats(0.65, 1.15), st.floats(0.05, 0.95))
@settings(max_examples=15, deadline=None)
def test_gamma_nonnegative_for_passive_medium(omega0, z, x):
    atom = AtomConfig((x, 0.52, z), (0.2, 1.0, 0.5), omega0, coupling=0.02)
    try:
        res = _quiet(GEOM, LAYOUT, atom, ModeBasisConfig(n_max=5))
    except ValueError:  # omega0 on a cavity resonance
        return
    assert res.gamma >= -1e-12
    assert FLAG_NEGATIVE_GAMMA not in res.flags


def test_negative_gamma_is_flagged_not_clipped(monkeypatch):
    real = emission.convergence_ladder

    def flipped(*args, **kwargs):
        levels, dyads = real(*args, **kwargs)
        return [LadderLevel(lv.n_max, lv.omega_cut, lv.n_modes, lv.quadrature_points, -lv.gamma, lv.delta)
                for lv in levels], dyads

    monkeypatch.setattr(emission, "convergence_ladder", flipped)
    res = _quiet(GEOM, LAYOUT, ATOM, CFG)
    assert res.gamma < 0 and FLAG_NEGATIVE_GAMMA in res.flags


def test_markov_gate_warns():
    strong = AtomConfig(ATOM.position, ATOM.dipole, 4.0, coupling=10.0)
    with pytest.warns(MarkovWarning):
        res = decay_and_shift(GEOM, LAYOUT, strong, CFG)
    assert FLAG_MARKOV in res.flags and res.markov_ratio > 0.1
    assert res.correlation_time == pytest.approx(correlation_time(GEOM, LAYOUT, strong, CFG))


def test_mode_contributions_sum_to_gamma():
    res = _quiet(GEOM, LAYOUT, ATOM, CFG, breakdown=True)
    parts = res.mode_breakdown
    assert parts["gamma"].sum() == pytest.approx(res.gamma, rel=1e-10)
    assert np.all(np.diff(parts["omega"]) >= 0)


def test_markov_amplitude():
    t = np.linspace(0, 50, 11)
    c = markov_amplitude((0.01, 0.2), 4.0, t, gamma0=0.005)
    assert np.allclose(np.abs(c) ** 2, np.exp(-2 * 0.015 * t))
    assert np.allclose(np.angle(c[1] / c[0]), np.angle(np.exp(-1j * 4.2 * 5.0)))
    res = _quiet(GEOM, LAYOUT, ATOM, CFG)
    assert np.allclose(np.abs(markov_amplitude(res, 4.0, t)) ** 2, np.exp(-2 * res.gamma * t))
    with pytest.raises(ValueError):
        markov_amplitude((0.01, 0.0), 4.0, -1.0)


@pytest.fixture(scope="module")
def kernel_setup():
    cfg = ModeBasisConfig(n_max=4)
    ev = DyadicEvaluator(GEOM, LAYOUT, ATOM.R, ATOM.d, cfg, ATOM.coupling)
    return cfg, ev


def test_kernel_laplace_transform_matches_shifted_dyadic(kernel_setup):
    cfg, ev = kernel_setup
    eps = 0.3
    cut = cfg.cutoff(GEOM)
    window = KernelWindow(broadening=eps, points=int(48 * cut / eps))
    tau = np.arange(0, 15 / eps, 0.02)
    K = memory_kernel(GEOM, LAYOUT, ATOM, tau, cfg, window, evaluator=ev)
    assert kernel_laplace(K, tau, ATOM.omega0) == pytest.approx(-1j * ev(ATOM.omega0 + 1j * eps), rel=2e-3)


def test_regulator_is_an_exponential_envelope(kernel_setup):
    # shifting the integration line by eps multiplies the kernel by exp(-eps tau);
    # the finite window leaves a percent-level residue
    cfg, ev = kernel_setup
    tau = np.array([0.5, 2.0, 4.0, 8.0])
    points = int(48 * cfg.cutoff(GEOM) / 0.6)
    K1 = memory_kernel(GEOM, LAYOUT, ATOM, tau, cfg, KernelWindow(broadening=0.6, points=points), evaluator=ev)
    K2 = memory_kernel(GEOM, LAYOUT, ATOM, tau, cfg, KernelWindow(broadening=1.2, points=points), evaluator=ev)
    assert np.allclose(K2 / K1, np.exp(-0.6 * tau), rtol=2e-2)
    assert abs(K2[-1]) < 1e-2 * np.abs(K2).max()


def test_kernel_trivial_cases(kernel_setup):
    cfg, _ = kernel_setup
    empty = MediumLayout(())
    K = memory_kernel(GEOM, empty, ATOM, np.linspace(0, 5, 6), cfg, KernelWindow(points=200))
    assert np.all(K == 0)
    with pytest.raises(ValueError):
        memory_kernel(GEOM, LAYOUT, ATOM, [-1.0], cfg)
    with pytest.raises(ValueError):
        memory_kernel(GEOM, LAYOUT, ATOM, [1.0], cfg, KernelWindow(broadening=0.0, points=200))


def test_dyadic_element_obeys_kramers_kronig(kernel_setup):
    # g(w) = d.G(w).d is analytic above the axis and decays like 1/w^2, so on the line
    # Im w = eps its real part is the Hilbert transform of its imaginary part
    from mdqed.geometry import gauss_legendre

    cfg, ev = kernel_setup
    eps, X = 0.05, 3 * cfg.cutoff(GEOM)
    edges = np.linspace(-X, X, 1500)
    nodes = [gauss_legendre(a, b, 8) for a, b in zip(edges[:-1], edges[1:])]
    x = np.concatenate([n[0] for n in nodes])
    w = np.concatenate([n[1] for n in nodes])
    im = ev.batch(x + 1j * eps).imag
    for omega in (3.0, 4.0, 5.5, 7.0):
        g = ev(omega + 1j * eps)
        pv = np.sum(w * (im - g.imag) / (x - omega)) + g.imag * np.log((X - omega) / (X + omega))
        assert pv / np.pi == pytest.approx(g.real, abs=1e-4 * abs(g))


def test_ladder_changes_shrink_with_refinement():
    # from a cutoff well above the inverse smearing radius on, each refinement changes Gamma less
    res = _quiet(GEOM, LAYOUT, ATOM, ModeBasisConfig(n_max=9), ladder_levels=4)
    steps = [abs(a.gamma - b.gamma) for a, b in zip(res.ladder, res.ladder[1:])]
    assert all(s1 < s0 for s0, s1 in zip(steps, steps[1:]))


def test_dipole_sign_invariance():
    a = _quiet(GEOM, LAYOUT, ATOM, CFG)
    b = _quiet(GEOM, LAYOUT, AtomConfig(ATOM.position, tuple(-np.array(ATOM.dipole)), 4.0, coupling=0.02), CFG)
    assert b.gamma == pytest.approx(a.gamma, rel=1e-12) and b.delta == pytest.approx(a.delta, rel=1e-12)


def test_rate_is_smooth_in_transition_frequency():
    # below the lowest cavity resonance (about 5.0) Gamma and Delta vary smoothly
    cfg = ModeBasisConfig(n_max=5)
    omegas = np.linspace(2.0, 4.4, 13)
    vals = np.array([[r.gamma, r.delta] for r in
                     (_quiet(GEOM, LAYOUT, AtomConfig(ATOM.position, ATOM.dipole, w0, coupling=0.02), cfg)
                      for w0 in omegas)])
    h = omegas[1] - omegas[0]
    slope = np.abs(np.diff(vals, axis=0)) / h
    curvature = np.abs(np.diff(vals, 2, axis=0)) / h**2
    scale = np.abs(vals).max(axis=0)
    assert np.all(slope.max(axis=0) < 10 * scale)
    assert np.all(curvature.max(axis=0) < 100 * scale)
