import math

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from mdqed.coupling import Box, MediumLayout, Region, gram_matrix
from mdqed.dynamics import (
    DynamicsConfig,
    IntegrationError,
    MediumBlock,
    NonMarkovianError,
    Trajectory,
    WWSystem,
    assemble,
    build_discretization,
    fit_decay,
    integrate,
    medium_induced,
)
from mdqed.emission import AtomConfig, decay_and_shift
from mdqed.geometry import CavityGeometry, ModeBasisConfig, mode_set
from mdqed.material import LorentzModel, SusceptibilityPair
from oracles import lorentz_chi

GEOM = CavityGeometry(1.0, 1.1, 1.2)
WEAK = LorentzModel(0.16, 4.0, 0.4)
SLAB = Box((0, 0, 0), (1.0, 1.1, 0.6))
LAYOUT = MediumLayout((Region(SLAB, SusceptibilityPair(WEAK, WEAK)),))
EMPTY = MediumLayout(())
POS, DIP = (0.43, 0.52, 0.85), (1.0, 0.3, 0.2)
SMALL = ModeBasisConfig(n_max=3)


def _atom(coupling=0.005, dipole=DIP):
    return AtomConfig(POS, dipole, 4.0, coupling=coupling)


def _synthetic(rate, omega=3.0, t_end=100.0, n=201):
    t = np.linspace(0, t_end, n)
    return Trajectory(t, np.exp(-(rate + 1j * omega) * t), np.ones_like(t), t[1] - t[0])


def test_discretization_validation_and_weights():
    d = build_discretization(4.0, 0.5, 40)
    assert d.bins == 40 and d.bandwidth == pytest.approx(0.5)
    assert d.weights.sum() == pytest.approx(1.0, rel=1e-13)
    assert np.all((d.nodes > 3.5) & (d.nodes < 4.5))
    for args in ((4.0, 0.5, 1), (4.0, 0.0, 10), (0.3, 0.5, 10)):
        with pytest.raises(ValueError):
            build_discretization(*args)
    with pytest.raises(ValueError):
        DynamicsConfig(bins=1)


@given(st.floats(2.0, 8.0), st.floats(0.1, 1.5), st.integers(16, 96))
@settings(max_examples=20, deadline=None)
def test_bin_couplings_reproduce_band_integral(omega0, bandwidth, bins):
    # sum_j q_j^2 = 4 pi int omega^2 f^2 d omega = (1/pi) int Im chi over the band
    d = build_discretization(omega0, bandwidth, bins)
    q = d.effective_coupling(WEAK)
    ref, _ = scipy.integrate.quad(lambda x: lorentz_chi(0.16, 4.0, 0.4, x).imag / math.pi, d.lo, d.hi,
                                  epsabs=1e-14, epsrel=1e-12)
    assert np.sum(q**2) == pytest.approx(ref, rel=1e-6)
    assert np.all(d.effective_coupling(None) == 0)


def test_zero_medium_gives_no_continuum():
    d = build_discretization(4.0, 0.5, 16)
    zero = MediumLayout((Region(SLAB, SusceptibilityPair(LorentzModel(0.0, 4.0, 0.4))),))
    for layout in (EMPTY, zero):
        system = assemble(GEOM, layout, _atom(), d, SMALL)
        assert system.blocks == () and system.photon_static is None
        assert system.size == 1 + system.n_photon


@pytest.fixture(scope="module")
def tiny_system():
    d = build_discretization(4.0, 0.5, 8)
    layout = MediumLayout((Region(SLAB, SusceptibilityPair(WEAK, LorentzModel(0.3, 3.0, 0.8))),))
    return assemble(GEOM, layout, AtomConfig(POS, DIP, 4.0, coupling=0.5), d, ModeBasisConfig(n_max=2))


def test_generator_is_hermitian(tiny_system):
    H = tiny_system.dense()
    assert len(tiny_system.blocks) == 2
    assert np.abs(H - H.conj().T).max() <= 1e-12
    assert np.abs(np.linalg.eigvalsh(H)).max() <= tiny_system.spectral_radius_bound()


def test_effective_modes_reproduce_gram(tiny_system):
    ms = mode_set(GEOM, ModeBasisConfig(n_max=2))
    P = 2 * ms.size
    S = gram_matrix(GEOM, ms, SLAB, "u", 32).reshape(P, P)
    A = tiny_system.blocks[0].A
    omega = np.repeat(ms.omega, 2)
    pref = np.sqrt(32 * omega / GEOM.volume**2) * GEOM.volume / 8
    assert np.allclose(A @ A.conj().T, pref[:, None] * S * pref[None, :], atol=1e-12)


def test_rk4_matches_matrix_exponential(tiny_system):
    t_end = 5.0
    traj = integrate(tiny_system, t_end, dt=0.02 / tiny_system.spectral_radius_bound(), samples=5)
    exact = scipy.linalg.expm(-1j * tiny_system.dense() * t_end)[0, 0] * np.exp(-1j * 4.0 * t_end)
    assert abs(traj.c[-1] - exact) < 1e-8
    assert traj.max_norm_drift < 1e-8


def test_uncoupled_atom_keeps_full_population():
    d = build_discretization(4.0, 0.5, 16)
    full = assemble(GEOM, LAYOUT, _atom(), d, SMALL)
    off = WWSystem(full.omega0, full.photon_omega, np.zeros_like(full.atom_coupling), full.photon_static,
                   full.bins, full.blocks)
    traj = integrate(off, 200.0)
    assert np.allclose(traj.c, np.exp(-4j * traj.t), atol=1e-12)
    assert traj.max_norm_drift <= 1e-8
    assert abs(fit_decay(traj).rate) <= 1e-10


def test_time_step_checks(tiny_system):
    bound = tiny_system.spectral_radius_bound()
    with pytest.raises(ValueError):
        integrate(tiny_system, 1.0, dt=0.2 / bound)
    with pytest.raises(IntegrationError):
        integrate(tiny_system, 5.0, norm_abort=1e-20)


def test_fit_recovers_synthetic_rate():
    fit = fit_decay(_synthetic(0.01))
    assert fit.rate == pytest.approx(0.01, abs=1e-6)
    assert fit.population_rate == pytest.approx(0.02, abs=2e-6)
    assert fit.conclusive and fit.residual < 1e-10
    assert not fit_decay(_synthetic(0.001)).conclusive
    sub = fit_decay(_synthetic(0.01), window=(20.0, 60.0))
    assert sub.points == 81
    with pytest.raises(ValueError):
        fit_decay(_synthetic(0.01), window=(10.0, 10.2))


def test_revivals_are_reported():
    t = np.linspace(0, 100, 401)
    c = np.exp(-0.01 * t) * (1 + 0.2 * np.cos(0.3 * t)) / 1.2
    traj = Trajectory(t, c.astype(complex), np.ones_like(t), 0.25)
    with pytest.raises(NonMarkovianError, match="non-Markovian"):
        fit_decay(traj)


def test_trajectory_csv(tmp_path):
    traj = _synthetic(0.01, n=5)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "t,re_c,im_c,abs_c2,norm" and len(rows) == 6
    back = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(back[:, 1] + 1j * back[:, 2], traj.c)
    assert list(tmp_path.iterdir()) == [path]


def _medium_rate(coupling, bins, t_end=200.0, dipole=DIP):
    d = build_discretization(4.0, 0.5, bins)
    atom = _atom(coupling, dipole)
    system = assemble(GEOM, LAYOUT, atom, d, SMALL)
    dt = 0.05 / system.spectral_radius_bound()
    traj = integrate(system, t_end, dt)
    bare = integrate(assemble(GEOM, EMPTY, atom, d, SMALL), t_end, dt)
    return fit_decay(medium_induced(traj, bare)).rate


@pytest.fixture(scope="module")
def base_rate():
    return _medium_rate(0.005, 80)


def test_medium_induced_rate_matches_spectral_route(base_rate):
    gamma = decay_and_shift(GEOM, LAYOUT, _atom(), SMALL).gamma
    assert base_rate == pytest.approx(gamma, rel=0.02)


def test_rate_is_converged_in_bins(base_rate):
    assert _medium_rate(0.005, 160) == pytest.approx(base_rate, rel=1e-3)


def test_rate_is_quadratic_in_dipole(base_rate):
    half = tuple(0.5 * x for x in DIP)
    assert 4 * _medium_rate(0.005, 80, dipole=half) == pytest.approx(base_rate, rel=0.02)


def test_coupling_phase_convention_cancels(tiny_system):
    # f and g are taken real; any phase on the bin couplings drops out of |c(t)|
    s = tiny_system
    rotated = tuple(MediumBlock(b.A, b.q * np.exp(1j * np.linspace(0.3, 2.0, b.q.size))) for b in s.blocks)
    other = WWSystem(s.omega0, s.photon_omega, s.atom_coupling, s.photon_static, s.bins, rotated)
    a = integrate(s, 5.0, samples=10)
    b = integrate(other, 5.0, dt=a.dt, samples=10)
    assert np.allclose(np.abs(a.c), np.abs(b.c), atol=1e-13)


def test_medium_induced_is_unity_without_medium():
    d = build_discretization(4.0, 0.5, 16)
    zero = MediumLayout((Region(SLAB, SusceptibilityPair(LorentzModel(0.0, 4.0, 0.4))),))
    a = integrate(assemble(GEOM, zero, _atom(), d, SMALL), 50.0)
    b = integrate(assemble(GEOM, EMPTY, _atom(), d, SMALL), 50.0)
    ratio = medium_induced(a, b)
    assert np.all(a.c == b.c)
    assert np.abs(ratio.c - 1.0).max() < 1e-15
    with pytest.raises(ValueError):
        medium_induced(a, _synthetic(0.0))
