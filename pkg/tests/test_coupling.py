import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdqed.coupling import (
    AtomInMediumError,
    Box,
    LayoutError,
    MediumLayout,
    Region,
    coupling_matrix,
    gram_matrix,
    homogeneous_W,
    overlap_QL,
    overlap_W,
    profile_overlaps,
)
from mdqed.geometry import BoxGrid, CavityGeometry, GeometryError, ModeBasisConfig, mode_function, mode_set
from mdqed.material import LorentzModel, SusceptibilityPair, coupling_f_squared, z_function

GEOM = CavityGeometry(1.0, 1.1, 1.2)
EMODEL = LorentzModel(0.72, 6.0, 1.5)
MMODEL = LorentzModel(0.3, 3.0, 0.8)
PAIR = SusceptibilityPair(EMODEL, MMODEL)
CFG = ModeBasisConfig(n_max=5, quadrature_points=24)
W_ARG = 4.0 + 0.2j


def _layout(*boxes, pair=PAIR):
    return MediumLayout(tuple(Region(Box(lo, hi), pair) for lo, hi in boxes))


def _diag(W):
    N = W.shape[0]
    return np.array([[W[n, l, n, l] for l in range(2)] for n in range(N)])


def test_box_validation():
    with pytest.raises(LayoutError):
        Box((0, 0, 0), (1, 0, 1))
    with pytest.raises(LayoutError):
        Box((0, 0), (1, 1))
    b = Box.centered((0.5, 0.5, 0.5), 0.2)
    assert b.volume == pytest.approx(0.008)
    assert b.contains((0.4, 0.5, 0.5)) and not b.contains((0.4, 0.5, 0.5), strict=True)
    assert not Box((0, 0, 0), (1, 1, 0.5)).intersects(Box((0, 0, 0.5), (1, 1, 1)))


def test_layout_validation():
    geom = CavityGeometry(1, 1, 1)
    half = _layout(((0, 0, 0), (1, 1, 0.5)))
    half.validate(geom, (0.5, 0.5, 0.8))
    with pytest.raises(AtomInMediumError):
        half.validate(geom, (0.5, 0.5, 0.3))
    with pytest.raises(LayoutError):
        _layout(((0, 0, 0), (1, 1, 0.6)), ((0, 0, 0.5), (1, 1, 1))).validate(geom)
    with pytest.raises(LayoutError):
        _layout(((0, 0, 0), (1, 1, 1.5))).validate(geom)
    with pytest.raises(GeometryError):
        half.validate(geom, (0.5, 0.5, 1.5))
    with pytest.raises(LayoutError):
        half.with_free_region(geom, (0.5, 0.5, 0.51), side=0.1).validate(geom, (0.5, 0.5, 0.51))
    assert issubclass(AtomInMediumError, LayoutError)


def test_gram_matrix_matches_pointwise_quadrature():
    ms = mode_set(GEOM, ModeBasisConfig(n_max=3))
    box = Box((0.1, 0.2, 0.0), (0.7, 1.1, 0.5))
    grid = BoxGrid.build(box.lo, box.hi, 24)
    pts, w = grid.points(), grid.weight_tensor().ravel()
    for kind in ("u", "s"):
        S = gram_matrix(GEOM, ms, box, kind, 24)
        for (n, lam), (m, mu) in [((0, 0), (1, 1)), ((2, 1), (2, 0)), ((3, 0), (0, 1))]:
            a = mode_function(GEOM, ms.idx[n], lam + 1, kind, pts)
            b = mode_function(GEOM, ms.idx[m], mu + 1, kind, pts)
            ref = 8 / GEOM.volume * np.sum(np.einsum("pa,pa->p", a, b) * w)
            assert S[n, lam, m, mu] == pytest.approx(ref, abs=1e-12)


def test_full_box_gram_is_identity():
    ms = mode_set(GEOM, CFG)
    full = Box((0, 0, 0), tuple(GEOM.lengths))
    for kind in ("u", "s", "v", "s3"):
        S = gram_matrix(GEOM, ms, full, kind, 24)
        N, B = S.shape[:2]
        assert np.abs(S.reshape(N * B, N * B) - np.eye(N * B)).max() < 1e-12


def test_mixed_families_rejected():
    ms = mode_set(GEOM, ModeBasisConfig(n_max=2))
    with pytest.raises(ValueError):
        gram_matrix(GEOM, ms, Box((0, 0, 0), (1, 1, 1)), "u", 8, kind2="s")


def test_w_full_box_and_half_box_reductions():
    ms = mode_set(GEOM, CFG)
    ze, zm = z_function(EMODEL, W_ARG), z_function(MMODEL, W_ARG)
    full = coupling_matrix(GEOM, _layout(((0, 0, 0), tuple(GEOM.lengths))), ms, W_ARG, CFG.quadrature_points)
    assert np.abs(_diag(full) - (ze + zm)).max() < 1e-12
    N = ms.size
    offdiag = full.reshape(2 * N, 2 * N) - np.diag(np.diag(full.reshape(2 * N, 2 * N)))
    assert np.abs(offdiag).max() < 1e-12
    for axis in range(3):
        hi = list(GEOM.lengths)
        hi[axis] *= 0.5
        half = coupling_matrix(GEOM, _layout(((0, 0, 0), tuple(hi))), ms, W_ARG, CFG.quadrature_points)
        assert np.abs(_diag(half) - 0.5 * (ze + zm)).max() < 1e-12


def test_w_on_axis_reduction():
    ms = mode_set(GEOM, ModeBasisConfig(n_max=3))
    layout = _layout(((0, 0, 0), (1.0, 0.55, 1.2)))
    W = coupling_matrix(GEOM, layout, ms, 4.0, 16, on_axis=True)
    expected = 0.5 * (z_function(EMODEL, 4.0, on_axis=True) + z_function(MMODEL, 4.0, on_axis=True))
    assert np.abs(_diag(W) - expected).max() < 1e-12


@given(st.floats(0.05, 0.95), st.sampled_from([0, 1, 2]))
@settings(max_examples=15, deadline=None)
def test_w_is_additive_over_pieces(frac, axis):
    ms = mode_set(GEOM, ModeBasisConfig(n_max=3))
    L = tuple(GEOM.lengths)
    cut = list(L)
    cut[axis] = frac * L[axis]
    lo2 = [0.0, 0.0, 0.0]
    lo2[axis] = cut[axis]
    whole = coupling_matrix(GEOM, _layout(((0, 0, 0), L)), ms, W_ARG, 16)
    split = coupling_matrix(GEOM, _layout(((0, 0, 0), tuple(cut)), (tuple(lo2), L)), ms, W_ARG, 16)
    assert np.abs(whole - split).max() < 1e-12


def test_w_symmetry_and_single_entry():
    ms = mode_set(GEOM, ModeBasisConfig(n_max=3))
    layout = _layout(((0.1, 0, 0.2), (0.8, 0.9, 0.7)))
    W = coupling_matrix(GEOM, layout, ms, W_ARG, 16)
    ratio = np.sqrt(ms.omega[:, None] / ms.omega[None, :])
    # W / sqrt(w'/w) is symmetric: sqrt(w_n) W_{n n'} / sqrt(w_n') is a Gram form
    sym = W * ratio[:, None, :, None]
    N = ms.size
    M = sym.reshape(2 * N, 2 * N)
    assert np.abs(M - M.T).max() < 1e-13
    n, m = tuple(ms.idx[1]), tuple(ms.idx[3])
    entry = overlap_W(GEOM, layout, n, 2, m, 1, W_ARG, ModeBasisConfig(n_max=3, quadrature_points=16))
    assert entry == pytest.approx(W[1, 1, 3, 0], abs=1e-14)
    with pytest.raises(GeometryError):
        overlap_W(GEOM, layout, (9, 9, 9), 1, m, 1, W_ARG, ModeBasisConfig(n_max=3))


def test_homogeneous_w_volume_fraction():
    layout = _layout(((0, 0, 0), (1.0, 1.1, 0.3)))
    expected = 0.25 * (z_function(EMODEL, W_ARG) + z_function(MMODEL, W_ARG))
    assert homogeneous_W(layout, GEOM, W_ARG) == pytest.approx(expected, rel=1e-12)
    assert homogeneous_W(MediumLayout(()), GEOM, W_ARG) == 0


def test_profile_overlaps_shape_and_empty():
    ms = mode_set(GEOM, ModeBasisConfig(n_max=2))
    O = profile_overlaps(GEOM, ms.idx, Box((0, 0, 0), (0.5, 0.5, 0.5)), "f", 8)
    assert O.shape == (3, ms.size, ms.size)
    assert profile_overlaps(GEOM, np.zeros((0, 3), int), Box((0, 0, 0), (1, 1, 1)), "f", 8).shape == (3, 0, 0)


def test_overlap_ql_against_pointwise_quadrature():
    cfg = ModeBasisConfig(n_max=3, quadrature_points=20)
    box = Box((0, 0, 0), (1.0, 1.1, 0.6))
    layout = MediumLayout((Region(box, PAIR),))
    n, m, wk = (1, 1, 1), (2, 1, 3), 3.5
    Q, L = overlap_QL(GEOM, layout, n, 1, m, 3, wk, cfg)
    grid = BoxGrid.build(box.lo, box.hi, 20)
    pts, w = grid.points(), grid.weight_tensor().ravel()
    u = mode_function(GEOM, n, 1, "u", pts)
    v = mode_function(GEOM, m, 3, "v", pts)
    s = mode_function(GEOM, n, 1, "s", pts)
    s3 = mode_function(GEOM, m, 3, "s", pts)
    wn = math.pi * math.sqrt(1 + 1 / 1.1**2 + 1 / 1.2**2)
    f = math.sqrt(coupling_f_squared(EMODEL, wk))
    g = math.sqrt(coupling_f_squared(MMODEL, wk))
    V = GEOM.volume
    Qref = 1j * math.sqrt(32 * wn / V**2) * f * np.sum(np.einsum("pa,pa->p", u, v) * w)
    Lref = math.sqrt(32 * wn / V**2) * g * np.sum(np.einsum("pa,pa->p", s, s3) * w)
    assert Q == pytest.approx(Qref, rel=1e-10) and Q.real == 0
    assert L == pytest.approx(Lref, rel=1e-10) and L.imag == 0
    assert overlap_QL(GEOM, layout, n, 1, m, 3, 0.0, cfg) == (0j, 0j)
    with pytest.raises(GeometryError):
        overlap_QL(GEOM, layout, n, 3, m, 1, wk, cfg)


def test_w_diagonal_stable_under_quadrature_doubling():
    ms = mode_set(GEOM, ModeBasisConfig(n_max=4))
    layout = _layout(((0.1, 0.0, 0.0), (0.8, 1.1, 0.55)))
    coarse = coupling_matrix(GEOM, layout, ms, W_ARG, 16)
    fine = coupling_matrix(GEOM, layout, ms, W_ARG, 32)
    assert np.abs(_diag(coarse) - _diag(fine)).max() < 1e-6


def test_homogeneous_w_matches_exact_diagonal_where_exact():
    cfg = ModeBasisConfig(n_max=3, quadrature_points=16)
    ms = mode_set(GEOM, cfg)
    for hi in ((1.0, 1.1, 1.2), (1.0, 1.1, 0.6), (0.5, 1.1, 1.2)):
        layout = _layout(((0, 0, 0), hi))
        h = homogeneous_W(layout, GEOM, W_ARG)
        for n in range(ms.size):
            for lam in (1, 2):
                exact = overlap_W(GEOM, layout, tuple(ms.idx[n]), lam, tuple(ms.idx[n]), lam, W_ARG, cfg)
                assert exact == pytest.approx(h, abs=1e-8)
