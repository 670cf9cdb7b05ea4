import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from rotsiam.features import FeatureMap
from rotsiam.matching import (
    CandidateSpec,
    ResponseMap,
    apply_window,
    cross_correlate,
    cross_correlate_fft,
    fuse,
    hann_window,
    normalize,
    normalize_joint,
    peak_to_displacement,
    refine_peak,
    resample_bicubic,
    select_peak,
)

from oracles import brute_correlate


def fm(data, stride=8.0):
    return FeatureMap(np.asarray(data, dtype=np.float64), stride)


# --- correlation -------------------------------------------------------------


def test_correlation_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(25):
        c = int(rng.integers(1, 8))
        ht, wt = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        hs, ws = ht + int(rng.integers(0, 12)), wt + int(rng.integers(0, 12))
        t = rng.standard_normal((c, ht, wt))
        s = rng.standard_normal((c, hs, ws))
        got = cross_correlate(fm(t), fm(s)).data
        want = brute_correlate(t, s)
        assert_allclose(got, want, rtol=1e-10, atol=1e-10)


def test_fft_path_matches_direct():
    rng = np.random.default_rng(1)
    for _ in range(10):
        c = int(rng.integers(1, 17))
        ht = int(rng.integers(2, 16))
        hs = ht + int(rng.integers(0, 17))
        t = rng.standard_normal((c, ht, ht))
        s = rng.standard_normal((c, hs, hs))
        a = cross_correlate(fm(t), fm(s)).data
        b = cross_correlate_fft(fm(t), fm(s)).data
        scale = max(1.0, np.abs(a).max())
        assert np.abs(a - b).max() / scale < 1e-9


def test_correlation_validates_inputs():
    with pytest.raises(ValueError):
        cross_correlate(fm(np.zeros((2, 4, 4))), fm(np.zeros((3, 8, 8))))
    with pytest.raises(ValueError):
        cross_correlate(fm(np.zeros((2, 9, 9))), fm(np.zeros((2, 8, 8))))
    with pytest.raises(ValueError):
        cross_correlate(fm(np.zeros((1, 2, 2)), stride=8.0), fm(np.zeros((1, 4, 4)), stride=4.0))


def test_correlation_response_size_and_stride():
    r = cross_correlate(fm(np.ones((1, 8, 8))), fm(np.ones((1, 24, 24))))
    assert r.data.shape == (17, 17)
    assert r.stride == 8.0


# --- normalization -----------------------------------------------------------


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_normalize_range(seed):
    rng = np.random.default_rng(seed)
    r = ResponseMap(rng.standard_normal((9, 9)) * rng.uniform(0.1, 100), 8.0)
    n = normalize(r).data
    assert n.min() == 0.0
    assert n.max() == 1.0
    # order-preserving
    assert np.array_equal(np.argsort(r.data, axis=None), np.argsort(n, axis=None))


def test_normalize_constant_map_goes_to_zeros():
    n = normalize(ResponseMap(np.full((5, 5), 3.7), 8.0))
    assert_array_equal(n.data, np.zeros((5, 5)))


def test_normalize_joint_shares_one_affine_map():
    rng = np.random.default_rng(3)
    maps = [ResponseMap(rng.standard_normal((7, 7)) + k, 8.0) for k in range(3)]
    normed = normalize_joint(maps)
    lo = min(m.data.min() for m in maps)
    hi = max(m.data.max() for m in maps)
    for m, n in zip(maps, normed):
        assert_allclose(n.data, (m.data - lo) / (hi - lo), atol=1e-12)
    # global extrema hit exactly 0 and 1
    assert min(n.data.min() for n in normed) == 0.0
    assert max(n.data.max() for n in normed) == 1.0
    # relative order of per-map peaks survives, unlike per-map normalize
    raw_order = np.argsort([m.data.max() for m in maps])
    new_order = np.argsort([n.data.max() for n in normed])
    assert_array_equal(raw_order, new_order)


def test_normalize_joint_constant_maps():
    maps = [ResponseMap(np.full((3, 3), 2.0), 8.0)] * 2
    normed = normalize_joint(maps)
    for n in normed:
        assert_array_equal(n.data, np.zeros((3, 3)))


# --- cosine window -----------------------------------------------------------


def test_hann_window_peak_normalized():
    w = hann_window((17, 17))
    assert w.max() == 1.0
    assert w[8, 8] == 1.0
    assert w[0, 0] == 0.0
    assert_allclose(w, w.T)


def test_apply_window_blend():
    r = ResponseMap(np.full((9, 9), 0.5), 8.0)
    out = apply_window(r, 0.2)
    w = hann_window((9, 9))
    assert_allclose(out.data, 0.8 * 0.5 + 0.2 * w, atol=1e-12)
    ident = apply_window(r, 0.0)
    assert_array_equal(ident.data, r.data)
    pure = apply_window(r, 1.0)
    assert np.unravel_index(pure.data.argmax(), (9, 9)) == (4, 4)


def test_window_on_flat_map_prefers_center():
    r = ResponseMap(np.zeros((17, 17)), 8.0)
    out = apply_window(r, 0.25)
    assert np.unravel_index(out.data.argmax(), (17, 17)) == (8, 8)


# --- fusion ------------------------------------------------------------------


def test_fuse_weighted_average_same_size():
    a = ResponseMap(np.ones((5, 5)), 8.0)
    b = ResponseMap(np.zeros((5, 5)), 8.0)
    out = fuse([a, b], (0.25, 0.75))
    assert_allclose(out.data, 0.25)


def test_fuse_resamples_to_largest_grid():
    a = ResponseMap(np.random.default_rng(4).random((17, 17)), 8.0)
    b = ResponseMap(np.random.default_rng(5).random((15, 15)), 8.0)
    out = fuse([a, b], (0.5, 0.5))
    assert out.data.shape == (17, 17)


def test_fuse_rejects_bad_weights():
    a = ResponseMap(np.ones((5, 5)), 8.0)
    with pytest.raises(ValueError):
        fuse([a, a], (0.5, 0.6))


# --- peak selection ----------------------------------------------------------


def cand(s, a, penalty):
    return CandidateSpec(s=s, a=a, penalty=penalty)


def test_candidate_spec_exactly_one_nonidentity():
    cand(1.0375, 0.0, 0.973)
    cand(1.0, math.pi / 8, 0.975)
    cand(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        cand(1.0375, math.pi / 8, 0.973)
    with pytest.raises(ValueError):
        cand(1.0, 0.0, 0.9)  # identity must carry penalty 1
    with pytest.raises(ValueError):
        cand(1.0375, 0.0, 1.5)


def test_select_peak_applies_penalty():
    m_hi = ResponseMap(np.zeros((5, 5)), 8.0)
    m_hi.data[2, 2] = 1.0
    m_lo = ResponseMap(np.zeros((5, 5)), 8.0)
    m_lo.data[1, 3] = 0.98
    # penalized: 1.0 * 0.973 beats 0.98 * 0.975? 0.973 < 0.9555 no ->
    # identity 0.98*1.0 wins over scaled 1.0*0.973
    idx, cell, score = select_peak(
        [(cand(1.0375, 0.0, 0.973), m_hi), (cand(1.0, 0.0, 1.0), m_lo)]
    )
    assert idx == 1
    assert cell == (1, 3)
    assert_allclose(score, 0.98)
    # unpenalized flips the winner
    idx2, cell2, _ = select_peak(
        [(cand(1.0375, 0.0, 0.973), m_hi), (cand(1.0, 0.0, 1.0), m_lo)],
        apply_penalty=False,
    )
    assert idx2 == 0 and cell2 == (2, 2)


def test_select_peak_tie_prefers_identity():
    flat = np.zeros((3, 3))
    flat[1, 1] = 1.0
    maps = [
        (cand(1.0, math.pi / 8, 1.0 if False else 0.975), ResponseMap(flat.copy(), 8.0)),
        (cand(1.0, 0.0, 1.0), ResponseMap(flat.copy(), 8.0)),
    ]
    # identity peak 1.0 > rotated 0.975: clean win
    idx, _, _ = select_peak(maps)
    assert idx == 1
    # exact tie (both penalty 1 via apply_penalty=False): |a| breaks it
    idx2, _, _ = select_peak(maps, apply_penalty=False)
    assert idx2 == 1


@given(st.integers(0, 2**31 - 1), st.integers(1, 6))
@settings(max_examples=30, deadline=None)
def test_select_peak_append_weaker_candidate_invariance(seed, extra):
    rng = np.random.default_rng(seed)
    base = [
        (cand(1.0, 0.0, 1.0), ResponseMap(rng.random((5, 5)), 8.0)),
        (cand(1.0375, 0.0, 0.973), ResponseMap(rng.random((5, 5)), 8.0)),
    ]
    idx, cell, score = select_peak(base)
    weaker = [
        (cand(1.0, -math.pi / 8, 0.975), ResponseMap(np.full((5, 5), -1.0), 8.0))
        for _ in range(extra)
    ]
    idx2, cell2, score2 = select_peak(base + weaker)
    assert (idx2, cell2) == (idx, cell)
    assert score2 == score


# --- sub-cell refinement -----------------------------------------------------


def gaussian_bump(shape, r0, c0, sigma=2.0):
    r = np.arange(shape[0])[:, None]
    c = np.arange(shape[1])[None, :]
    return np.exp(-((r - r0) ** 2 + (c - c0) ** 2) / (2 * sigma**2))


def test_refine_peak_recovers_subcell_maximum():
    for r0, c0 in ((8.3, 7.6), (9.45, 8.05), (7.9, 9.2)):
        data = gaussian_bump((17, 17), r0, c0)
        cell = np.unravel_index(data.argmax(), data.shape)
        rr, cc = refine_peak(ResponseMap(data, 8.0), cell, upsample=16)
        assert abs(rr - r0) < 0.25
        assert abs(cc - c0) < 0.25


def test_refine_peak_upsample_one_is_integer_peak():
    data = gaussian_bump((9, 9), 4.4, 3.7)
    cell = np.unravel_index(data.argmax(), data.shape)
    assert refine_peak(ResponseMap(data, 8.0), cell, upsample=1) == (float(cell[0]), float(cell[1]))


def test_refine_peak_stays_in_bounds_at_corner():
    data = np.zeros((5, 5))
    data[0, 0] = 1.0
    rr, cc = refine_peak(ResponseMap(data, 8.0), (0, 0), upsample=8)
    assert 0.0 <= rr <= 4.0 and 0.0 <= cc <= 4.0


# --- displacement ------------------------------------------------------------


def test_peak_at_center_maps_to_zero():
    data = np.zeros((17, 17))
    data[8, 8] = 1.0
    dx, dy = peak_to_displacement((8, 8), ResponseMap(data, 8.0), upsample=1)
    assert (dx, dy) == (0.0, 0.0)


def test_peak_one_cell_right_is_stride_px():
    data = np.zeros((17, 17))
    data[8, 9] = 1.0
    dx, dy = peak_to_displacement((8, 9), ResponseMap(data, 8.0), upsample=1)
    assert_allclose((dx, dy), (8.0, 0.0), atol=1e-12)
    data2 = np.zeros((17, 17))
    data2[10, 8] = 1.0
    dx2, dy2 = peak_to_displacement((10, 8), ResponseMap(data2, 8.0), upsample=1)
    assert_allclose((dx2, dy2), (0.0, 16.0), atol=1e-12)


def test_displacement_with_subcell_refinement():
    data = gaussian_bump((17, 17), 8.0, 8.5, sigma=1.5)
    cell = np.unravel_index(data.argmax(), data.shape)
    dx, dy = peak_to_displacement(cell, ResponseMap(data, 8.0), upsample=16)
    assert abs(dy) < 0.6
    assert abs(dx - 4.0) < 1.2  # half a cell at stride 8


# --- resampling --------------------------------------------------------------


def test_resample_bicubic_identity():
    rng = np.random.default_rng(6)
    x = rng.random((9, 9))
    assert_allclose(resample_bicubic(x, (9, 9)), x, atol=1e-9)


def test_resample_bicubic_corner_alignment():
    x = np.arange(16, dtype=np.float64).reshape(4, 4)
    up = resample_bicubic(x, (10, 10))
    assert_allclose(up[0, 0], x[0, 0], atol=1e-9)
    assert_allclose(up[-1, -1], x[-1, -1], atol=1e-9)


def test_scaling_before_normalize_leaves_argmax_unchanged():
    rng = np.random.default_rng(7)
    raw = [rng.random((7, 7)) for _ in range(3)]
    specs = [cand(1.0, 0.0, 1.0), cand(1.0375, 0.0, 0.973), cand(1.0, math.pi / 8, 0.975)]

    def pipeline(scale):
        maps = normalize_joint([ResponseMap(r * scale, 8.0) for r in raw])
        maps = [apply_window(m, 0.176) for m in maps]
        return select_peak(list(zip(specs, maps)))

    assert pipeline(1.0)[:2] == pipeline(137.5)[:2]
