import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resilient_cs.errors import ContractError, DimensionError
from resilient_cs.wavelet import SubbandSet, dwt2, dwt2_multi, haar_analysis, haar_synthesis, idwt2, idwt2_multi


def test_hand_block():
    sub = dwt2(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert (sub.ll.data.item(), sub.hl.data.item(), sub.lh.data.item(), sub.hh.data.item()) == (5, -1, -2, 0)
    assert sub.energy() == 30.0


def test_hand_inverse():
    sub = SubbandSet(*(np.array([[v]]) for v in (5.0, -2.0, -1.0, 0.0)))
    np.testing.assert_array_equal(idwt2(sub).data, [[1, 2], [3, 4]])


def test_constant_image_has_only_ll():
    sub = dwt2(np.full((4, 4), 3.0))
    np.testing.assert_array_equal(sub.ll.data, np.full((2, 2), 6.0))
    for band in (sub.lh, sub.hl, sub.hh):
        np.testing.assert_array_equal(band.data, np.zeros((2, 2)))


def test_zero_image():
    sub = dwt2(np.zeros((6, 8)))
    assert sub.energy() == 0.0
    np.testing.assert_array_equal(idwt2(sub).data, np.zeros((6, 8)))


def test_odd_size_rejected():
    with pytest.raises(DimensionError):
        dwt2(np.zeros((3, 4)))


def test_band_shape_mismatch_rejected():
    with pytest.raises(DimensionError):
        SubbandSet(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)))


def test_round_trip_and_parseval_200_images():
    rng = np.random.default_rng(0)
    worst_rt = worst_energy = 0.0
    for _ in range(200):
        h, w = 2 * rng.integers(1, 33, size=2)
        x = rng.normal(size=(h, w))
        sub = dwt2(x)
        worst_rt = max(worst_rt, np.max(np.abs(idwt2(sub).data - x)))
        e = float(np.sum(x * x))
        worst_energy = max(worst_energy, abs(sub.energy() - e) / e)
    assert worst_rt < 1e-10
    assert worst_energy < 1e-10


def test_analysis_is_orthonormal_map():
    # adjoint of analysis equals synthesis
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 6, 10))
    s = rng.normal(size=(2, 4, 3, 5))
    lhs = np.sum(haar_analysis(x).data * s)
    rhs = np.sum(x * haar_synthesis(s).data)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_multilevel_shapes_and_round_trip():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(16, 24))
    pyr = dwt2_multi(x, 3)
    assert [p.shape for p in pyr] == [(8, 12), (4, 6), (2, 3)]
    assert [p.level for p in pyr] == [1, 2, 3]
    np.testing.assert_allclose(idwt2_multi(pyr).data, x, atol=1e-12)
    energy = sum(float(np.sum(b.data ** 2)) for p in pyr[:-1] for b in p.bands()[1:]) + pyr[-1].energy()
    assert energy == pytest.approx(float(np.sum(x * x)), rel=1e-12)


def test_multilevel_rejects_indivisible_and_zero_levels():
    with pytest.raises(DimensionError):
        dwt2_multi(np.zeros((12, 12)), 3)
    with pytest.raises(ContractError):
        dwt2_multi(np.zeros((8, 8)), 0)


def test_batched_stack_matches_per_image():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(3, 4, 6))
    batch = haar_analysis(x).data
    for i in range(3):
        np.testing.assert_array_equal(batch[i], dwt2(x[i]).stacked().data)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 32), st.integers(1, 32))
def test_round_trip_property(seed, hh, hw):
    x = np.random.default_rng(seed).uniform(-10, 10, size=(2 * hh, 2 * hw))
    sub = dwt2(x)
    np.testing.assert_allclose(idwt2(sub).data, x, atol=1e-10)
    assert sub.energy() == pytest.approx(float(np.sum(x * x)), rel=1e-10, abs=1e-10)
