import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resilient_cs.channel import (
    STREAM_DIAG, ChannelSpec, Mask, burst_transitions, draw_mask, draw_mask_bernoulli,
    draw_mask_burst, draw_rate, run_lengths, stream,
)
from resilient_cs.errors import ConfigurationError
from resilient_cs.model import Geometry, ReconModel, SamplingOperator, forward_pipeline
from resilient_cs.tensor import ParamSet


def test_rate_zero_keeps_everything():
    m = draw_mask_bernoulli((1000,), 0.0, stream(0, STREAM_DIAG))
    assert m.values.all()
    assert m.realized_rate == 0.0


def test_rate_one_drops_everything():
    m = draw_mask_bernoulli((1000,), 1.0, stream(0, STREAM_DIAG))
    assert not m.values.any()


def test_bernoulli_count_in_three_sigma_band():
    m = draw_mask_bernoulli((10_000,), 0.1, stream(7, STREAM_DIAG))
    lost = int(np.count_nonzero(m.values == 0))
    assert 910 <= lost <= 1090


@pytest.mark.parametrize("n", [10**2, 10**4, 10**6])
def test_bernoulli_realized_rate_within_three_sigma(n):
    r = 0.1
    m = draw_mask_bernoulli((n,), r, stream(11, STREAM_DIAG, n))
    assert abs(m.realized_rate - r) <= 3 * np.sqrt(r * (1 - r) / n)


def test_bernoulli_mean_over_masks():
    rates = [draw_mask_bernoulli((1000,), 0.1, stream(3, STREAM_DIAG, i)).realized_rate for i in range(1000)]
    assert abs(np.mean(rates) - 0.1) < 0.003


def test_same_key_same_mask_and_different_keys_differ():
    a = draw_mask_bernoulli((500,), 0.3, stream(5, STREAM_DIAG, 1)).values
    b = draw_mask_bernoulli((500,), 0.3, stream(5, STREAM_DIAG, 1)).values
    c = draw_mask_bernoulli((500,), 0.3, stream(5, STREAM_DIAG, 2)).values
    np.testing.assert_array_equal(a, b)
    assert (a != c).any()


def test_mask_is_read_only_binary():
    m = draw_mask_bernoulli((10,), 0.5, stream(0, STREAM_DIAG))
    assert m.values.dtype == np.uint8
    with pytest.raises(ValueError):
        m.values[0] = 1
    with pytest.raises(ConfigurationError):
        Mask(np.array([0, 2]), 0.1)


def test_uniform_rate_mean():
    spec = ChannelSpec.uniform_range(0.1, 0.2)
    rng = stream(0, STREAM_DIAG)
    draws = np.array([draw_rate(spec, rng) for _ in range(10_000)])
    assert 0.147 <= draws.mean() <= 0.153
    assert draws.min() >= 0.1 and draws.max() <= 0.2


def test_fixed_rate_is_returned_verbatim():
    assert draw_rate(ChannelSpec.fixed(0.1), stream(0, STREAM_DIAG)) == 0.1


@pytest.mark.parametrize("kw", [dict(lo=0.2, hi=0.1), dict(lo=0.0, hi=0.6), dict(lo=-0.1, hi=0.1),
                                dict(model="gauss"), dict(burst_mean_len=0.5)])
def test_channel_validation(kw):
    with pytest.raises(ConfigurationError):
        ChannelSpec(**kw)


@pytest.mark.parametrize("spec", [ChannelSpec.fixed(0.1), ChannelSpec.uniform_range(0, 0.1),
                                  ChannelSpec(model="burst", lo=0.05, hi=0.05, burst_mean_len=8)])
def test_regime_text_round_trip(spec):
    assert ChannelSpec.parse_regime(spec.regime()) == spec


def test_burst_transitions_stationary_rate():
    p_enter, p_exit = burst_transitions(0.1, 8)
    assert p_exit == 1 / 8
    assert p_enter / (p_enter + p_exit) == pytest.approx(0.1, rel=1e-12)
    with pytest.raises(ConfigurationError):
        burst_transitions(0.6, 8)


def test_burst_len_one_matches_bernoulli_marginal():
    r = 0.1
    rates = [draw_mask_burst((10_000,), r, 1.0, stream(2, STREAM_DIAG, i)).realized_rate for i in range(1000)]
    assert abs(np.mean(rates) - r) < 0.003


def test_burst_mean_run_length():
    m = draw_mask_burst((10**6,), 0.1, 8.0, stream(9, STREAM_DIAG))
    runs = run_lengths(m.values)
    assert 7.0 <= runs.mean() <= 9.0
    assert abs(m.realized_rate - 0.1) < 0.01


def test_burst_runs_longer_than_bernoulli_runs():
    burst = run_lengths(draw_mask_burst((10**5,), 0.1, 8.0, stream(1, STREAM_DIAG)).values).mean()
    bern = run_lengths(draw_mask_bernoulli((10**5,), 0.1, stream(1, STREAM_DIAG)).values).mean()
    assert burst > 4 * bern


def test_run_lengths():
    np.testing.assert_array_equal(run_lengths(np.array([0, 0, 1, 0, 1, 1, 0, 0, 0])), [2, 1, 3])
    np.testing.assert_array_equal(run_lengths(np.array([1, 1])), [])


def test_draw_mask_dispatch():
    m = draw_mask(ChannelSpec(model="burst", lo=0.2, hi=0.2, burst_mean_len=4), (4, 50), stream(0, STREAM_DIAG))
    assert m.shape == (4, 50)
    assert m.nominal_rate == 0.2


def test_dropping_equals_deleting_rows():
    # a lost measurement behaves like that row of phi being zero (16 measurements per subband)
    rng = np.random.default_rng(0)
    geom = Geometry(block=4, levels=1, p2_layers=1, p2_channels=1, p3_layers=1, p3_channels=1)
    sampler = SamplingOperator.init(4, 1.0, rng)
    model = ReconModel.init(geom, sampler, rng)
    img = rng.uniform(size=(8, 8))
    keep = (rng.random((1, 4, 1, 16)) >= 0.3).astype(np.uint8)
    masked = forward_pipeline(sampler, model, 0.3, img, mask=Mask(keep, 0.3), upto="P1")

    zeroed = ParamSet({k: v.data.copy() for k, v in sampler.params.items()})
    for i, s in enumerate(("ll", "lh", "hl", "hh")):
        zeroed[f"phi.{s}"].data[keep[0, i, 0] == 0] = 0.0
    alt = SamplingOperator(4, 1.0, zeroed)
    deleted = forward_pipeline(alt, model, 0.0, img, mask=Mask(np.ones_like(keep), 0.0), upto="P1")
    np.testing.assert_array_equal(masked.recon_p1.data, deleted.recon_p1.data)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 0.5))
def test_burst_mask_shape_and_symbols(seed, r):
    m = draw_mask_burst((3, 7, 5), r, 3.0, stream(seed, STREAM_DIAG))
    assert m.shape == (3, 7, 5)
    assert set(np.unique(m.values)) <= {0, 1}
