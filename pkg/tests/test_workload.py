import math
import random

import pytest

from crchain.workload import (
    DUR_MAX,
    DUR_MEAN,
    DUR_MIN,
    DurationSource,
    RequestSpec,
    UserTxFeed,
    WorkloadConfig,
    calibrate_mu,
    gen_stream,
    sample_duration,
    sample_priority,
    truncated_lognormal_mean,
)


def test_defaults_match_operating_point():
    cfg = WorkloadConfig()
    assert cfg.freq == pytest.approx(0.0577)
    assert cfg.n_requests == 819
    assert (cfg.duration_min, cfg.duration_mean, cfg.duration_max) == (
        DUR_MIN,
        DUR_MEAN,
        DUR_MAX,
    )
    assert cfg.timeout_default == 20
    assert cfg.pareto_shape == pytest.approx(1.16)


def test_config_validation():
    with pytest.raises(ValueError):
        WorkloadConfig(freq=1.0)
    with pytest.raises(ValueError):
        WorkloadConfig(duration_min=10.0, duration_mean=5.0, duration_max=50.0)


def test_truncated_mean_reduces_to_lognormal_with_wide_bounds():
    mu, sigma = 1.0, 0.5
    wide = truncated_lognormal_mean(mu, sigma, 1e-9, 1e9)
    assert wide == pytest.approx(math.exp(mu + sigma ** 2 / 2), rel=1e-9)


def test_calibrated_mu_hits_target_mean_in_closed_form():
    mu = calibrate_mu(DUR_MEAN, 1.0, DUR_MIN, DUR_MAX)
    got = truncated_lognormal_mean(mu, 1.0, DUR_MIN, DUR_MAX)
    assert got == pytest.approx(DUR_MEAN, abs=1e-6)


def test_sampled_durations_match_calibrated_mean():
    cfg = WorkloadConfig()
    src = DurationSource(cfg)
    rng = random.Random(123)
    n = 50_000
    draws = [src.next(rng) for _ in range(n)]
    assert all(DUR_MIN <= d <= DUR_MAX for d in draws)
    assert sum(draws) / n == pytest.approx(DUR_MEAN, abs=0.5)


def test_trace_replay_wraps(tmp_path):
    trace = tmp_path / "durs.txt"
    trace.write_text("1.5\n2.5\n3.5\n")
    src = DurationSource(WorkloadConfig(trace_path=str(trace)))
    rng = random.Random(0)
    got = [src.next(rng) for _ in range(7)]
    assert got == [1.5, 2.5, 3.5, 1.5, 2.5, 3.5, 1.5]


def test_empty_trace_rejected(tmp_path):
    trace = tmp_path / "durs.txt"
    trace.write_text("")
    with pytest.raises(ValueError):
        DurationSource(WorkloadConfig(trace_path=str(trace)))


def test_priority_range_and_right_skew():
    rng = random.Random(7)
    draws = [sample_priority(rng, 1.16) for _ in range(20_000)]
    assert all(0 <= p <= 1000 for p in draws)
    assert max(draws) == 1000  # heavy tail reaches the cap
    ordered = sorted(draws)
    median = ordered[len(ordered) // 2]
    mean = sum(draws) / len(draws)
    assert median < mean  # long right tail


def test_sample_priority_validates_shape():
    with pytest.raises(ValueError):
        sample_priority(random.Random(0), 0.0)


def test_feed_emits_bernoulli_requests_until_quota():
    cfg = WorkloadConfig(freq=0.25, n_requests=50)
    feed = UserTxFeed(cfg, random.Random(5))
    ticks = 0
    requests = []
    while not feed.exhausted():
        spec = feed.next()
        ticks += 1
        if spec is not None:
            requests.append(spec)
    assert len(requests) == 50
    assert [r.req_id for r in requests] == list(range(50))
    # realized rate should be near freq (99.9% binomial bound)
    rate = 50 / ticks
    assert abs(rate - 0.25) < 3.29 * math.sqrt(0.25 * 0.75 / ticks) + 0.05
    assert feed.next() is None  # exhausted feeds only emit plain txs


def test_request_spec_fee_fields_are_consistent():
    cfg = WorkloadConfig(freq=0.9, n_requests=200)
    feed = UserTxFeed(cfg, random.Random(11))
    specs = []
    while not feed.exhausted():
        spec = feed.next()
        if spec is not None:
            specs.append(spec)
    for s in specs:
        assert isinstance(s, RequestSpec)
        assert s.fee_price == 1 + s.priority
        assert s.fee_limit == s.input_len + 512
        assert 64 <= s.input_len <= 512
        assert 16 <= s.output_len <= 256
        assert 0 <= s.value < 5
        assert s.timeout == cfg.timeout_default
        assert DUR_MIN <= s.duration_s <= DUR_MAX


def test_gen_stream_is_reproducible():
    cfg = WorkloadConfig(freq=0.1, n_requests=20)
    a = gen_stream(cfg, random.Random(3), 500)
    b = gen_stream(cfg, random.Random(3), 500)
    assert len(a) == 500
    assert [(t, s and s.req_id) for t, s in a] == [(t, s and s.req_id) for t, s in b]


def test_sample_duration_single_draw_in_bounds():
    d = sample_duration(WorkloadConfig(), random.Random(2))
    assert DUR_MIN <= d <= DUR_MAX
