import asyncio
import math

import numpy as np
import pytest

from genstream.analysis import SchemeParams, expected_T, p_m, variance_T
from genstream.codec import FileLayout, Scheme
from genstream.errors import BadSpec, TrialTimeout
from genstream.simulator import (ErasureChannel, GenerationEstimate, dkw_threshold, empirical_cdf_compare,
                                 estimate_generation_cdf, run_batch, run_batch_async, run_trial, simulation_layout,
                                 trial_streams)


@pytest.mark.parametrize("scheme", [Scheme.RLS, Scheme.RS, Scheme.PC, Scheme.REP])
def test_lossless_trial_needs_exactly_N(scheme):
    params = SchemeParams(scheme, 4, 16, 0.0)
    record = run_trial(params, simulation_layout(params), seed=3)
    assert record.T == 16
    assert record.superfluous_count == 0
    assert record.per_generation_M == (4, 4, 4, 4)
    assert record.intact


def test_binary_rl_single_block_is_geometric():
    params = SchemeParams(Scheme.RL, 1, 1, 0.0)
    batch = run_batch(params, simulation_layout(params), 4000, base_seed=0)
    # zero coefficient half the time: success probability 1/2
    se = math.sqrt(2.0 / 4000)
    assert abs(batch.mean_T - 2.0) < 4.5 * se


def test_same_seed_replays_the_trial():
    params = SchemeParams(Scheme.RL, 4, 32, 0.3, field_bits=2)
    layout = simulation_layout(params)
    assert run_trial(params, layout, 17) == run_trial(params, layout, 17)


def test_streams_are_reproducible_and_distinct():
    first = [rng.random(4) for rng in trial_streams(9)]
    again = [rng.random(4) for rng in trial_streams(9)]
    assert all(np.array_equal(a, b) for a, b in zip(first, again))
    assert not np.array_equal(first[0], first[1])


def test_erasure_channel_loss_rate():
    channel = ErasureChannel(0.25, np.random.default_rng(4))
    lost = sum(channel.erased() for _ in range(20_000))
    assert channel.sent == 20_000 and channel.lost == lost
    assert abs(channel.loss_rate - 0.25) < 4.5 * math.sqrt(0.25 * 0.75 / 20_000)


@pytest.mark.parametrize("scheme,g", [(Scheme.RL, 4), (Scheme.RLS, 4), (Scheme.RS, 8), (Scheme.PC, 2)])
def test_batch_mean_agrees_with_prediction(scheme, g):
    params = SchemeParams(scheme, g, 16, 0.15)
    batch = run_batch(params, simulation_layout(params), 2000, base_seed=100)
    mean, _, _ = expected_T(params)
    se = math.sqrt(variance_T(params) / batch.trials)
    assert abs(batch.mean_T - mean) < 4.5 * se
    assert batch.all_intact


def test_concurrent_batch_matches_sequential():
    params = SchemeParams(Scheme.RLS, 4, 16, 0.2)
    layout = simulation_layout(params)
    sequential = run_batch(params, layout, 40, base_seed=7)
    threaded = run_batch(params, layout, 40, base_seed=7, concurrency=3)
    assert np.array_equal(sequential.T_values, threaded.T_values)
    assert sequential.mean_T == threaded.mean_T
    direct = asyncio.run(run_batch_async(params, layout, 40, base_seed=7, concurrency=5))
    assert [r.seed for r in direct.records] == list(range(7, 47))


def test_lossless_batch_has_zero_width():
    params = SchemeParams(Scheme.RLS, 512, 512, 0.0)
    batch = run_batch(params, simulation_layout(params), 3, base_seed=0)
    assert batch.mean_T == 512
    assert batch.ci95_halfwidth == 0.0


def test_empirical_cdf_within_dkw_band():
    params = SchemeParams(Scheme.RLS, 4, 64, 0.15)
    batch = run_batch(params, simulation_layout(params), 3000, base_seed=2024)
    assert empirical_cdf_compare(batch, params) < dkw_threshold(batch.trials, alpha=0.001)


def test_dkw_threshold_value():
    assert dkw_threshold(100_000, 0.01) == pytest.approx(0.005146, abs=1e-5)


@pytest.mark.parametrize("scheme,field_bits", [(Scheme.RL, 1), (Scheme.RL, 8), (Scheme.RLS, 1), (Scheme.RS, 1)])
def test_generation_cdf_matches_formula(scheme, field_bits):
    params = SchemeParams(scheme, 4, 4, 0.15, field_bits=field_bits)
    estimate = estimate_generation_cdf(params, 16, trials=4000, seed=11)
    exact = np.array([p_m(m, params) for m in range(17)])
    band = 4.5 * np.maximum(np.sqrt(exact * (1 - exact) / estimate.trials), 1.0 / estimate.trials)
    assert np.all(np.abs(estimate.cdf - exact) <= band)


@pytest.mark.slow
@pytest.mark.parametrize("eps", [0.0, 0.15, 0.5])
@pytest.mark.parametrize("scheme,field_bits", [(Scheme.RL, 1), (Scheme.RL, 8), (Scheme.RLS, 1), (Scheme.RLS, 8),
                                               (Scheme.RS, 1), (Scheme.PC, 1)])
def test_generation_cdf_grid(scheme, field_bits, eps):
    for g in (1, 2, 4, 8):
        params = SchemeParams(scheme, g, g, eps, field_bits=field_bits)
        m_max = 4 * g + 16
        estimate = estimate_generation_cdf(params, m_max, trials=2000, seed=100 * g)
        exact = np.array([p_m(m, params) for m in range(m_max + 1)])
        exact_se = np.sqrt(exact * (1 - exact) / estimate.trials)
        band = 4.5 * np.maximum(np.maximum(estimate.standard_error, exact_se), 1.0 / estimate.trials)
        assert np.all(np.abs(estimate.cdf - exact) <= band + 1e-12), (scheme, field_bits, g, eps)


def test_generation_estimate_standard_error():
    estimate = GenerationEstimate(cdf=np.array([0.0, 0.5, 1.0]), trials=100)
    assert estimate.standard_error.tolist() == pytest.approx([0.0, 0.05, 0.0])


@pytest.mark.slow
@pytest.mark.parametrize("scheme", list(Scheme))
@pytest.mark.parametrize("g", [1, 4, 8])
def test_delivery_cdf_within_dkw_band(scheme, g):
    params = SchemeParams(scheme, g, 32, 0.15)
    batch = run_batch(params, simulation_layout(params), 2000, base_seed=7 * g)
    assert empirical_cdf_compare(batch, params) < dkw_threshold(batch.trials, alpha=0.001)


def test_wrong_loss_rate_falls_outside_the_dkw_band():
    params = SchemeParams(Scheme.RLS, 4, 32, 0.15)
    batch = run_batch(params, simulation_layout(params), 1000, base_seed=5)
    assert empirical_cdf_compare(batch, params.with_epsilon(0.30)) > dkw_threshold(batch.trials, alpha=0.001)


@pytest.mark.slow
def test_systematic_sends_never_cost_transmissions():
    for g in (1, 2, 4, 8, 16):
        rl = SchemeParams(Scheme.RL, g, 64, 0.15)
        rls = SchemeParams(Scheme.RLS, g, 64, 0.15)
        # same seeds: both schemes see the same loss pattern
        rl_batch = run_batch(rl, simulation_layout(rl), 500, base_seed=900)
        rls_batch = run_batch(rls, simulation_layout(rls), 500, base_seed=900)
        slack = 3 * math.hypot(rl_batch.ci95_halfwidth, rls_batch.ci95_halfwidth) / 1.96
        assert rls_batch.mean_T <= rl_batch.mean_T + slack, g


@pytest.mark.slow
def test_simulated_overhead_falls_with_generation_size():
    normalized = []
    for g in (1, 2, 4, 8, 16):
        params = SchemeParams(Scheme.RL, g, 64, 0.15)
        batch = run_batch(params, simulation_layout(params), 500, base_seed=31)
        normalized.append(batch.mean_T / 64)
    assert all(a > b for a, b in zip(normalized, normalized[1:])), normalized


def test_bad_arguments():
    params = SchemeParams(Scheme.RLS, 4, 16, 0.1)
    with pytest.raises(BadSpec):
        run_batch(params, simulation_layout(params), 0, base_seed=0)
    with pytest.raises(BadSpec):
        run_trial(params, FileLayout.for_blocks(16, 8, 2), seed=0)


def test_trial_timeout_carries_the_seed():
    params = SchemeParams(Scheme.RLS, 4, 16, 0.1)
    with pytest.raises(TrialTimeout) as info:
        run_trial(params, simulation_layout(params), seed=42, max_transmissions=5)
    assert info.value.seed == 42
