import math
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from seqsense.channel import Hypothesis, NoiseModel, SignalModel
from seqsense.distributions import Constant, Gaussian, RngStream
from seqsense.errors import CalibrationFailure, ConfigurationError
from seqsense.montecarlo import (
    PRERUN_POINT,
    PerformanceEstimate,
    Tally,
    apply_schedule,
    calibrate,
    default_calibration_grid,
    estimate,
    estimate_drifts,
    estimate_means,
    first_passage,
    proportion_interval,
    stream_id,
    sweep,
    threshold_schedule,
    walk_supremum_exceeds,
)
from seqsense.nodes import FcModel, NodeModel, Sensing, SystemModel
from seqsense.seqtests import TestKind, TestSpec


def _noise_free_system():
    node = NodeModel(
        test=TestSpec(TestKind.RANDOM_WALK, mu0=0.0, mu1=1.0, gamma0=10.0, gamma1=2.0),
        signal=SignalModel(alphabet=((1.0, 1.0),), noise=Constant(0.0)),
    )
    fc = FcModel(
        test=TestSpec(TestKind.RANDOM_WALK, mu0=-1.0, mu1=1.0, gamma0=3.0, gamma1=3.0),
        noise=NoiseModel(Constant(0.0)),
    )
    return SystemModel(nodes=(node,), fc=fc, sensing=Sensing.MEAN, max_slots=1_000)


def _gaussian_system(L=2):
    node = NodeModel(test=TestSpec(TestKind.M2_RANDOM_WALK, mu0=1.0, mu1=2.0))
    fc = FcModel(test=TestSpec(TestKind.M2_RANDOM_WALK, mu0=-1.0, mu1=1.0))
    return SystemModel(nodes=(node,) * L, fc=fc, max_slots=100_000)


def test_stream_id_partitions():
    assert stream_id(1, 1, 5) == (1 << 33) | (1 << 32) | 5
    assert stream_id(0, 0, 0) == 0
    assert stream_id(PRERUN_POINT, 0, 0) != stream_id(0, 0, 0)
    with pytest.raises(ConfigurationError):
        stream_id(0, 0, 1 << 32)


def test_tallies_add_up():
    a = Tally(10, 1, 0, 0, 10, 50, 300)
    b = Tally(5, 2, 1, 0, 4, 20, 110)
    assert a + b == b + a == Tally(15, 3, 1, 0, 14, 70, 410)


def test_proportion_interval_with_no_errors():
    p, hw, upper = proportion_interval(0, 100)
    assert p == 0.0
    assert hw == 0.0
    assert upper == pytest.approx(1 - 0.025 ** (1 / 100), rel=1e-6)


def test_proportion_interval_with_many_errors():
    p, hw, upper = proportion_interval(50, 100)
    assert p == 0.5
    assert hw == pytest.approx(1.96 * math.sqrt(0.25 * 100 / 99) / 10, rel=1e-3)
    assert upper == pytest.approx(p + hw)


def test_deterministic_estimate_is_exact():
    est = estimate(_noise_free_system(), n_trials=20, seed=1)
    assert est.p_fa == est.p_md == 0.0
    assert est.p_fa_hw == est.p_md_hw == 0.0
    assert est.e0_n == 22.0
    assert est.e1_n == 6.0
    assert est.e0_n_hw == est.e1_n_hw == 0.0
    assert est.truncated_fraction == 0.0


def test_threshold_schedule_splits_by_drift():
    schedule = threshold_schedule(math.exp(-4.0), [(-0.5, 0.5), (-1.5, 1.0)])
    assert schedule.beta0 == pytest.approx(4.0)
    assert schedule.beta1 == pytest.approx(4.0)
    assert schedule.gamma0 == pytest.approx((1.0, 3.0))
    assert schedule.gamma1 == pytest.approx((4.0 / 1.5 * 0.5, 4.0 / 1.5))


def test_threshold_schedule_validation():
    with pytest.raises(ConfigurationError):
        threshold_schedule(0.0, [(-0.5, 0.5)])
    with pytest.raises(ConfigurationError):
        threshold_schedule(0.1, [(0.5, 0.5)])
    with pytest.raises(ConfigurationError):
        threshold_schedule(0.1, [])


def test_apply_schedule_sets_all_thresholds():
    schedule = threshold_schedule(math.exp(-2.0), [(-0.5, 0.5), (-0.5, 0.5)])
    system = apply_schedule(_gaussian_system(), schedule)
    assert [n.test.gamma0 for n in system.nodes] == pytest.approx([1.0, 1.0])
    assert system.fc.test.gamma1 == pytest.approx(2.0)


def test_estimate_does_not_depend_on_worker_count():
    system = apply_schedule(_gaussian_system(), threshold_schedule(math.exp(-3.0), [(-0.5, 0.5)] * 2))
    serial = estimate(system, n_trials=300, seed=5, point=2, threads=1)
    parallel = estimate(system, n_trials=300, seed=5, point=2, threads=2)
    assert serial == parallel


def test_sweep_points_follow_the_grid():
    grid = [math.exp(-2.0), math.exp(-4.0)]
    points = sweep(_gaussian_system(), [(-0.5, 0.5)] * 2, grid, n_trials=30, seed=2)
    assert [p.c for p in points] == grid
    assert points[1].schedule.beta1 == pytest.approx(4.0)
    assert points[1].estimate.mean_delay > points[0].estimate.mean_delay


def test_calibrate_target_range():
    with pytest.raises(ConfigurationError):
        calibrate(_noise_free_system(), [(-0.5, 0.5)], 0.7, 0.05, seed=1, n_trials=10)


def test_calibrate_picks_the_fastest_error_free_point():
    grid = [math.exp(-t) for t in (1.0, 2.0, 3.0, 4.0)]
    # 0 errors in 100 trials: exact upper limit 1 - 0.025 ** (1 / 100) < 0.05
    point = calibrate(_noise_free_system(), [(-0.5, 0.5)], 0.05, 0.05, seed=1, n_trials=100, grid=grid)
    assert point.c == pytest.approx(math.exp(-1.0))
    assert point.estimate.p_fa == point.estimate.p_md == 0.0


def test_calibration_failure_carries_the_closest_point():
    # a node that always transmits +b1 under both hypotheses can never meet P_FA
    node = NodeModel(
        test=TestSpec(TestKind.RANDOM_WALK, mu0=-2.0, mu1=-1.0),
        signal=SignalModel(alphabet=((1.0, 1.0),), noise=Constant(0.0)),
    )
    fc = FcModel(test=TestSpec(TestKind.RANDOM_WALK, mu0=-1.0, mu1=1.0), noise=NoiseModel(Constant(0.0)))
    system = SystemModel(nodes=(node,), fc=fc, sensing=Sensing.MEAN, max_slots=1_000)
    with pytest.raises(CalibrationFailure) as info:
        calibrate(system, [(-0.5, 0.5)], 0.05, 0.05, seed=1, n_trials=5, grid=[0.5, 0.1])
    assert info.value.closest is not None
    assert info.value.closest.estimate.p_fa == 1.0


def test_default_grid_is_in_range():
    grid = default_calibration_grid()
    assert all(0 < c <= 1 for c in grid)
    assert len(set(grid)) == len(grid)


def test_estimate_means_of_energy_samples():
    def sampler(hyp, gen, size):
        shift = 1.0 if hyp is Hypothesis.H1 else 0.0
        return (shift + gen.standard_normal(size)) ** 2

    est = estimate_means(sampler, 100_000, seed=1, K1=200.0)
    assert est.mu0 == pytest.approx(1.0, abs=0.03)
    assert est.mu1 == pytest.approx(2.0, abs=0.05)
    assert est.mu0_hw > 0


def test_estimate_means_needs_enough_samples():
    with pytest.raises(ConfigurationError):
        estimate_means(lambda hyp, gen, size: gen.standard_normal(size), 100, seed=1)


def test_estimate_means_rejects_unseparated_hypotheses():
    with pytest.raises(ConfigurationError):
        estimate_means(lambda hyp, gen, size: gen.standard_normal(size), 10_000, seed=1)


def test_estimated_drifts_have_the_right_signs():
    drifts = estimate_drifts(_gaussian_system(), 20_000, seed=1)
    assert len(drifts) == 2
    for d in drifts:
        assert d.e0 < 0 < d.e1
        assert d.var0 > 0


def test_first_passage_of_a_constant_walk():
    result = first_passage(Constant(1.0), 10, lower=5.0, upper=3.5, rng=RngStream(1))
    assert np.all(result.steps == 4)
    assert np.all(result.upper)
    assert np.all(result.finished)


def test_first_passage_reports_unfinished_walks():
    result = first_passage(Constant(0.0), 3, lower=1.0, upper=1.0, rng=RngStream(1), max_steps=20)
    assert not result.finished.any()
    assert np.all(result.steps == 20)


def test_supremum_exceedance_decreases_with_level():
    levels = [1.0, 2.0, 4.0]
    probs = walk_supremum_exceeds(Gaussian(-0.5, 1.0), 20_000, levels, RngStream(3))
    ps = [p for p, _ in probs]
    assert ps[0] > ps[1] > ps[2] > 0
    assert all(se > 0 for _, se in probs)


def test_error_bounds_use_the_wider_limit():
    near = PerformanceEstimate.from_tallies(
        Tally(trials=1000, errors=9, decided=1000, n_sum=20_000, n_sq=420_000),
        Tally(trials=1000, errors=0, decided=1000, n_sum=20_000, n_sq=420_000),
    )
    assert near.p_fa < 0.01
    assert near.p_fa_bound == pytest.approx(near.p_fa_upper)
    assert near.p_fa_bound > 0.01
    assert not near.meets(0.01, 0.5)

    many = PerformanceEstimate.from_tallies(
        Tally(trials=10_000, errors=40, decided=10_000, n_sum=200_000, n_sq=4_200_000),
        Tally(trials=10_000, errors=0, decided=10_000, n_sum=200_000, n_sq=4_200_000),
    )
    assert many.p_fa_bound == pytest.approx(many.p_fa + many.p_fa_hw)
    assert 0 < many.p_md_bound < 0.001
    assert many.meets(0.01, 0.01)


def _reported(p_fa, p_fa_hw, delay):
    upper = p_fa + p_fa_hw
    return PerformanceEstimate(
        p_fa=p_fa, p_fa_hw=p_fa_hw, p_md=0.001, p_md_hw=0.0005, e0_n=delay, e0_n_hw=0.1,
        e1_n=delay, e1_n_hw=0.1, n_trials=1000, p_fa_upper=upper, p_md_upper=0.0015,
    )


def test_calibrate_rejects_a_point_whose_interval_crosses_the_target(mocker):
    # index 0 is the fastest point; its estimate is under the target but its interval is not
    reports = {0: _reported(0.009, 0.006, 10.0), 1: _reported(0.002, 0.002, 14.0), 2: _reported(0.0, 0.001, 18.0)}
    mocker.patch(
        "seqsense.montecarlo.estimate",
        side_effect=lambda system, n_trials, seed, point=0, threads=1: reports[point],
    )
    grid = [math.exp(-1.0), math.exp(-2.0), math.exp(-3.0)]
    point = calibrate(_gaussian_system(), [(-0.5, 0.5)] * 2, 0.01, 0.01, seed=1, n_trials=1000, grid=grid)
    assert point.c == pytest.approx(math.exp(-2.0))
    assert point.estimate.e0_n == 14.0



def _mean_sensing_system(fc_variance):
    node = NodeModel(
        test=TestSpec(TestKind.RANDOM_WALK, mu0=0.0, mu1=1.0),
        signal=SignalModel(alphabet=((1.0, 1.0),), noise=Gaussian(0.0, 1.0)),
    )
    fc = FcModel(
        test=TestSpec(TestKind.M2_RANDOM_WALK, mu0=-1.0, mu1=1.0), noise=NoiseModel(Gaussian(0.0, fc_variance))
    )
    return SystemModel(nodes=(node,) * 3, fc=fc, sensing=Sensing.MEAN, max_slots=100_000)


def test_doubling_trials_shrinks_error_half_widths():
    system = apply_schedule(_mean_sensing_system(5.0), threshold_schedule(math.exp(-2.0), [(-0.5, 0.5)] * 3))
    small = estimate(system, n_trials=2_000, seed=8)
    large = estimate(system, n_trials=4_000, seed=8)
    assert small.p_fa > 0.05 and small.p_md > 0.05
    assert large.p_fa_hw / small.p_fa_hw == pytest.approx(1 / math.sqrt(2), rel=0.1)
    assert large.p_md_hw / small.p_md_hw == pytest.approx(1 / math.sqrt(2), rel=0.1)


def test_tighter_targets_never_buy_a_shorter_delay():
    system = _mean_sensing_system(1.0)
    grid = [math.exp(-t) for t in (1.0, 2.0, 4.0, 8.0)]
    delays = []
    for target in (0.3, 0.1, 0.02):
        point = calibrate(system, [(-0.5, 0.5)] * 3, target, target, seed=9, n_trials=1_000, grid=grid)
        assert point.estimate.meets(target, target)
        delays.append(point.estimate.mean_delay)
    assert delays == sorted(delays)
