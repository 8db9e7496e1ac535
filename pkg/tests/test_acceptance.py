"""Longer Monte-Carlo reproductions of the headline behaviours (``-m slow``)."""

import math
import sys
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from seqsense.analysis import (
    IncrementModel,
    delay_slope_limit,
    delta_budget,
    fc_delay_approx,
    fit_decay,
    lundberg_exponent,
    stop_time_bounds,
)
from seqsense.channel import FadingMode, FadingModel, Hypothesis
from seqsense.config import load_config
from seqsense.distributions import Gaussian, Pareto, Rayleigh, RngStream
from seqsense.experiment import (
    analyze_point,
    build_system,
    drift_schedule,
    fc_increment_samples,
    node_drifts,
    resolve_centers,
)
from seqsense.montecarlo import first_passage, sweep, threshold_schedule, walk_supremum_exceeds
from seqsense.seqtests import psi_array

PARETO = Pareto(alpha=2.5, scale=1.0)
CONFIG_DIR = ROOT / "configs"
SINGLE = {"system.L": "1", "system.mode": "single"}


def _grid(thresholds):
    return [math.exp(-t) for t in thresholds]


def _single_node(name, overrides, grid, n_trials):
    """Sweep a one-node system; its thresholds are +-|log c| whatever the drift."""
    config = load_config(CONFIG_DIR / name, overrides)
    system = build_system(config, resolve_centers(config))
    return sweep(system, [(-1.0, 1.0)], grid, n_trials, config.sweep.seed)


def _first_within(points, target, error=lambda est: est.mean_error):
    for point in points:
        if error(point.estimate) <= target:
            return point
    return None


def _delay_hw(est):
    return (est.e0_n_hw + est.e1_n_hw) / 2


def _plain_walk(gen, size):
    return PARETO.sample(gen, size) - 0.5


def _clipped_walk(gen, size):
    return psi_array(PARETO.sample(gen, size), 1.0) - 0.3


@pytest.mark.slow
def test_plain_walk_false_alarm_decays_polynomially():
    levels = [2.0, 4.0, 8.0, 16.0, 32.0]
    hits = walk_supremum_exceeds(_plain_walk, 100_000, levels, RngStream(11), floor=-150.0)
    fit = fit_decay(levels, [p for p, _ in hits])
    assert fit.loglog_r2 > 0.9
    assert fit.loglog_r2 > fit.linlog_r2


@pytest.mark.slow
def test_clipped_walk_false_alarm_decays_exponentially():
    levels = [1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0]
    hits = walk_supremum_exceeds(_clipped_walk, 200_000, levels, RngStream(12))
    fit = fit_decay(levels, [p for p, _ in hits])
    assert fit.linlog_r2 > 0.9
    assert fit.linlog_r2 > fit.loglog_r2


@pytest.mark.slow
def test_gaussian_walk_supremum_below_lundberg_bound():
    gamma = lundberg_exponent(IncrementModel.gaussian(-0.5, 1.0)).gamma
    levels = [2.0, 4.0, 6.0, 8.0]
    hits = walk_supremum_exceeds(Gaussian(-0.5, 1.0), 200_000, levels, RngStream(13))
    for t1, (p, se) in zip(levels, hits):
        assert p <= math.exp(-gamma * t1) + 3 * se


@pytest.mark.slow
@pytest.mark.parametrize("t0", [10.0, 30.0, 100.0])
def test_gaussian_exit_time_inside_bracket(t0):
    lower, upper = stop_time_bounds(IncrementModel.gaussian(-0.5, 1.0), t0)
    walks = first_passage(Gaussian(-0.5, 1.0), 100_000, lower=t0, upper=math.inf, rng=RngStream(14))
    steps = walks.steps.astype(float)
    se = steps.std(ddof=1) / math.sqrt(steps.size)
    assert walks.finished.all()
    assert lower - 4 * se <= steps.mean() <= lower + 1.05 * (upper - lower) + 4 * se


@pytest.mark.slow
def test_only_the_clipped_walk_survives_energy_detection_under_emi():
    grid = _grid([2.0, 5.0, 10.0, 20.0, 40.0, 60.0])
    best = {}
    for kind in ("random_walk", "ttest", "m2_random_walk"):
        points = _single_node("emi_fading_distributed.ini", {**SINGLE, "node.test": kind}, grid, 2000)
        best[kind] = min(p.estimate.mean_error for p in points)
    assert best["m2_random_walk"] <= 0.1
    assert best["random_walk"] >= 0.2
    assert best["ttest"] >= 0.2


def _decided_error(est):
    """Mean error over the trials in which the node decided."""
    n = est.n_trials
    wrong0 = round(est.p_fa * n) - est.abstained0
    wrong1 = round(est.p_md * n) - est.abstained1
    return (wrong0 + wrong1) / (2 * n - est.abstained0 - est.abstained1)


@pytest.mark.slow
def test_delta_gate_shortens_the_delay_at_matched_error():
    budget = delta_budget(FadingModel(FadingMode.SLOW, Rayleigh(1.0), None), 0.02, 0.05)
    assert budget.outage == pytest.approx(0.02)
    grid = _grid(np.arange(0.8, 3.01, 0.2))
    plain = _single_node("single_node_slow_fading.ini", {"system.delta": "0"}, grid, 10_000)
    gated = _single_node("single_node_slow_fading.ini", {"system.delta": str(float(budget.delta))}, grid, 10_000)

    # Both runs share their streams, so the gated run decides exactly the high-gain trials.
    for p, g in zip(plain, gated):
        assert p.estimate.abstained0 == p.estimate.abstained1 == 0
        assert g.estimate.abstained0 > 0 and g.estimate.abstained1 > 0
        assert _decided_error(g.estimate) < p.estimate.mean_error
        assert g.estimate.mean_delay < p.estimate.mean_delay

    p = _first_within(plain, 0.05)
    g = _first_within(gated, 0.05, _decided_error)
    assert p is not None and g is not None
    assert g.c >= p.c
    assert g.estimate.mean_delay < p.estimate.mean_delay


@pytest.mark.slow
def test_fusion_beats_the_best_single_node_at_one_percent_error():
    config = load_config(CONFIG_DIR / "emi_fading_distributed.ini")
    system = build_system(config, resolve_centers(config))
    pairs = [(d.e0, d.e1) for d in node_drifts(config, system)]
    fused = sweep(system, pairs, _grid([3.0, 5.0, 8.0, 12.0, 16.0, 22.0, 30.0]), 4000, config.sweep.seed)
    alone = _single_node(
        "emi_fading_distributed.ini", SINGLE, _grid([5.0, 10.0, 20.0, 30.0, 45.0, 60.0, 80.0, 100.0]), 4000
    )

    f = _first_within(fused, 1e-2)
    s = _first_within(alone, 1e-2)
    assert f is not None and s is not None
    assert f.estimate.mean_delay + _delay_hw(f.estimate) < s.estimate.mean_delay - _delay_hw(s.estimate)


@lru_cache(maxsize=None)
def _gaussian_far_points():
    """Gaussian five-node system at |log c| = 100 and 200."""
    config = load_config(CONFIG_DIR / "gaussian_distributed.ini")
    system = build_system(config, resolve_centers(config))
    drifts = node_drifts(config, system)
    pairs = [(d.e0, d.e1) for d in drifts]
    points = sweep(system, pairs, _grid([100.0, 200.0]), 2000, config.sweep.seed)
    return config, system, drifts, points


@pytest.mark.slow
@pytest.mark.parametrize("hyp", [Hypothesis.H0, Hypothesis.H1])
def test_drift_schedule_delay_tracks_monte_carlo(hyp):
    config, system, drifts, points = _gaussian_far_points()
    for point in points:
        schedule = point.schedule
        sched, _ = drift_schedule(system, hyp, schedule, drifts, config.sweep.prerun, config.sweep.seed)
        if hyp is Hypothesis.H0:
            approx, observed = fc_delay_approx(sched, -schedule.beta0), point.estimate.e0_n
        else:
            approx, observed = fc_delay_approx(sched, schedule.beta1), point.estimate.e1_n
        assert approx == pytest.approx(observed, rel=0.2)


@pytest.mark.slow
@pytest.mark.parametrize("hyp", [Hypothesis.H0, Hypothesis.H1])
def test_delay_per_log_c_settles_under_its_limit(hyp):
    config, system, drifts, points = _gaussian_far_points()
    n, seed = config.sweep.prerun, config.sweep.seed
    sched, _ = drift_schedule(system, hyp, points[-1].schedule, drifts, n, seed)
    silent = fc_increment_samples(system, hyp, [], n, RngStream(seed, 5).generator())
    d_tot = sum(d.e0 if hyp is Hypothesis.H0 else d.e1 for d in drifts)
    limit = delay_slope_limit(d_tot, sched.drifts[-1], float(np.mean(np.abs(silent))))

    def slope(point):
        est = point.estimate
        return (est.e0_n if hyp is Hypothesis.H0 else est.e1_n) / point.schedule.beta1

    near, far = (slope(p) for p in points)
    assert far <= limit
    assert far == pytest.approx(near, rel=0.15)


@pytest.mark.slow
def test_false_alarm_approximation_falls_with_the_threshold():
    config = load_config(CONFIG_DIR / "gaussian_distributed.ini")
    system = build_system(config, resolve_centers(config))
    drifts = node_drifts(config, system)
    pairs = [(d.e0, d.e1) for d in drifts]
    grid = _grid([2.0, 4.0, 6.0])
    points = sweep(system, pairs, grid, 4000, config.sweep.seed)
    rows = [analyze_point(config, system, drifts, threshold_schedule(c, pairs)) for c in grid]

    upper = [row.approx_p_fa_hi for row in rows]
    observed = [p.estimate.p_fa for p in points]
    assert all(math.isfinite(u) for u in upper)
    assert upper[0] > upper[1] > upper[2]
    assert observed[0] > observed[1] >= observed[2]
