"""
Monte-Carlo harness: error probabilities, mean delays, sweeps and calibration.

Trial ``i`` of sweep point ``p`` under hypothesis ``h`` always runs on the
stream ``(seed, stream_id(p, h, i))``; tallies are integer counts and sums, so
an estimate does not depend on how trials are split across workers.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .channel import FadingMode, Hypothesis
from .distributions import DistributionSpec, RngStream, RngLike, as_generator
from .errors import CalibrationFailure, ConfigurationError
from .nodes import NodeModel, SystemModel, TrialOutcome, observe, run_trial
from .seqtests import increments, psi_array

logger = logging.getLogger(__name__)

POINT_SHIFT = 33
HYPOTHESIS_SHIFT = 32
TRIAL_LIMIT = 1 << 32
# Pre-runs (center and drift estimates) draw from their own partition.
PRERUN_POINT = (1 << 30) - 1
CHUNK_TRIALS = 256
Z95 = 1.959963984540054
EXACT_INTERVAL_BELOW = 10

Sampler = Callable[[Hypothesis, np.random.Generator, int], np.ndarray]


def stream_id(point: int, hypothesis: int, trial: int) -> int:
    if not 0 <= trial < TRIAL_LIMIT:
        raise ConfigurationError(f"trial index {trial} outside the stream partition")
    return (point << POINT_SHIFT) | (int(hypothesis) << HYPOTHESIS_SHIFT) | trial


@dataclass(frozen=True)
class Tally:
    trials: int = 0
    errors: int = 0
    truncated: int = 0
    abstained: int = 0
    decided: int = 0
    n_sum: int = 0
    n_sq: int = 0

    def __add__(self, other: "Tally") -> "Tally":
        return Tally(
            self.trials + other.trials,
            self.errors + other.errors,
            self.truncated + other.truncated,
            self.abstained + other.abstained,
            self.decided + other.decided,
            self.n_sum + other.n_sum,
            self.n_sq + other.n_sq,
        )


def _run_chunk(system: SystemModel, hypothesis: int, seed: int, point: int, start: int, stop: int) -> Tally:
    errors = truncated = abstained = decided = n_sum = n_sq = 0
    for trial in range(start, stop):
        res = run_trial(system, Hypothesis(hypothesis), RngStream(seed, stream_id(point, hypothesis, trial)))
        errors += res.error
        if res.outcome is TrialOutcome.TRUNCATED:
            truncated += 1
        elif res.outcome is TrialOutcome.ABSTAINED:
            abstained += 1
        else:
            decided += 1
            n_sum += res.N
            n_sq += res.N * res.N
    return Tally(stop - start, errors, truncated, abstained, decided, n_sum, n_sq)


def tally_trials(
    system: SystemModel, hypothesis: Hypothesis, n_trials: int, seed: int, point: int = 0, threads: int = 1
) -> Tally:
    bounds = [(s, min(s + CHUNK_TRIALS, n_trials)) for s in range(0, n_trials, CHUNK_TRIALS)]
    if threads <= 1 or len(bounds) == 1:
        parts = [_run_chunk(system, int(hypothesis), seed, point, a, b) for a, b in bounds]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_chunk, system, int(hypothesis), seed, point, a, b) for a, b in bounds]
            parts = [f.result() for f in futures]
    total = Tally()
    for part in parts:
        total = total + part
    return total


def proportion_interval(errors: int, n: int) -> Tuple[float, float, float]:
    """(p, normal half-width, upper 95% limit); the limit is exact for few errors."""
    p = errors / n
    hw = Z95 * math.sqrt(p * (1 - p) * n / (n - 1)) / math.sqrt(n) if n > 1 else 0.0
    if errors < EXACT_INTERVAL_BELOW:
        ci = stats.binomtest(errors, n).proportion_ci(confidence_level=0.95, method="exact")
        return p, hw, float(ci.high)
    return p, hw, min(1.0, p + hw)


def _mean_interval(total: int, total_sq: int, count: int) -> Tuple[float, float]:
    if count == 0:
        return math.nan, math.nan
    mean = total / count
    if count == 1:
        return mean, 0.0
    var = max(0.0, (total_sq - total * total / count) / (count - 1))
    return mean, Z95 * math.sqrt(var) / math.sqrt(count)


@dataclass(frozen=True)
class PerformanceEstimate:
    p_fa: float
    p_fa_hw: float
    p_md: float
    p_md_hw: float
    e0_n: float
    e0_n_hw: float
    e1_n: float
    e1_n_hw: float
    n_trials: int
    truncated0: int = 0
    truncated1: int = 0
    abstained0: int = 0
    abstained1: int = 0
    p_fa_upper: float = 0.0
    p_md_upper: float = 0.0

    @property
    def mean_error(self) -> float:
        return (self.p_fa + self.p_md) / 2

    @property
    def mean_delay(self) -> float:
        return (self.e0_n + self.e1_n) / 2

    @property
    def truncated_fraction(self) -> float:
        return (self.truncated0 + self.truncated1) / (2 * self.n_trials)

    @property
    def p_fa_bound(self) -> float:
        """Upper 95% limit on P_FA: the larger of the exact and normal limits."""
        return max(self.p_fa_upper, self.p_fa + self.p_fa_hw)

    @property
    def p_md_bound(self) -> float:
        return max(self.p_md_upper, self.p_md + self.p_md_hw)

    def meets(self, target_pfa: float, target_pmd: float) -> bool:
        return self.p_fa_bound <= target_pfa and self.p_md_bound <= target_pmd

    @classmethod
    def from_tallies(cls, h0: Tally, h1: Tally) -> "PerformanceEstimate":
        p_fa, p_fa_hw, p_fa_up = proportion_interval(h0.errors, h0.trials)
        p_md, p_md_hw, p_md_up = proportion_interval(h1.errors, h1.trials)
        e0, e0_hw = _mean_interval(h0.n_sum, h0.n_sq, h0.decided)
        e1, e1_hw = _mean_interval(h1.n_sum, h1.n_sq, h1.decided)
        return cls(
            p_fa, p_fa_hw, p_md, p_md_hw, e0, e0_hw, e1, e1_hw, h0.trials,
            h0.truncated, h1.truncated, h0.abstained, h1.abstained, p_fa_up, p_md_up,
        )


def estimate(system: SystemModel, n_trials: int, seed: int, point: int = 0, threads: int = 1) -> PerformanceEstimate:
    """P_FA, P_MD and E_i[N] from ``n_trials`` trials per hypothesis."""
    if n_trials < 1:
        raise ConfigurationError("n_trials must be >= 1")
    h0 = tally_trials(system, Hypothesis.H0, n_trials, seed, point, threads)
    h1 = tally_trials(system, Hypothesis.H1, n_trials, seed, point, threads)
    est = PerformanceEstimate.from_tallies(h0, h1)
    if est.truncated0 or est.truncated1:
        logger.warning("point %d: %d/%d trials truncated at %d slots", point, h0.truncated, h1.truncated, system.max_slots)
    return est


@dataclass(frozen=True)
class ThresholdSchedule:
    c: float
    gamma0: Tuple[float, ...]
    gamma1: Tuple[float, ...]
    beta0: float
    beta1: float


def threshold_schedule(c: float, drifts: Sequence[Tuple[float, float]]) -> ThresholdSchedule:
    """beta = |log c|; node thresholds split |log c| in proportion to each node's drift."""
    if not 0 < c <= 1:
        raise ConfigurationError(f"threshold scale c must be in (0, 1], got {c}")
    if not drifts:
        raise ConfigurationError("at least one node drift is required")
    for e0, e1 in drifts:
        if not (e0 < 0 < e1):
            raise ConfigurationError(f"node drifts need E0 < 0 < E1, got ({e0}, {e1})")
    scale = abs(math.log(c))
    d0 = sum(e0 for e0, _ in drifts)
    d1 = sum(e1 for _, e1 in drifts)
    gamma0 = tuple(e0 / d0 * scale for e0, _ in drifts)
    gamma1 = tuple(e1 / d1 * scale for _, e1 in drifts)
    return ThresholdSchedule(c, gamma0, gamma1, scale, scale)


def apply_schedule(system: SystemModel, schedule: ThresholdSchedule) -> SystemModel:
    return system.with_thresholds(schedule.gamma0, schedule.gamma1, schedule.beta0, schedule.beta1)


@dataclass(frozen=True)
class SweepPoint:
    c: float
    schedule: ThresholdSchedule
    estimate: PerformanceEstimate


def sweep(
    system: SystemModel,
    drifts: Sequence[Tuple[float, float]],
    grid: Sequence[float],
    n_trials: int,
    seed: int,
    threads: int = 1,
) -> List[SweepPoint]:
    points = []
    for i, c in enumerate(grid):
        schedule = threshold_schedule(c, drifts)
        logger.info("sweep point %d: c=%g (|log c|=%g)", i, c, schedule.beta1)
        est = estimate(apply_schedule(system, schedule), n_trials, seed, point=i, threads=threads)
        points.append(SweepPoint(c, schedule, est))
    return points


def calibrate(
    system: SystemModel,
    drifts: Sequence[Tuple[float, float]],
    target_pfa: float,
    target_pmd: float,
    seed: int,
    n_trials: int,
    grid: Optional[Sequence[float]] = None,
    threads: int = 1,
) -> SweepPoint:
    """Smallest-delay grid point whose error upper limits meet both targets.

    ``grid`` holds c values; it is ordered by increasing |log c| and searched by
    bisection. Each grid index owns one stream partition, so a point evaluates
    identically however it is reached.
    """
    for target in (target_pfa, target_pmd):
        if not 0 < target <= 0.5:
            raise ConfigurationError("calibration targets must be in (0, 0.5]")
    cs = sorted(grid if grid is not None else default_calibration_grid(), reverse=True)
    cache: Dict[int, SweepPoint] = {}

    def evaluate(i: int) -> SweepPoint:
        if i not in cache:
            schedule = threshold_schedule(cs[i], drifts)
            est = estimate(apply_schedule(system, schedule), n_trials, seed, point=i, threads=threads)
            logger.info(
                "calibration c=%g: p_fa=%g (upper %g) p_md=%g (upper %g)",
                cs[i], est.p_fa, est.p_fa_bound, est.p_md, est.p_md_bound,
            )
            cache[i] = SweepPoint(cs[i], schedule, est)
        return cache[i]

    def ok(i: int) -> bool:
        return evaluate(i).estimate.meets(target_pfa, target_pmd)

    lo, hi = 0, len(cs) - 1
    if not ok(hi):
        def shortfall(i: int) -> float:
            est = cache[i].estimate
            return max(est.p_fa_bound / target_pfa, est.p_md_bound / target_pmd)

        closest = cache[min(cache, key=shortfall)]
        raise CalibrationFailure(
            f"targets ({target_pfa}, {target_pmd}) not reached on the grid; closest c={closest.c}", closest
        )
    if ok(lo):
        return evaluate(lo)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    qualifying = [p for p in cache.values() if p.estimate.meets(target_pfa, target_pmd)]
    return min(qualifying, key=lambda p: (p.estimate.mean_delay, -p.c))


def default_calibration_grid() -> List[float]:
    return [math.exp(-t) for t in np.linspace(0.5, 20.0, 40)]


@dataclass(frozen=True)
class MeansEstimate:
    mu0: float
    mu1: float
    mu0_hw: float
    mu1_hw: float


def _prerun(seed: int, salt: int, hypothesis: Hypothesis) -> RngStream:
    return RngStream(seed, stream_id(PRERUN_POINT, hypothesis, salt))


def estimate_means(sampler: Sampler, n: int, seed: int, K1: Optional[float] = None, salt: int = 0) -> MeansEstimate:
    """Monte-Carlo E_i[psi1(X)] under each hypothesis."""
    if n < 10_000:
        raise ConfigurationError("center pre-runs need at least 10^4 samples")
    means = []
    for hyp in (Hypothesis.H0, Hypothesis.H1):
        x = sampler(hyp, _prerun(seed, salt, hyp).generator(), n)
        if K1 is not None:
            x = psi_array(x, K1)
        means.append((float(np.mean(x)), Z95 * float(np.std(x, ddof=1)) / math.sqrt(n)))
    (mu0, hw0), (mu1, hw1) = means
    if mu1 - hw1 <= mu0 + hw0:
        raise ConfigurationError(f"hypotheses are not separated after clipping: mu0={mu0:.6g}, mu1={mu1:.6g}")
    logger.info("estimated centers mu0=%g mu1=%g", mu0, mu1)
    return MeansEstimate(mu0, mu1, hw0, hw1)


def node_observation_sampler(node: NodeModel, system: SystemModel) -> Sampler:
    """Sampler of one node's per-slot observation (marginal over fading)."""
    energy, sensing = system.energy, system.sensing

    def sampler(hypothesis: Hypothesis, gen: np.random.Generator, size: int) -> np.ndarray:
        M = energy.M
        if node.fading.mode is FadingMode.SLOW:
            gains = np.repeat(node.fading.gains(gen, size), M)
        else:
            gains = node.fading.gains(gen, size * M)
        raws = node.signal.raw_samples(hypothesis, gains, gen, size * M).reshape(size, M)
        return observe(raws, energy, sensing)

    return sampler


@dataclass(frozen=True)
class DriftEstimate:
    e0: float
    e1: float
    var0: float
    var1: float


def estimate_drifts(system: SystemModel, n: int, seed: int) -> List[DriftEstimate]:
    """Mean and variance of each node's test increment under H0 and H1.

    Buffered kinds (rank, t, M-t) have no increment; their centered observation
    stands in for it.
    """
    out = []
    for l, node in enumerate(system.nodes):
        sampler = node_observation_sampler(node, system)
        stats_ = []
        for hyp in (Hypothesis.H0, Hypothesis.H1):
            x = sampler(hyp, _prerun(seed, (1 << 20) + l, hyp).generator(), n)
            inc = increments(node.test, x) if node.test.kind.iterative else x - node.test.center
            stats_.append((float(np.mean(inc)), float(np.var(inc, ddof=1))))
        out.append(DriftEstimate(stats_[0][0], stats_[1][0], stats_[0][1], stats_[1][1]))
    return out


IncrementSource = Union[DistributionSpec, Callable[[np.random.Generator, int], np.ndarray]]


def _incrementer(source: IncrementSource) -> Callable[[np.random.Generator, int], np.ndarray]:
    if isinstance(source, DistributionSpec):
        return source.sample
    return source


@dataclass(frozen=True)
class FirstPassage:
    steps: np.ndarray
    upper: np.ndarray
    finished: np.ndarray


def first_passage(
    source: IncrementSource,
    n_walks: int,
    lower: float,
    upper: float,
    rng: RngLike,
    max_steps: int = 1_000_000,
) -> FirstPassage:
    """Exit times of independent walks from ``(-lower, upper)``."""
    gen = as_generator(rng)
    draw = _incrementer(source)
    position = np.zeros(n_walks)
    steps = np.zeros(n_walks, dtype=np.int64)
    hit_upper = np.zeros(n_walks, dtype=bool)
    active = np.arange(n_walks)
    step = 0
    while active.size and step < max_steps:
        step += 1
        position[active] += draw(gen, active.size)
        p = position[active]
        up = p >= upper
        out = up | (p <= -lower)
        done = active[out]
        steps[done] = step
        hit_upper[done] = up[out]
        active = active[~out]
    finished = np.ones(n_walks, dtype=bool)
    finished[active] = False
    steps[active] = max_steps
    return FirstPassage(steps, hit_upper, finished)


def walk_supremum(
    source: IncrementSource,
    n_walks: int,
    rng: RngLike,
    floor: float = -20.0,
    cap: float = np.inf,
    max_steps: int = 100_000,
) -> np.ndarray:
    """Running maximum of negative-drift walks, followed until they sink below ``floor``."""
    gen = as_generator(rng)
    draw = _incrementer(source)
    position = np.zeros(n_walks)
    best = np.zeros(n_walks)
    active = np.arange(n_walks)
    step = 0
    while active.size and step < max_steps:
        step += 1
        position[active] += draw(gen, active.size)
        best[active] = np.maximum(best[active], position[active])
        keep = (position[active] > floor) & (best[active] < cap)
        active = active[keep]
    return best


def walk_supremum_exceeds(
    source: IncrementSource, n_walks: int, levels: Sequence[float], rng: RngLike, floor: float = -20.0
) -> List[Tuple[float, float]]:
    """Empirical P[sup walk >= t1] and its standard error for each level."""
    best = walk_supremum(source, n_walks, rng, floor=floor, cap=max(levels))
    out = []
    for t1 in levels:
        p = float(np.mean(best >= t1))
        out.append((p, math.sqrt(p * (1 - p) / n_walks)))
    return out
