"""
Closed-form and semi-analytic performance predictions.

All delay formulas work with drift magnitudes ``|theta|``; an increment model
under H0 must have negative mean and one under H1 positive mean.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize, stats

from .channel import FadingModel
from .distributions import DistributionSpec, Gaussian, RngStream
from .errors import ApproximationDivergence, DomainError, UnsupportedOperationError

logger = logging.getLogger(__name__)

ORDER_STAT_REPLICATES = 1_000_000
_ORDER_STAT_BATCH = 100_000


@dataclass(frozen=True)
class IncrementModel:
    """Moments of a walk increment Y_1 as used by the bound formulas."""

    theta: float
    second_moment: float
    neg_first: float
    neg_second: float
    pos_second: float
    mgf: Optional[Callable[[float], float]] = field(default=None, compare=False)
    tail: Optional[Callable[[float], float]] = field(default=None, compare=False)
    tail_index: Optional[float] = None

    @property
    def variance(self) -> float:
        return self.second_moment - self.theta ** 2

    @classmethod
    def gaussian(cls, mean: float, variance: float) -> "IncrementModel":
        sd = math.sqrt(variance)
        dist = stats.norm(loc=mean, scale=sd)
        neg_first = float(dist.expect(lambda y: -y, ub=0.0))
        neg_second = float(dist.expect(lambda y: y * y, ub=0.0))
        pos_second = float(dist.expect(lambda y: y * y, lb=0.0))
        return cls(
            theta=mean,
            second_moment=variance + mean ** 2,
            neg_first=neg_first,
            neg_second=neg_second,
            pos_second=pos_second,
            mgf=lambda s: math.exp(s * mean + 0.5 * s * s * variance),
            tail=lambda x: float(dist.sf(x)),
        )

    @classmethod
    def from_distribution(cls, spec: DistributionSpec) -> "IncrementModel":
        if isinstance(spec, Gaussian):
            return cls.gaussian(spec.mean(), spec.variance())
        raise UnsupportedOperationError(f"no quadrature model for {spec.kind}; use from_samples")

    @classmethod
    def from_samples(
        cls, samples: np.ndarray, tail_index: Optional[float] = None, light_tailed: bool = True
    ) -> "IncrementModel":
        """Empirical moments; the MGF is kept only for (bounded) light-tailed increments."""
        y = np.asarray(samples, dtype=float)
        neg = np.minimum(y, 0.0)
        pos = np.maximum(y, 0.0)
        sorted_y = np.sort(y)

        def tail(x: float) -> float:
            return float(1.0 - np.searchsorted(sorted_y, x, side="right") / y.size)

        mgf = (lambda s: float(np.mean(np.exp(s * y)))) if light_tailed else None
        return cls(
            theta=float(y.mean()),
            second_moment=float(np.mean(y * y)),
            neg_first=float(np.mean(-neg)),
            neg_second=float(np.mean(neg * neg)),
            pos_second=float(np.mean(pos * pos)),
            mgf=mgf,
            tail=tail,
            tail_index=tail_index,
        )

    def reflected(self) -> "IncrementModel":
        """Model of -Y_1, turning an H1 walk into one with negative drift."""
        mgf = self.mgf
        return IncrementModel(
            theta=-self.theta,
            second_moment=self.second_moment,
            neg_first=self.theta + self.neg_first,
            neg_second=self.pos_second,
            pos_second=self.neg_second,
            mgf=(lambda s: mgf(-s)) if mgf is not None else None,
            tail_index=self.tail_index,
        )


def stop_time_bounds(model: IncrementModel, t0: float) -> Tuple[float, float]:
    """Bracket on E0[N0(-t0)] for a negative-drift walk."""
    if model.theta >= 0:
        raise DomainError("stop-time bounds need a negative drift")
    if not math.isfinite(model.neg_second):
        raise DomainError("stop-time bounds need E[(Y-)^2] < inf")
    if t0 < 0:
        raise DomainError("t0 must be non-negative")
    lower = t0 / abs(model.theta)
    return lower, lower + model.neg_second / (2 * model.theta ** 2)


@dataclass(frozen=True)
class LundbergExponent:
    gamma: float
    moment_bound: float


def lundberg_exponent(model: IncrementModel) -> LundbergExponent:
    """Positive root of E[exp(s Y)] = 1 for a negative-drift light-tailed increment."""
    if model.mgf is None:
        raise UnsupportedOperationError("increment MGF is not finite; use the heavy-tail path")
    if model.theta >= 0:
        raise DomainError("the Lundberg exponent needs a negative drift")

    def log_mgf(s: float) -> float:
        return math.log(model.mgf(s))

    s = 1.0
    if log_mgf(s) < 0:
        lo = s
        while log_mgf(s) < 0:
            lo, s = s, s * 2
            if s > 1e6:
                raise UnsupportedOperationError("MGF stays below 1; no positive root")
        hi = s
    else:
        hi = s
        while log_mgf(s) >= 0:
            hi, s = s, s / 2
            if s < 1e-12:
                raise DomainError("no positive Lundberg root found")
        lo = s
    gamma = optimize.brentq(log_mgf, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    bound = model.theta ** 2 / (model.neg_first * model.second_moment)
    return LundbergExponent(float(gamma), float(bound))


def pfa_light_tail(gamma: float, t1: float) -> float:
    """Cramer-Lundberg bound P0[sup W >= t1] <= exp(-Gamma t1)."""
    if gamma <= 0:
        raise DomainError("Lundberg exponent must be positive")
    return math.exp(-gamma * t1)


def pfa_heavy_tail(
    model: IncrementModel, t0: float, t1: float, expected_stop: Optional[float] = None
) -> float:
    """(1 - F(t1)) * E0[N0(-t0)] with the bracket midpoint standing in for E0[N0]."""
    if model.tail is None:
        raise UnsupportedOperationError("increment model carries no tail function")
    if expected_stop is None:
        lo, hi = stop_time_bounds(model, t0)
        expected_stop = (lo + hi) / 2
    return model.tail(t1) * expected_stop


def heavy_tail_delay(theta0: float, theta1: float, alpha1: float, alpha: float, beta: float) -> Tuple[float, float]:
    """Mean delays of the plain random walk with regularly varying increments (constants dropped)."""
    if alpha1 <= 1:
        raise DomainError("tail index must exceed 1")
    for target in (alpha, beta):
        if not 0 < target < 1:
            raise DomainError("error targets must be in (0, 1)")
    e = 1.0 / (1.0 - alpha1 ** 2)
    t0, t1 = abs(theta0), abs(theta1)
    e0 = t0 ** (e - 1) * (alpha * t1 ** alpha1 * beta ** alpha1) ** e
    e1 = t1 ** (e - 1) * (beta * t0 ** alpha1 * alpha ** alpha1) ** e
    return e0, e1


def solve_heavy_tail_thresholds(
    theta0: float, theta1: float, alpha1: float, alpha: float, beta: float
) -> Tuple[float, float]:
    """Solve alpha = t1^-a1 t0/theta0, beta = t0^-a1 t1/theta1 for (t0, t1)."""
    if alpha1 == 1:
        raise DomainError("tail index 1 makes the system singular")
    th0, th1 = abs(theta0), abs(theta1)

    def residual(v: np.ndarray) -> np.ndarray:
        u0, u1 = v
        return np.array(
            [
                -alpha1 * u1 + u0 - math.log(th0) - math.log(alpha),
                -alpha1 * u0 + u1 - math.log(th1) - math.log(beta),
            ]
        )

    guess = np.array([math.log(th0 / alpha), math.log(th1 / beta)])
    sol, info, ier, msg = optimize.fsolve(residual, guess, full_output=True, xtol=1e-14)
    if ier != 1:
        raise DomainError(f"heavy-tail threshold system did not converge: {msg}")
    return float(math.exp(sol[0])), float(math.exp(sol[1]))


def light_tail_delay(
    theta0: float, theta1: float, gamma0: float, gamma1: float, alpha: float, beta: float
) -> Tuple[float, float]:
    """Asymptotic delays |log beta| / (|theta0| Gamma1) and |log alpha| / (theta1 Gamma0)."""
    if gamma0 <= 0 or gamma1 <= 0:
        raise DomainError("Lundberg exponents must be positive")
    return abs(math.log(beta)) / (abs(theta0) * gamma1), abs(math.log(alpha)) / (abs(theta1) * gamma0)


def delay_slope_limit(d_tot: float, delta_all: float, e_abs_xi: float) -> float:
    """Upper limit of N / |log c| as c -> 0: 1/|D_tot| + (1 + E|xi*|/|D_tot|) / |Delta|."""
    if d_tot == 0 or delta_all == 0:
        raise DomainError("drifts must be non-zero")
    return 1 / abs(d_tot) + (1 + e_abs_xi / abs(d_tot)) / abs(delta_all)


@dataclass(frozen=True)
class DeltaBudget:
    delta: float
    outage: float
    conditional_target: float


def delta_budget(fading: FadingModel, delta1: float, target: float) -> DeltaBudget:
    """Largest delta with P[|H| <= delta] <= delta1, and the residual conditional error target."""
    if not 0 <= delta1 < target < 1:
        raise DomainError("need 0 <= delta1 < target < 1")
    if fading.outage_probability(0.0) > delta1:
        raise DomainError("outage at delta = 0 already exceeds the budget")
    hi = 1.0
    while fading.outage_probability(hi) <= delta1:
        hi *= 2
        if hi > 1e6:
            break
    delta = optimize.brentq(lambda d: fading.outage_probability(d) - delta1, 0.0, hi, xtol=1e-12)
    return DeltaBudget(delta, fading.outage_probability(delta), (target - delta1) / (1 - delta1))


def node_stop_gaussian_approx(gamma: float, delta: float, rho2: float) -> Tuple[float, float]:
    """Gaussian approximation of a node's stopping time: (gamma/|delta|, gamma rho^2/|delta|^3)."""
    if delta == 0:
        raise DomainError("node drift must be non-zero")
    if gamma <= 0:
        raise DomainError("threshold must be positive")
    d = abs(delta)
    return gamma / d, gamma * rho2 / d ** 3


def _order_statistic_samples(params: Sequence[Tuple[float, float]], seed: int, replicates: int) -> np.ndarray:
    """Sorted draws of L independent Gaussians, shape (replicates, L)."""
    means = np.array([m for m, _ in params])
    sds = np.sqrt(np.array([v for _, v in params]))
    gen = RngStream(seed, 0).generator()
    batches = []
    for start in range(0, replicates, _ORDER_STAT_BATCH):
        size = min(_ORDER_STAT_BATCH, replicates - start)
        batches.append(np.sort(means + sds * gen.standard_normal((size, len(params))), axis=1))
    return np.concatenate(batches)


def order_statistic_means(
    params: Sequence[Tuple[float, float]], seed: int = 0, replicates: int = ORDER_STAT_REPLICATES
) -> np.ndarray:
    """E[t_k], k = 1..L, for independent (possibly non-identical) Gaussian node times."""
    if not params:
        raise DomainError("need at least one node")
    if len(params) == 1:
        return np.array([float(params[0][0])])
    return _order_statistic_samples(params, seed, replicates).mean(axis=0)


def first_decision_cdf(
    params: Sequence[Tuple[float, float]], seed: int = 0, replicates: int = ORDER_STAT_REPLICATES
) -> Callable[[float], float]:
    """Empirical CDF of the earliest node stopping time t_1."""
    mins = np.sort(_order_statistic_samples(params, seed, replicates)[:, 0])

    def cdf(k: float) -> float:
        return float(np.searchsorted(mins, k, side="right") / mins.size)

    return cdf


@dataclass(frozen=True)
class DriftSchedule:
    """FC mean drift with j nodes transmitting, and the expected change times t_j.

    ``drifts[j]`` applies on ``[t_j, t_{j+1})`` with ``t_0 = 0``.
    """

    drifts: Tuple[float, ...]
    change_times: Tuple[float, ...]
    levels: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if len(self.drifts) != len(self.change_times):
            raise DomainError("need one change time per drift phase")
        if self.change_times[0] != 0:
            raise DomainError("the first phase starts at t_0 = 0")
        levels = [0.0]
        for j in range(1, len(self.drifts)):
            levels.append(levels[-1] + self.drifts[j - 1] * (self.change_times[j] - self.change_times[j - 1]))
        object.__setattr__(self, "drifts", tuple(self.drifts))
        object.__setattr__(self, "change_times", tuple(self.change_times))
        object.__setattr__(self, "levels", tuple(levels))


def fc_delay_approx(schedule: DriftSchedule, barrier: float) -> float:
    """Mean FC delay to a signed barrier (-beta0 under H0, +beta1 under H1).

    The first phase whose drift heads for the barrier and reaches it before the
    next change time decides the delay.
    """
    if barrier == 0:
        return 0.0
    direction = math.copysign(1.0, barrier)
    last = len(schedule.drifts) - 1
    for j, drift in enumerate(schedule.drifts):
        if drift * direction <= 0:
            continue
        remaining = max(0.0, (barrier - schedule.levels[j]) / drift)
        if j == last or remaining < schedule.change_times[j + 1] - schedule.change_times[j]:
            return schedule.change_times[j] + remaining
    raise ApproximationDivergence("no drift phase reaches the barrier")


@dataclass(frozen=True)
class ErrorApprox:
    lower: float
    upper: float
    remainder: float


def fc_error_approx(
    barrier: float,
    pre_increments: np.ndarray,
    first_decision: Callable[[float], float],
    n_terms: int,
    grid_points: int = 2001,
) -> ErrorApprox:
    """Series approximation of P0(FC crosses ``barrier`` before the first node decides).

    ``pre_increments`` are samples of the FC increment while all nodes are silent;
    the k-1 step sum is replaced by a Gaussian with the exact mean and variance.
    """
    if n_terms < 1:
        raise DomainError("n_terms must be >= 1")
    if not math.isfinite(barrier):
        return ErrorApprox(0.0, 0.0, 0.0)
    z = np.sort(np.asarray(pre_increments, dtype=float))
    m, v = float(z.mean()), float(z.var())
    top = max(float(z[-1]), 0.0)
    u = np.linspace(0.0, top, grid_points) if top > 0 else np.zeros(1)
    survival = 1.0 - np.searchsorted(z, u, side="right") / z.size

    lower = upper = 0.0
    for k in range(1, n_terms + 1):
        late = 1.0 - first_decision(k)
        if late <= 0:
            continue
        if k == 1:
            crossing = float(np.mean(z >= barrier))
            s_lo = s_hi = 1.0
        else:
            mean, sd = (k - 1) * m, math.sqrt((k - 1) * v)
            if sd == 0:
                crossing = float(np.mean(z >= barrier - mean)) if mean < barrier else 0.0
            else:
                density = stats.norm.pdf(barrier - u, loc=mean, scale=sd)
                crossing = float(integrate.trapezoid(survival * density, u)) if u.size > 1 else 0.0
            above = float(stats.norm.sf(barrier, loc=mean, scale=sd)) if sd > 0 else float(mean >= barrier)
            s_lo = max(0.0, 1.0 - 2.0 * above)
            s_hi = 1.0 - above
        lower += crossing * s_lo * late
        upper += crossing * s_hi * late

    remainder = 0.0
    k = n_terms + 1
    while True:
        late = 1.0 - first_decision(k)
        if late <= 1e-15 or k > n_terms + 1_000_000:
            break
        remainder += late
        k += 1
    return ErrorApprox(lower, min(1.0, upper), remainder)


@dataclass(frozen=True)
class GaussianAssumptionReport:
    R0: float
    eta: float
    gamma_l: float
    gamma_prime: float
    k2: float
    alpha0: float
    feasible: bool
    Gamma0: float
    exponent_candidates: Tuple[float, float, float]

    @property
    def exponent(self) -> float:
        return min(self.exponent_candidates)


def verify_theorem3_gaussian(
    mu0: float,
    mu1: float,
    sigma2: float,
    L: int,
    mubar0: float,
    mubar1: float,
    sigmabar2: float,
    eta: Optional[float] = None,
    r: float = 0.5,
) -> GaussianAssumptionReport:
    """Check the exponential-decay assumptions for Gaussian node and FC increments."""
    if not mu0 < 0 < mu1:
        raise DomainError("need mu0 < 0 < mu1")
    R0 = mu0 ** 2 / (2 * sigma2)
    eta = R0 / 2 if eta is None else eta
    if not 0 < eta:
        raise DomainError("eta must be positive")
    disc = mu1 ** 2 - 2 * sigma2 * eta
    if disc < 0:
        raise DomainError("eta infeasible: mu1^2 < 2 sigma^2 eta, reduce eta")
    gamma_l = 1.0 / L
    gamma_prime = (mu1 - math.sqrt(disc)) / sigma2
    k2 = L * gamma_l * gamma_prime
    # largest alpha0 with mu0 a + sigma^2 a^2 / 2 <= eta
    alpha0 = (-mu0 + math.sqrt(mu0 ** 2 + 2 * sigma2 * eta)) / sigma2
    Gamma0 = (mubar1 - mubar0) / sigmabar2
    local_gamma = 2 * abs(mu0) / sigma2
    candidates = (r * alpha0 - k2, Gamma0 * (1 - r), local_gamma * gamma_l)
    return GaussianAssumptionReport(R0, eta, gamma_l, gamma_prime, k2, alpha0, k2 < alpha0, Gamma0, candidates)


def build_drift_schedule(
    fc_drifts: Sequence[float], node_params: Sequence[Tuple[float, float]], seed: int = 0,
    replicates: int = ORDER_STAT_REPLICATES,
) -> DriftSchedule:
    """Drift schedule from FC drifts per transmitting count and Gaussian node stop times."""
    if len(fc_drifts) != len(node_params) + 1:
        raise DomainError("need L+1 FC drifts for L nodes")
    times = order_statistic_means(node_params, seed=seed, replicates=replicates)
    return DriftSchedule(tuple(fc_drifts), (0.0,) + tuple(float(t) for t in times))


@dataclass(frozen=True)
class DecayFit:
    loglog_slope: float
    loglog_r2: float
    linlog_slope: float
    linlog_r2: float


def fit_decay(xs: Sequence[float], ps: Sequence[float]) -> DecayFit:
    """Straight-line fits of log p against log x (polynomial) and against x (exponential)."""
    x = np.asarray(xs, dtype=float)
    p = np.asarray(ps, dtype=float)
    keep = p > 0
    if keep.sum() < 3:
        raise DomainError("need at least three positive probabilities to fit a decay")
    x, logp = x[keep], np.log(p[keep])
    loglog = stats.linregress(np.log(x), logp)
    linlog = stats.linregress(x, logp)
    return DecayFit(loglog.slope, loglog.rvalue ** 2, linlog.slope, linlog.rvalue ** 2)


def hill_estimator(samples: np.ndarray, k: int) -> float:
    """Hill estimate of the tail index from the k largest |samples|."""
    x = np.sort(np.abs(np.asarray(samples, dtype=float)))[::-1]
    if not 1 <= k < x.size:
        raise DomainError("k must be in [1, n)")
    top = x[: k + 1]
    return float(1.0 / np.mean(np.log(top[:k] / top[k])))
