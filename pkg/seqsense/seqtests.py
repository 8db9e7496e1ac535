"""
Online sequential test kernels.

Each test is described by an immutable :class:`TestSpec` and advanced through
immutable :class:`TestState` values: ``update`` folds one observation in and
``check`` reads the two-sided decision against ``(-gamma0, gamma1)``.
Only the random-walk kinds are iterative; the rank, t and M-t statistics
carry whatever they need to recompute the statistic after every sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional, Tuple

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigurationError, DomainError


class TestKind(str, Enum):
    RANK = "rank"
    TTEST = "ttest"
    RANDOM_WALK = "random_walk"
    MT = "mt"
    M_RANDOM_WALK = "m_random_walk"
    M2_RANDOM_WALK = "m2_random_walk"

    @property
    def iterative(self) -> bool:
        return self in (TestKind.RANDOM_WALK, TestKind.M_RANDOM_WALK, TestKind.M2_RANDOM_WALK)


class Decision(str, Enum):
    CONTINUE = "continue"
    DECIDE_H0 = "decide_h0"
    DECIDE_H1 = "decide_h1"


def psi(z: float, K: float) -> float:
    """Huber clip: z limited to [-K, K]."""
    if z > K:
        return K
    if z < -K:
        return -K
    return z


def psi_array(z: np.ndarray, K: float) -> np.ndarray:
    return np.clip(z, -K, K)


@dataclass(frozen=True)
class TestSpec:
    kind: TestKind
    mu0: float
    mu1: float
    gamma0: float = 1.0
    gamma1: float = 1.0
    K: float = 5.0
    K1: float = 200.0
    min_samples: Optional[int] = None

    __test__ = False  # not a pytest class

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", TestKind(self.kind))
        if not self.mu1 > self.mu0:
            raise ConfigurationError(f"test centers need mu1 > mu0, got mu0={self.mu0}, mu1={self.mu1}")
        if not (self.K > 0 and self.K1 > 0):
            raise ConfigurationError("clip constants K and K1 must be positive")
        if self.gamma0 < 0 or self.gamma1 < 0:
            raise ConfigurationError("thresholds are magnitudes and must be non-negative")
        if self.min_samples is None:
            default = 2 if self.kind in (TestKind.TTEST, TestKind.MT) else 1
            object.__setattr__(self, "min_samples", default)
        elif self.min_samples < 1:
            raise ConfigurationError("min_samples must be >= 1")

    @property
    def center(self) -> float:
        return (self.mu0 + self.mu1) / 2

    def with_thresholds(self, gamma0: float, gamma1: float) -> "TestSpec":
        return replace(self, gamma0=gamma0, gamma1=gamma1)


class SampleLog:
    """Append-only sample store shared by the successive states of one run.

    Extending a state that is not the newest copies its prefix first, so every
    state keeps seeing exactly its own ``n`` samples.
    """

    __slots__ = ("_data", "_size")

    def __init__(self, capacity: int = 64) -> None:
        self._data = np.empty(capacity)
        self._size = 0

    def view(self, n: int) -> np.ndarray:
        return self._data[:n]

    def appended(self, n: int, x: float) -> "SampleLog":
        log = self
        if n != self._size:
            log = SampleLog(max(64, 2 * n))
            log._data[:n] = self._data[:n]
            log._size = n
        if log._size == log._data.size:
            grown = np.empty(2 * log._data.size)
            grown[: log._size] = log._data[: log._size]
            log._data = grown
        log._data[log._size] = x
        log._size += 1
        return log


@dataclass(frozen=True)
class TestState:
    """Running statistic after ``n`` updates.

    ``mean`` and ``m2`` carry the Welford recursion for the t test; ``buffer``
    holds the samples (raw for M-t, centered for rank) for the buffered kinds.
    An undefined statistic (zero dispersion) is NaN.
    """

    n: int = 0
    T: float = 0.0
    mean: float = 0.0
    m2: float = 0.0
    buffer: Optional[SampleLog] = None

    __test__ = False


def initial_state(spec: TestSpec) -> TestState:
    return TestState()


def increment(spec: TestSpec, x: float) -> float:
    """Increment of an iterative statistic for observation ``x``."""
    kind = spec.kind
    if kind is TestKind.RANDOM_WALK:
        return x - spec.center
    if kind is TestKind.M_RANDOM_WALK:
        return psi(x - spec.center, spec.K)
    if kind is TestKind.M2_RANDOM_WALK:
        return psi(psi(x, spec.K1) - spec.center, spec.K)
    raise DomainError(f"{kind.value} is not an iterative test")


def increments(spec: TestSpec, xs: np.ndarray) -> np.ndarray:
    """Vectorised :func:`increment`."""
    kind = spec.kind
    if kind is TestKind.RANDOM_WALK:
        return xs - spec.center
    if kind is TestKind.M_RANDOM_WALK:
        return psi_array(xs - spec.center, spec.K)
    if kind is TestKind.M2_RANDOM_WALK:
        return psi_array(psi_array(xs, spec.K1) - spec.center, spec.K)
    raise DomainError(f"{kind.value} is not an iterative test")


def _rank_statistic(y: np.ndarray) -> float:
    ranks = rankdata(np.abs(y))  # midranks for ties
    return float(np.sum(np.sign(y) * ranks) / (len(y) + 1))


def _mt_statistic(x: np.ndarray, spec: TestSpec) -> float:
    numerator = float(np.sum(psi_array(x - spec.center, spec.K)))
    spread = float(np.sum(psi_array(x - x.mean(), spec.K) ** 2))
    if spread <= 0.0:
        return math.nan
    return numerator / math.sqrt(spread)


def update(state: TestState, spec: TestSpec, x: float) -> TestState:
    n = state.n + 1
    kind = spec.kind
    if kind.iterative:
        return replace(state, n=n, T=state.T + increment(spec, x))
    if kind is TestKind.TTEST:
        delta = x - state.mean
        mean = state.mean + delta / n
        m2 = state.m2 + delta * (x - mean)
        if n < 2 or m2 <= 0.0:
            T = math.nan
        else:
            s_n = math.sqrt(m2 / (n - 1))
            # factor n rather than sqrt(n)
            T = n * (mean - spec.center) / s_n
        return TestState(n=n, T=T, mean=mean, m2=m2)
    log = state.buffer or SampleLog()
    if kind is TestKind.MT:
        log = log.appended(state.n, x)
        return TestState(n=n, T=_mt_statistic(log.view(n), spec), buffer=log)
    log = log.appended(state.n, x - spec.center)
    return TestState(n=n, T=_rank_statistic(log.view(n)), buffer=log)


def check(state: TestState, spec: TestSpec) -> Decision:
    if state.n < spec.min_samples or math.isnan(state.T):
        return Decision.CONTINUE
    if state.T >= spec.gamma1:
        return Decision.DECIDE_H1
    if state.T <= -spec.gamma0:
        return Decision.DECIDE_H0
    return Decision.CONTINUE


def delta_gate(gain_magnitude: float, delta: float) -> bool:
    """True when the node participates, i.e. |H| > delta."""
    if gain_magnitude < 0:
        raise DomainError("gain magnitude must be non-negative")
    if delta < 0:
        raise ConfigurationError("delta must be non-negative")
    return gain_magnitude > delta


def run_sequence(spec: TestSpec, xs: Iterable[float]) -> Tuple[Decision, int]:
    """Feed ``xs`` until the test stops; returns the decision and samples used."""
    state = initial_state(spec)
    for x in xs:
        state = update(state, spec, x)
        decision = check(state, spec)
        if decision is not Decision.CONTINUE:
            return decision, state.n
    return Decision.CONTINUE, state.n
