"""
Raw observations at the sensing nodes, energy samples and the reporting MAC.

A node sees ``X = H*S + N`` under H1 and ``X = N`` under H0, where the noise
term is receiver noise plus optional EMI, possibly replaced by an outlier.
Energy samples are blockwise sums of ``|X|^p`` over ``M`` consecutive raws.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, stats

from .distributions import (
    DistributionSpec,
    Gaussian,
    LogNormal,
    Rayleigh,
    RngLike,
    as_generator,
    draw,
)
from .errors import ConfigurationError, ContractViolation, UnsupportedOperationError

logger = logging.getLogger(__name__)


class Hypothesis(IntEnum):
    H0 = 0
    H1 = 1


class FadingMode(str, Enum):
    NONE = "none"
    SLOW = "slow"
    FAST = "fast"


@dataclass(frozen=True)
class FadingModel:
    """Composite gain ``H = P * R`` with ``P`` from ``shadow`` and ``R`` from ``multipath``.

    With unit-scale Rayleigh multipath this is a Rayleigh law whose scale is the
    shadowing draw. ``NONE`` gives the deterministic gain 1.
    """

    mode: FadingMode = FadingMode.NONE
    multipath: DistributionSpec = Rayleigh(1.0)
    shadow: Optional[DistributionSpec] = LogNormal(0.0, 0.36)

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", FadingMode(self.mode))

    def gains(self, rng: RngLike, size: int) -> np.ndarray:
        gen = as_generator(rng)
        if self.mode is FadingMode.NONE:
            return np.ones(size)
        scale = self.shadow.sample(gen, size) if self.shadow is not None else np.ones(size)
        return scale * self.multipath.sample(gen, size)

    def draw_gain(self, rng: RngLike) -> float:
        return float(self.gains(rng, 1)[0])

    def second_moment(self) -> float:
        """E[H^2]."""
        if self.mode is FadingMode.NONE:
            return 1.0
        shadow = self.shadow.second_moment() if self.shadow is not None else 1.0
        return shadow * self.multipath.second_moment()

    def outage_probability(self, delta: float) -> float:
        """P[|H| <= delta]."""
        if delta < 0:
            raise ConfigurationError("delta must be non-negative")
        if self.mode is FadingMode.NONE:
            return 1.0 if delta >= 1.0 else 0.0

        def cdf_multipath(x: float) -> float:
            return 1.0 - self.multipath.tail_complement(x)

        if self.shadow is None:
            return cdf_multipath(delta)
        if not isinstance(self.shadow, LogNormal):
            raise UnsupportedOperationError("outage probability needs a log-normal or absent shadow law")
        shadow = stats.lognorm(s=math.sqrt(self.shadow.variance_), scale=math.exp(self.shadow.mean_))
        if delta == 0:
            return 0.0
        value, _ = integrate.quad(lambda p: shadow.pdf(p) * cdf_multipath(delta / p), 0.0, np.inf, limit=200)
        return min(1.0, max(0.0, value))


@dataclass(frozen=True)
class OutlierModel:
    """Replacement outliers: with probability ``epsilon`` the noise term comes from ``law``."""

    epsilon: float
    law: DistributionSpec = Gaussian(0.0, 20.0)
    applies_under: str = "h1"

    def __post_init__(self) -> None:
        if not 0 <= self.epsilon <= 1:
            raise ConfigurationError(f"outlier epsilon must be in [0, 1], got {self.epsilon}")
        if self.applies_under not in ("h1", "both"):
            raise ConfigurationError("outlier applies_under must be 'h1' or 'both'")

    def active(self, hypothesis: Hypothesis) -> bool:
        return self.epsilon > 0 and (self.applies_under == "both" or hypothesis is Hypothesis.H1)


@dataclass(frozen=True)
class NoiseModel:
    """Receiver noise plus optional EMI, with optional outlier replacement."""

    base: DistributionSpec = field(default_factory=Gaussian)
    emi: Optional[DistributionSpec] = None
    outlier: Optional[OutlierModel] = None

    def samples(self, hypothesis: Hypothesis, gen: np.random.Generator, size: int) -> np.ndarray:
        noise = self.base.sample(gen, size)
        if self.emi is not None:
            noise = noise + self.emi.sample(gen, size)
        if self.outlier is not None and self.outlier.active(hypothesis):
            hit = gen.random(size) < self.outlier.epsilon
            noise = np.where(hit, self.outlier.law.sample(gen, size), noise)
        return noise

    def moments(self, hypothesis: Hypothesis) -> Tuple[float, float]:
        """(E[N], E[N^2]) of the composite noise term."""
        mean = self.base.mean()
        second = self.base.second_moment()
        if self.emi is not None:
            emi_mean = self.emi.mean()
            second = second + 2 * mean * emi_mean + self.emi.second_moment()
            mean = mean + emi_mean
        if self.outlier is not None and self.outlier.active(hypothesis):
            eps = self.outlier.epsilon
            mean = (1 - eps) * mean + eps * self.outlier.law.mean()
            second = (1 - eps) * second + eps * self.outlier.law.second_moment()
        return mean, second


@dataclass(frozen=True)
class SignalModel:
    alphabet: Tuple[Tuple[float, float], ...] = ((-1.0, 0.5), (1.0, 0.5))
    amplitude: float = 1.0
    amplitude_h0: float = 0.0
    noise: DistributionSpec = field(default_factory=Gaussian)
    emi: Optional[DistributionSpec] = None
    outlier: Optional[OutlierModel] = None

    @property
    def noise_model(self) -> NoiseModel:
        return NoiseModel(self.noise, self.emi, self.outlier)

    def __post_init__(self) -> None:
        alphabet = tuple((float(s), float(p)) for s, p in self.alphabet)
        if not alphabet or any(p < 0 for _, p in alphabet):
            raise ConfigurationError("symbol alphabet needs non-negative probabilities")
        if abs(sum(p for _, p in alphabet) - 1.0) > 1e-12:
            raise ConfigurationError("symbol probabilities must sum to 1")
        object.__setattr__(self, "alphabet", alphabet)

    def symbols(self, gen: np.random.Generator, size: int) -> np.ndarray:
        values = np.array([s for s, _ in self.alphabet])
        if len(values) == 1:
            return np.full(size, values[0])
        probs = np.array([p for _, p in self.alphabet])
        return gen.choice(values, size=size, p=probs / probs.sum())

    def symbol_mean(self) -> float:
        return sum(s * p for s, p in self.alphabet)

    def symbol_power(self) -> float:
        """E[S^2]."""
        return sum(s * s * p for s, p in self.alphabet)

    def raw_samples(self, hypothesis: Hypothesis, gains: np.ndarray, gen: np.random.Generator, size: int) -> np.ndarray:
        """``size`` raws with per-sample (or broadcast scalar) gains."""
        symbols = self.symbols(gen, size)
        noise = self.noise_model.samples(hypothesis, gen, size)
        if hypothesis is Hypothesis.H1:
            return gains * self.amplitude * symbols + noise
        if self.amplitude_h0:
            return noise - gains * self.amplitude_h0 * symbols
        return noise


@dataclass(frozen=True)
class EnergyConfig:
    M: int = 1
    p: float = 2.0

    def __post_init__(self) -> None:
        if int(self.M) != self.M or self.M < 1:
            raise ConfigurationError(f"energy block length M must be a positive integer, got {self.M}")
        if not self.p > 0:
            raise ConfigurationError(f"energy exponent p must be > 0, got {self.p}")


def raw_sample(hypothesis: Hypothesis, sig: SignalModel, gain: float, rng: RngLike) -> float:
    if not math.isfinite(gain):
        raise ContractViolation("gain must be finite")
    gen = as_generator(rng)
    return float(sig.raw_samples(Hypothesis(hypothesis), np.asarray(gain), gen, 1)[0])


def energy_block(raws: Sequence[float], cfg: EnergyConfig) -> float:
    values = np.asarray(raws, dtype=float)
    if values.shape != (cfg.M,):
        raise ContractViolation(f"energy block needs exactly {cfg.M} raw samples, got {values.size}")
    return float(np.sum(np.abs(values) ** cfg.p))


def energy_blocks(raws: np.ndarray, cfg: EnergyConfig) -> np.ndarray:
    """Energy samples over the last axis, which must have length M."""
    if raws.shape[-1] != cfg.M:
        raise ContractViolation(f"energy blocks need a trailing axis of {cfg.M}, got {raws.shape[-1]}")
    if cfg.p == 2:
        return np.sum(raws * raws, axis=-1)
    return np.sum(np.abs(raws) ** cfg.p, axis=-1)


def mac_observation(
    transmissions: Sequence[float],
    gains: Sequence[float],
    fc_noise: DistributionSpec,
    partial_coherence: bool,
    rng: RngLike,
) -> float:
    """Y = sum G_l Y_l + Z, with |G_l| under partial coherence."""
    t = np.asarray(transmissions, dtype=float)
    g = np.asarray(gains, dtype=float)
    if t.shape != g.shape:
        raise ContractViolation("transmissions and gains must have the same length")
    if partial_coherence:
        g = np.abs(g)
    return float(np.dot(t, g)) + draw(fc_noise, rng)


def energy_moments(sig: SignalModel, cfg: EnergyConfig, gain: float) -> Tuple[float, float]:
    """Analytic (E0[X], E1[X]) of one energy sample for finite-variance noise and p = 2."""
    if cfg.p != 2:
        raise UnsupportedOperationError("analytic energy moments are available for p = 2 only")
    power = sig.symbol_power()
    s_mean = sig.symbol_mean()

    def per_raw(hypothesis: Hypothesis, amplitude: float) -> float:
        n_mean, n_second = sig.noise_model.moments(hypothesis)
        a = gain * amplitude
        return n_second + 2 * a * n_mean * s_mean + a * a * power

    mean_h0 = cfg.M * per_raw(Hypothesis.H0, -sig.amplitude_h0)
    mean_h1 = cfg.M * per_raw(Hypothesis.H1, sig.amplitude)
    return mean_h0, mean_h1


def snr_db(gain_second_moment: float, mu0: float, mu1: float, sigma2: float) -> float:
    """10 log10(E[H^2] (mu1 - mu0)^2 / sigma^2)."""
    return 10.0 * math.log10(gain_second_moment * (mu1 - mu0) ** 2 / sigma2)


def rayleigh_delta_for_budget(scale: float, delta1: float) -> float:
    """Largest delta with P[|H| <= delta] <= delta1 for Rayleigh(scale)."""
    if not 0 <= delta1 < 1:
        raise ConfigurationError("delta budget must be in [0, 1)")
    return scale * math.sqrt(-2.0 * math.log1p(-delta1))
