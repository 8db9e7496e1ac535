"""
Seedable sampling of the scalar laws used by the sensing experiments.

Every law is a frozen dataclass deriving from :class:`DistributionSpec`.
Sampling is vectorised over numpy generators; :class:`RngStream` names a
reproducible stream by ``(seed, stream_id)`` and maps it onto a Philox
counter-based bit generator so that streams can be partitioned freely across
trials and workers.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, fields
from typing import Any, ClassVar, Dict, Optional, Tuple, Type, Union

import numpy as np
from scipy import integrate, special, stats

from .errors import ConfigurationError, UnsupportedOperationError

MASK64 = (1 << 64) - 1

# Beyond this many scale units from the location the stable tail is taken
# from its power-law asymptote instead of characteristic-function inversion.
STABLE_TAIL_CROSSOVER = 10.0


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream identified by ``(seed, stream_id)``.

    ``generator()`` always restarts the stream. Functions that accept an
    ``RngStream`` read from ``cursor()``, a generator shared by every call on the
    same instance, so successive ``draw(spec, stream)`` calls advance.
    """

    seed: int
    stream_id: int = 0
    _cursor: Optional[np.random.Generator] = field(default=None, init=False, repr=False, compare=False)

    def generator(self) -> np.random.Generator:
        key = (self.seed & MASK64) | ((self.stream_id & MASK64) << 64)
        return np.random.Generator(np.random.Philox(key=key))

    def cursor(self) -> np.random.Generator:
        if self._cursor is None:
            object.__setattr__(self, "_cursor", self.generator())
        return self._cursor

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


RngLike = Union[RngStream, np.random.Generator]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.cursor()
    return rng


def _fmt(value: Any) -> str:
    if isinstance(value, DistributionSpec):
        return value.to_text()
    if isinstance(value, (list, tuple)):
        inner = ", ".join(_fmt(v) for v in value)
        if value and all(isinstance(v, (int, float)) for v in value):
            return f"({inner})"
        return f"[{inner}]"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


class DistributionSpec(ABC):
    """Tagged description of a scalar sampling law."""

    kind: ClassVar[str] = ""

    @abstractmethod
    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` independent samples."""

    def tail_complement(self, x: float) -> float:
        raise UnsupportedOperationError(f"tail_complement is not available for {self.kind}")

    def mean(self) -> float:
        raise UnsupportedOperationError(f"{self.kind} has no finite mean")

    def second_moment(self) -> float:
        raise UnsupportedOperationError(f"{self.kind} has no finite second moment")

    def variance(self) -> float:
        return self.second_moment() - self.mean() ** 2

    def params(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}  # type: ignore[arg-type]

    def to_text(self) -> str:
        args = ", ".join(f"{k}={_fmt(v)}" for k, v in self.params().items())
        return f"{self.kind}({args})"

    def _set(self, name: str, value: Any) -> None:
        object.__setattr__(self, name, value)


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not value > 0 or math.isnan(value):
        raise ConfigurationError(f"{name} must be > 0, got {value}")
    return value


@dataclass(frozen=True)
class Gaussian(DistributionSpec):
    kind: ClassVar[str] = "gaussian"
    mean_: float = 0.0
    variance_: float = 1.0

    def __post_init__(self) -> None:
        self._set("mean_", float(self.mean_))
        self._set("variance_", _positive("gaussian variance", self.variance_))

    def params(self) -> Dict[str, Any]:
        return {"mean": self.mean_, "variance": self.variance_}

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        return gen.normal(self.mean_, math.sqrt(self.variance_), size)

    def tail_complement(self, x: float) -> float:
        return float(stats.norm.sf(x, loc=self.mean_, scale=math.sqrt(self.variance_)))

    def mean(self) -> float:
        return self.mean_

    def second_moment(self) -> float:
        return self.variance_ + self.mean_ ** 2


def stable_tail_constant(alpha: float, skew: float = 0.0) -> float:
    """Constant c with P[X > x] ~ c x^-alpha for a unit-scale stable law."""
    if alpha >= 2:
        return 0.0
    if alpha == 1:
        c_alpha = 2.0 / math.pi
    else:
        c_alpha = (1 - alpha) / (special.gamma(2 - alpha) * math.cos(math.pi * alpha / 2))
    return c_alpha * (1 + skew) / 2


@dataclass(frozen=True)
class AlphaStable(DistributionSpec):
    """S_alpha(scale, skew, loc); alpha = 2 is N(loc, 2 scale^2)."""

    kind: ClassVar[str] = "alpha_stable"
    alpha: float = 1.8
    scale: float = 1.0
    skew: float = 0.0
    loc: float = 0.0

    def __post_init__(self) -> None:
        alpha = float(self.alpha)
        if not 0 < alpha <= 2:
            raise ConfigurationError(f"alpha_stable alpha must be in (0, 2], got {alpha}")
        skew = float(self.skew)
        if not -1 <= skew <= 1:
            raise ConfigurationError(f"alpha_stable skew must be in [-1, 1], got {skew}")
        self._set("alpha", alpha)
        self._set("skew", skew)
        self._set("scale", _positive("alpha_stable scale", self.scale))
        self._set("loc", float(self.loc))

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        # Chambers-Mallows-Stuck: one uniform angle and one unit exponential per draw.
        v = gen.uniform(-math.pi / 2, math.pi / 2, size)
        w = gen.standard_exponential(size)
        a, b = self.alpha, self.skew
        if a == 1:
            half_pi_bv = math.pi / 2 + b * v
            x = (2 / math.pi) * (
                half_pi_bv * np.tan(v) - b * np.log((math.pi / 2 * w * np.cos(v)) / half_pi_bv)
            )
            return self.scale * x + (2 / math.pi) * b * self.scale * math.log(self.scale) + self.loc
        zeta = b * math.tan(math.pi * a / 2) if a != 2 else 0.0
        shift = math.atan(zeta) / a
        factor = (1 + zeta ** 2) ** (1 / (2 * a))
        x = (
            factor
            * np.sin(a * (v + shift))
            / np.cos(v) ** (1 / a)
            * (np.cos(v - a * (v + shift)) / w) ** ((1 - a) / a)
        )
        return self.scale * x + self.loc

    def _inverted_tail(self, x: float) -> float:
        # Gil-Pelaez inversion of the characteristic function.
        a, b, s, mu = self.alpha, self.skew, self.scale, self.loc
        if a == 1:
            def integrand(t: float) -> float:
                return math.exp(-s * t) * math.sin((mu - x) * t - b * (2 / math.pi) * s * t * math.log(t)) / t
        else:
            tan_term = b * math.tan(math.pi * a / 2)

            def integrand(t: float) -> float:
                st = (s * t) ** a
                return math.exp(-st) * math.sin((mu - x) * t + tan_term * st) / t

        value, _ = integrate.quad(integrand, 0.0, np.inf, limit=500)
        return min(1.0, max(0.0, 0.5 + value / math.pi))

    def tail_complement(self, x: float) -> float:
        if self.alpha == 2:
            return float(stats.norm.sf(x, loc=self.loc, scale=math.sqrt(2) * self.scale))
        z = x - self.loc
        if z > STABLE_TAIL_CROSSOVER * self.scale:
            return stable_tail_constant(self.alpha, self.skew) * self.scale ** self.alpha * z ** (-self.alpha)
        return self._inverted_tail(x)

    def mean(self) -> float:
        if self.alpha > 1:
            return self.loc
        return super().mean()

    def second_moment(self) -> float:
        if self.alpha == 2:
            return self.loc ** 2 + 2 * self.scale ** 2
        return super().second_moment()


@dataclass(frozen=True)
class GaussianMixture(DistributionSpec):
    """Mixture of Gaussians given as (weight, mean, variance) triples."""

    kind: ClassVar[str] = "mixture"
    components: Tuple[Tuple[float, float, float], ...] = ((1.0, 0.0, 1.0),)

    def __post_init__(self) -> None:
        comps = tuple(tuple(float(v) for v in c) for c in self.components)
        if not comps or any(len(c) != 3 for c in comps):
            raise ConfigurationError("mixture components must be (weight, mean, variance) triples")
        if any(w < 0 for w, _, _ in comps):
            raise ConfigurationError("mixture weights must be non-negative")
        if abs(sum(w for w, _, _ in comps) - 1.0) > 1e-12:
            raise ConfigurationError("mixture weights must sum to 1")
        for _, _, v in comps:
            _positive("mixture variance", v)
        self._set("components", comps)

    def _weights(self) -> np.ndarray:
        w = np.array([c[0] for c in self.components])
        return w / w.sum()

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        idx = gen.choice(len(self.components), size=size, p=self._weights())
        means = np.array([c[1] for c in self.components])[idx]
        sds = np.sqrt(np.array([c[2] for c in self.components]))[idx]
        return means + sds * gen.standard_normal(size)

    def tail_complement(self, x: float) -> float:
        return float(sum(w * stats.norm.sf(x, loc=m, scale=math.sqrt(v)) for w, m, v in self.components))

    def mean(self) -> float:
        return float(sum(w * m for w, m, _ in self.components))

    def second_moment(self) -> float:
        return float(sum(w * (v + m ** 2) for w, m, v in self.components))


@dataclass(frozen=True)
class Rayleigh(DistributionSpec):
    kind: ClassVar[str] = "rayleigh"
    scale: float = 1.0

    def __post_init__(self) -> None:
        self._set("scale", _positive("rayleigh scale", self.scale))

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        return gen.rayleigh(self.scale, size)

    def tail_complement(self, x: float) -> float:
        if x <= 0:
            return 1.0
        return math.exp(-(x ** 2) / (2 * self.scale ** 2))

    def mean(self) -> float:
        return self.scale * math.sqrt(math.pi / 2)

    def second_moment(self) -> float:
        return 2 * self.scale ** 2


@dataclass(frozen=True)
class LogNormal(DistributionSpec):
    """exp(N(mean, variance)); parameters live on the log scale."""

    kind: ClassVar[str] = "lognormal"
    mean_: float = 0.0
    variance_: float = 0.36

    def __post_init__(self) -> None:
        self._set("mean_", float(self.mean_))
        self._set("variance_", _positive("lognormal variance", self.variance_))

    def params(self) -> Dict[str, Any]:
        return {"mean": self.mean_, "variance": self.variance_}

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        return gen.lognormal(self.mean_, math.sqrt(self.variance_), size)

    def tail_complement(self, x: float) -> float:
        if x <= 0:
            return 1.0
        return float(stats.lognorm.sf(x, s=math.sqrt(self.variance_), scale=math.exp(self.mean_)))

    def mean(self) -> float:
        return math.exp(self.mean_ + self.variance_ / 2)

    def second_moment(self) -> float:
        return math.exp(2 * self.mean_ + 2 * self.variance_)


@dataclass(frozen=True)
class Contaminated(DistributionSpec):
    """With probability epsilon the sample comes from ``outlier``, else ``base``."""

    kind: ClassVar[str] = "contaminated"
    base: DistributionSpec = Gaussian()
    outlier: DistributionSpec = Gaussian(0.0, 20.0)
    epsilon: float = 0.05

    def __post_init__(self) -> None:
        eps = float(self.epsilon)
        if not 0 <= eps <= 1:
            raise ConfigurationError(f"contamination epsilon must be in [0, 1], got {eps}")
        self._set("epsilon", eps)

    def sample_flagged(self, gen: np.random.Generator, size: int) -> Tuple[np.ndarray, np.ndarray]:
        flags = gen.random(size) < self.epsilon
        base = self.base.sample(gen, size)
        outlier = self.outlier.sample(gen, size)
        return np.where(flags, outlier, base), flags

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        return self.sample_flagged(gen, size)[0]

    def tail_complement(self, x: float) -> float:
        return (1 - self.epsilon) * self.base.tail_complement(x) + self.epsilon * self.outlier.tail_complement(x)

    def mean(self) -> float:
        return (1 - self.epsilon) * self.base.mean() + self.epsilon * self.outlier.mean()

    def second_moment(self) -> float:
        return (1 - self.epsilon) * self.base.second_moment() + self.epsilon * self.outlier.second_moment()


@dataclass(frozen=True)
class Constant(DistributionSpec):
    kind: ClassVar[str] = "constant"
    value: float = 0.0

    def __post_init__(self) -> None:
        self._set("value", float(self.value))

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        return np.full(size, self.value)

    def tail_complement(self, x: float) -> float:
        return 1.0 if x < self.value else 0.0

    def mean(self) -> float:
        return self.value

    def second_moment(self) -> float:
        return self.value ** 2


@dataclass(frozen=True)
class Laplace(DistributionSpec):
    kind: ClassVar[str] = "laplace"
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        self._set("loc", float(self.loc))
        self._set("scale", _positive("laplace scale", self.scale))

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        return gen.laplace(self.loc, self.scale, size)

    def tail_complement(self, x: float) -> float:
        z = (x - self.loc) / self.scale
        return 0.5 * math.exp(-z) if z >= 0 else 1 - 0.5 * math.exp(z)

    def mean(self) -> float:
        return self.loc

    def second_moment(self) -> float:
        return self.loc ** 2 + 2 * self.scale ** 2


@dataclass(frozen=True)
class Pareto(DistributionSpec):
    """Symmetric two-sided Pareto: random sign times scale * U^(-1/alpha)."""

    kind: ClassVar[str] = "pareto"
    alpha: float = 2.5
    scale: float = 1.0

    def __post_init__(self) -> None:
        self._set("alpha", _positive("pareto alpha", self.alpha))
        self._set("scale", _positive("pareto scale", self.scale))

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        magnitude = self.scale * (1.0 + gen.pareto(self.alpha, size))
        sign = np.where(gen.random(size) < 0.5, -1.0, 1.0)
        return sign * magnitude

    def tail_complement(self, x: float) -> float:
        if x >= self.scale:
            return 0.5 * (self.scale / x) ** self.alpha
        if x > -self.scale:
            return 0.5
        return 1 - 0.5 * (self.scale / -x) ** self.alpha

    def mean(self) -> float:
        if self.alpha > 1:
            return 0.0
        return super().mean()

    def second_moment(self) -> float:
        if self.alpha > 2:
            return self.alpha * self.scale ** 2 / (self.alpha - 2)
        return super().second_moment()


@dataclass(frozen=True)
class StudentT(DistributionSpec):
    kind: ClassVar[str] = "student_t"
    df: float = 3.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        self._set("df", _positive("student_t df", self.df))
        self._set("scale", _positive("student_t scale", self.scale))

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        return self.scale * gen.standard_t(self.df, size)

    def tail_complement(self, x: float) -> float:
        return float(stats.t.sf(x / self.scale, self.df))

    def mean(self) -> float:
        if self.df > 1:
            return 0.0
        return super().mean()

    def second_moment(self) -> float:
        if self.df > 2:
            return self.scale ** 2 * self.df / (self.df - 2)
        return super().second_moment()


@dataclass(frozen=True)
class Sum(DistributionSpec):
    """Superposition of independent components (e.g. receiver noise + EMI)."""

    kind: ClassVar[str] = "sum"
    parts: Tuple[DistributionSpec, ...] = ()

    def __post_init__(self) -> None:
        parts = tuple(self.parts)
        if not parts:
            raise ConfigurationError("sum needs at least one component")
        self._set("parts", parts)

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        total = np.zeros(size)
        for part in self.parts:
            total = total + part.sample(gen, size)
        return total

    def tail_complement(self, x: float) -> float:
        if len(self.parts) == 1:
            return self.parts[0].tail_complement(x)
        return super().tail_complement(x)

    def mean(self) -> float:
        return float(sum(p.mean() for p in self.parts))

    def second_moment(self) -> float:
        return float(sum(p.variance() for p in self.parts)) + self.mean() ** 2


LAWS: Dict[str, Type[DistributionSpec]] = {
    cls.kind: cls
    for cls in (
        Gaussian,
        AlphaStable,
        GaussianMixture,
        Rayleigh,
        LogNormal,
        Contaminated,
        Constant,
        Laplace,
        Pareto,
        StudentT,
        Sum,
    )
}

# Keyword names in the text grammar that differ from the dataclass field names.
PARAM_ALIASES: Dict[str, Dict[str, str]] = {
    "gaussian": {"mean": "mean_", "variance": "variance_"},
    "lognormal": {"mean": "mean_", "variance": "variance_"},
}


def build(kind: str, **params: Any) -> DistributionSpec:
    """Construct a law from its grammar name and keyword parameters."""
    try:
        cls = LAWS[kind]
    except KeyError:
        raise ConfigurationError(f"unknown distribution '{kind}'") from None
    aliases = PARAM_ALIASES.get(kind, {})
    try:
        return cls(**{aliases.get(k, k): v for k, v in params.items()})
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for {kind}: {exc}") from None


def draw(spec: DistributionSpec, rng: RngLike) -> float:
    """Next sample of ``spec`` from the stream's cursor."""
    return float(spec.sample(as_generator(rng), 1)[0])


def sample(spec: DistributionSpec, rng: RngLike, size: int) -> np.ndarray:
    return spec.sample(as_generator(rng), size)


def tail_complement(spec: DistributionSpec, x: float) -> float:
    """1 - F(x) for laws with an analytic, series or asymptotic tail."""
    return spec.tail_complement(x)
