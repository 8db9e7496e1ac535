"""
Distributed sensing protocol: local nodes and the fusion center.

Each local node turns ``M`` raw samples into one observation per slot (an
energy sample, or the block mean for mean sensing), advances its sequential
test and transmits ``+b1`` / ``-b0`` / ``0`` according to the most recent
barrier its statistic has crossed. The fusion center sums the transmissions
over the MAC, adds its own noise and runs an M^2 random walk against
``(-beta0, beta1)``. One FC slot is one local observation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .channel import (
    EnergyConfig,
    FadingMode,
    FadingModel,
    Hypothesis,
    NoiseModel,
    SignalModel,
    energy_block,
    energy_blocks,
)
from .distributions import Gaussian, RngLike, as_generator
from .errors import ConfigurationError
from .seqtests import (
    Decision,
    TestSpec,
    TestState,
    check,
    delta_gate,
    increments,
    update,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_SLOTS = 1_000_000
FIRST_CHUNK = 32
MAX_CHUNK = 4096


class SystemMode(str, Enum):
    DISTRIBUTED = "distributed"
    SINGLE = "single"


class Sensing(str, Enum):
    ENERGY = "energy"
    MEAN = "mean"


class TrialOutcome(str, Enum):
    DECIDED = "decided"
    TRUNCATED = "truncated"
    ABSTAINED = "abstained"


_DECISION_TO_HYPOTHESIS = {Decision.DECIDE_H0: Hypothesis.H0, Decision.DECIDE_H1: Hypothesis.H1}


@dataclass(frozen=True)
class NodeModel:
    """Static description of one local node."""

    test: TestSpec
    signal: SignalModel = field(default_factory=SignalModel)
    fading: FadingModel = field(default_factory=FadingModel)
    delta: float = 0.0
    b0: float = 1.0
    b1: float = 1.0

    def __post_init__(self) -> None:
        if self.b0 <= 0 or self.b1 <= 0:
            raise ConfigurationError("node transmission levels b0, b1 must be positive")
        if self.delta < 0:
            raise ConfigurationError("delta must be non-negative")
        if self.delta > 0 and self.fading.mode is FadingMode.FAST:
            raise ConfigurationError("the delta gate needs a per-trial gain (none or slow fading)")


@dataclass(frozen=True)
class FcModel:
    test: TestSpec
    noise: NoiseModel = field(default_factory=lambda: NoiseModel(Gaussian(0.0, 5.0)))
    mac_fading: FadingModel = field(default_factory=FadingModel)
    partial_coherence: bool = False

    def __post_init__(self) -> None:
        if not self.test.kind.iterative:
            raise ConfigurationError("the fusion center runs a random-walk kind test")
        if not (self.test.mu0 < 0 < self.test.mu1):
            raise ConfigurationError("fusion center centers need mu0 < 0 < mu1")


@dataclass(frozen=True)
class SystemModel:
    """Resolved runtime configuration of one experiment point."""

    nodes: Tuple[NodeModel, ...]
    fc: FcModel
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    mode: SystemMode = SystemMode.DISTRIBUTED
    sensing: Sensing = Sensing.ENERGY
    max_slots: int = DEFAULT_MAX_SLOTS

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "mode", SystemMode(self.mode))
        object.__setattr__(self, "sensing", Sensing(self.sensing))
        if not self.nodes:
            raise ConfigurationError("a system needs at least one node")
        if self.max_slots < 1:
            raise ConfigurationError("max_slots must be >= 1")
        if self.fc.test.mu0 < -sum(n.b0 for n in self.nodes) - 1e-12:
            raise ConfigurationError("fusion center mu0 must lie in [-b0 L, 0)")
        if self.fc.test.mu1 > sum(n.b1 for n in self.nodes) + 1e-12:
            raise ConfigurationError("fusion center mu1 must lie in (0, b1 L]")

    @property
    def L(self) -> int:
        return len(self.nodes)

    def with_thresholds(
        self, gamma0: Sequence[float], gamma1: Sequence[float], beta0: float, beta1: float
    ) -> "SystemModel":
        if len(gamma0) != self.L or len(gamma1) != self.L:
            raise ConfigurationError("one threshold pair per node is required")
        nodes = tuple(
            replace(node, test=node.test.with_thresholds(g0, g1)) for node, g0, g1 in zip(self.nodes, gamma0, gamma1)
        )
        fc = replace(self.fc, test=self.fc.test.with_thresholds(beta0, beta1))
        return replace(self, nodes=nodes, fc=fc)


@dataclass(frozen=True)
class NodeState:
    """Live state of one local node within a trial."""

    spec: TestSpec
    b0: float
    b1: float
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    sensing: Sensing = Sensing.ENERGY
    test: TestState = field(default_factory=TestState)
    latched: Optional[Hypothesis] = None
    gated: bool = False
    block: Tuple[float, ...] = ()
    stop_slot: Optional[int] = None
    first_decision: Optional[Hypothesis] = None

    @classmethod
    def fresh(cls, node: NodeModel, energy: EnergyConfig, sensing: Sensing, gated: bool = False) -> "NodeState":
        return cls(spec=node.test, b0=node.b0, b1=node.b1, energy=energy, sensing=sensing, gated=gated)

    @property
    def transmission(self) -> float:
        if self.gated or self.latched is None:
            return 0.0
        return self.b1 if self.latched is Hypothesis.H1 else -self.b0


@dataclass(frozen=True)
class FcState:
    spec: TestSpec
    test: TestState = field(default_factory=TestState)
    stopped: Optional[Hypothesis] = None
    N: Optional[int] = None


@dataclass(frozen=True)
class TrialResult:
    hypothesis: Hypothesis
    outcome: TrialOutcome
    decision: Optional[Hypothesis]
    N: int
    node_stops: Tuple[Optional[int], ...]
    node_decisions: Tuple[Optional[Hypothesis], ...]
    gated: Tuple[bool, ...] = ()

    @property
    def error(self) -> bool:
        """Wrong, truncated and abstained trials all count as errors."""
        return self.outcome is not TrialOutcome.DECIDED or self.decision is not self.hypothesis


def observe(block: np.ndarray, energy: EnergyConfig, sensing: Sensing) -> np.ndarray:
    if sensing is Sensing.ENERGY:
        return energy_blocks(block, energy)
    return block.mean(axis=-1)


def node_step(node: NodeState, raw: float) -> Tuple[NodeState, float]:
    """Feed one raw sample; returns the new state and the current transmission."""
    if node.gated:
        return node, 0.0
    block = node.block + (raw,)
    if len(block) < node.energy.M:
        return replace(node, block=block), node.transmission
    if node.sensing is Sensing.ENERGY:
        obs = energy_block(block, node.energy)
    else:
        obs = float(np.mean(block))
    test = update(node.test, node.spec, obs)
    decision = check(test, node.spec)
    node = replace(node, test=test, block=())
    if decision is not Decision.CONTINUE:
        hyp = _DECISION_TO_HYPOTHESIS[decision]
        node = replace(node, latched=hyp)
        if node.stop_slot is None:
            node = replace(node, stop_slot=test.n, first_decision=hyp)
    return node, node.transmission


def fc_step(fc: FcState, y: float) -> FcState:
    if fc.stopped is not None:
        return fc
    test = update(fc.test, fc.spec, y)
    decision = check(test, fc.spec)
    if decision is Decision.CONTINUE:
        return replace(fc, test=test)
    return replace(fc, test=test, stopped=_DECISION_TO_HYPOTHESIS[decision], N=test.n)


def _advance_node(node: NodeState, observations: np.ndarray) -> Tuple[NodeState, np.ndarray]:
    """Advance a node over a run of slot observations, returning per-slot transmissions."""
    spec = node.spec
    size = len(observations)
    if not spec.kind.iterative:
        tx = np.empty(size)
        for i, obs in enumerate(observations):
            test = update(node.test, spec, float(obs))
            decision = check(test, spec)
            node = replace(node, test=test)
            if decision is not Decision.CONTINUE:
                hyp = _DECISION_TO_HYPOTHESIS[decision]
                node = replace(node, latched=hyp)
                if node.stop_slot is None:
                    node = replace(node, stop_slot=test.n, first_decision=hyp)
            tx[i] = node.transmission
        return node, tx

    walk = np.cumsum(np.concatenate(([node.test.T], increments(spec, observations))))[1:]
    counts = node.test.n + np.arange(1, size + 1)
    region = np.where(walk >= spec.gamma1, 1, np.where(walk <= -spec.gamma0, -1, 0))
    region[counts < spec.min_samples] = 0
    crossed = region != 0
    last = np.maximum.accumulate(np.where(crossed, np.arange(size), -1))
    prior = 0 if node.latched is None else (1 if node.latched is Hypothesis.H1 else -1)
    held = np.where(last >= 0, region[np.maximum(last, 0)], prior)
    tx = np.where(held == 1, node.b1, np.where(held == -1, -node.b0, 0.0))

    latched = node.latched
    if held[-1] != 0:
        latched = Hypothesis.H1 if held[-1] == 1 else Hypothesis.H0
    stop_slot, first = node.stop_slot, node.first_decision
    if stop_slot is None and crossed.any():
        k = int(np.argmax(crossed))
        stop_slot = int(counts[k])
        first = Hypothesis.H1 if region[k] == 1 else Hypothesis.H0
    test = TestState(n=int(counts[-1]), T=float(walk[-1]))
    return replace(node, test=test, latched=latched, stop_slot=stop_slot, first_decision=first), tx


def _first_exit(walk: np.ndarray, counts: np.ndarray, spec: TestSpec) -> Optional[int]:
    exits = ((walk >= spec.gamma1) | (walk <= -spec.gamma0)) & (counts >= spec.min_samples)
    if not exits.any():
        return None
    return int(np.argmax(exits))


def run_trial(system: SystemModel, hypothesis: Hypothesis, rng: RngLike) -> TrialResult:
    """Simulate one trial until the fusion center (or the single node) decides.

    Slots are simulated in chunks that double from ``FIRST_CHUNK`` up to
    ``MAX_CHUNK``, so the stream is read past the stopping slot ``N``. Samples
    beyond ``N`` are discarded: the FC stops at its first exit inside the chunk
    and node stops after ``N`` are reported as never stopped, so the result is
    that of a slot-by-slot run consuming ``N * M`` raws per node. It depends on
    the chunk sizes only through which stream values land in which slot.
    """
    hypothesis = Hypothesis(hypothesis)
    gen = as_generator(rng)
    M = system.energy.M
    single = system.mode is SystemMode.SINGLE
    models = system.nodes[:1] if single else system.nodes

    slow_gains: List[Optional[float]] = []
    states: List[NodeState] = []
    for node in models:
        gain = None if node.fading.mode is FadingMode.FAST else float(node.fading.gains(gen, 1)[0])
        gated = gain is not None and not delta_gate(abs(gain), node.delta)
        slow_gains.append(gain)
        states.append(NodeState.fresh(node, system.energy, system.sensing, gated=gated))
    mac_gains = system.fc.mac_fading.gains(gen, len(models)) if system.fc.mac_fading.mode is FadingMode.SLOW else None

    def result(outcome: TrialOutcome, decision: Optional[Hypothesis], n: int) -> TrialResult:
        stops = tuple(s.stop_slot if s.stop_slot is not None and s.stop_slot <= n else None for s in states)
        firsts = tuple(s.first_decision if stop is not None else None for s, stop in zip(states, stops))
        return TrialResult(hypothesis, outcome, decision, n, stops, firsts, tuple(s.gated for s in states))

    if single and states[0].gated:
        return result(TrialOutcome.ABSTAINED, None, 0)

    fc = FcState(spec=system.fc.test)
    slot = 0
    chunk = FIRST_CHUNK
    while slot < system.max_slots:
        size = min(chunk, system.max_slots - slot)
        tx = np.zeros((len(models), size))
        for l, node in enumerate(models):
            if states[l].gated:
                continue
            if slow_gains[l] is None:
                gains = node.fading.gains(gen, size * M)
            else:
                gains = np.asarray(slow_gains[l])
            raws = node.signal.raw_samples(hypothesis, gains, gen, size * M).reshape(size, M)
            states[l], tx[l] = _advance_node(states[l], observe(raws, system.energy, system.sensing))

        if single:
            stop = states[0].stop_slot
            if stop is not None:
                return result(TrialOutcome.DECIDED, states[0].first_decision, stop)
        else:
            if system.fc.mac_fading.mode is FadingMode.FAST:
                g = system.fc.mac_fading.gains(gen, len(models) * size).reshape(len(models), size)
            elif mac_gains is not None:
                g = mac_gains[:, None]
            else:
                g = np.ones((len(models), 1))
            if system.fc.partial_coherence:
                g = np.abs(g)
            y = np.sum(g * tx, axis=0) + system.fc.noise.samples(hypothesis, gen, size)
            spec = fc.spec
            walk = np.cumsum(np.concatenate(([fc.test.T], increments(spec, y))))[1:]
            counts = fc.test.n + np.arange(1, size + 1)
            k = _first_exit(walk, counts, spec)
            if k is not None:
                decision = Hypothesis.H1 if walk[k] >= spec.gamma1 else Hypothesis.H0
                return result(TrialOutcome.DECIDED, decision, int(counts[k]))
            fc = replace(fc, test=TestState(n=int(counts[-1]), T=float(walk[-1])))

        slot += size
        chunk = min(chunk * 2, MAX_CHUNK)

    logger.debug("trial truncated at %d slots", system.max_slots)
    return result(TrialOutcome.TRUNCATED, None, system.max_slots)
