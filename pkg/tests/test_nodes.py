import math
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from seqsense.channel import EnergyConfig, FadingMode, FadingModel, Hypothesis, NoiseModel, SignalModel
from seqsense.distributions import Constant, Gaussian, Rayleigh, RngStream
from seqsense.errors import ConfigurationError
from seqsense.nodes import (
    FcModel,
    FcState,
    NodeModel,
    NodeState,
    Sensing,
    SystemMode,
    SystemModel,
    TrialOutcome,
    _advance_node,
    fc_step,
    node_step,
    run_trial,
)
from seqsense.montecarlo import estimate
from seqsense.seqtests import TestKind, TestSpec


def _noise_free_system(gamma0, gamma1, beta, max_slots=1_000):
    node = NodeModel(
        test=TestSpec(TestKind.RANDOM_WALK, mu0=0.0, mu1=1.0, gamma0=gamma0, gamma1=gamma1),
        signal=SignalModel(alphabet=((1.0, 1.0),), noise=Constant(0.0)),
    )
    fc = FcModel(
        test=TestSpec(TestKind.RANDOM_WALK, mu0=-1.0, mu1=1.0, gamma0=beta, gamma1=beta),
        noise=NoiseModel(Constant(0.0)),
    )
    return SystemModel(nodes=(node,), fc=fc, sensing=Sensing.MEAN, max_slots=max_slots)


def _gaussian_system(L=3, max_slots=100_000):
    node = NodeModel(test=TestSpec(TestKind.M2_RANDOM_WALK, mu0=1.0, mu1=2.0, gamma0=2.0, gamma1=2.0))
    fc = FcModel(test=TestSpec(TestKind.M2_RANDOM_WALK, mu0=-1.0, mu1=1.0, gamma0=2.0, gamma1=2.0))
    return SystemModel(nodes=(node,) * L, fc=fc, max_slots=max_slots)


@pytest.mark.parametrize("hypothesis", [Hypothesis.H0, Hypothesis.H1])
def test_noise_free_trial_stops_at_closed_form(hypothesis):
    system = _noise_free_system(10.0, 2.0, 3.0)
    result = run_trial(system, hypothesis, RngStream(1))
    gamma = 2.0 if hypothesis is Hypothesis.H1 else 10.0
    assert result.outcome is TrialOutcome.DECIDED
    assert result.decision is hypothesis
    assert result.N == math.ceil(gamma / 0.5) + 3 - 1
    assert result.node_stops == (math.ceil(gamma / 0.5),)
    assert not result.error


def test_slot_recursion_matches_closed_form():
    system = _noise_free_system(3.0, 7.5, 40.0)
    node = NodeState.fresh(system.nodes[0], system.energy, system.sensing)
    fc = FcState(spec=system.fc.test)
    while fc.stopped is None:
        node, tx = node_step(node, 1.0)
        fc = fc_step(fc, tx)
    assert fc.stopped is Hypothesis.H1
    assert fc.N == 15 + 40 - 1


def test_node_step_buffers_energy_blocks():
    model = NodeModel(test=TestSpec(TestKind.RANDOM_WALK, mu0=1.0, mu1=3.0, gamma0=100.0, gamma1=100.0))
    state = NodeState.fresh(model, EnergyConfig(M=2), Sensing.ENERGY)
    state, tx = node_step(state, 1.0)
    assert state.test.n == 0
    assert tx == 0.0
    state, tx = node_step(state, 2.0)
    assert state.test.n == 1
    assert state.test.T == pytest.approx(5.0 - 2.0)


def test_node_keeps_transmitting_its_last_decision():
    model = NodeModel(
        test=TestSpec(TestKind.RANDOM_WALK, mu0=-1.0, mu1=1.0, gamma0=1.0, gamma1=1.0), b0=2.0, b1=0.5
    )
    state = NodeState.fresh(model, EnergyConfig(), Sensing.MEAN)
    transmitted = []
    for raw in (1.0, -0.5, -2.0, 0.5):
        state, tx = node_step(state, raw)
        transmitted.append(tx)
    # T: 1, 0.5, -1.5, -1.0
    assert transmitted == [0.5, 0.5, -2.0, -2.0]
    assert state.stop_slot == 1
    assert state.first_decision is Hypothesis.H1


def test_chunked_node_matches_slot_by_slot():
    model = NodeModel(test=TestSpec(TestKind.M_RANDOM_WALK, mu0=-0.5, mu1=0.5, gamma0=3.0, gamma1=3.0, K=1.5))
    observations = RngStream(8).generator().normal(0.0, 1.5, 400)
    state = NodeState.fresh(model, EnergyConfig(), Sensing.MEAN)
    expected = []
    for obs in observations:
        state, tx = node_step(state, float(obs))
        expected.append(tx)

    chunked = NodeState.fresh(model, EnergyConfig(), Sensing.MEAN)
    chunked, first = _advance_node(chunked, observations[:150])
    chunked, second = _advance_node(chunked, observations[150:])
    assert np.allclose(np.concatenate([first, second]), expected)
    assert chunked.stop_slot == state.stop_slot
    assert chunked.first_decision is state.first_decision
    assert chunked.latched is state.latched


def test_trials_are_reproducible():
    system = _gaussian_system()
    a = run_trial(system, Hypothesis.H1, RngStream(4, 11))
    b = run_trial(system, Hypothesis.H1, RngStream(4, 11))
    assert a == b


def test_truncated_trial_is_an_error():
    system = _gaussian_system().with_thresholds([1e9] * 3, [1e9] * 3, 1e9, 1e9)
    system = SystemModel(system.nodes, system.fc, max_slots=50)
    result = run_trial(system, Hypothesis.H0, RngStream(1))
    assert result.outcome is TrialOutcome.TRUNCATED
    assert result.N == 50
    assert result.error


def test_gated_single_node_abstains():
    node = NodeModel(
        test=TestSpec(TestKind.RANDOM_WALK, mu0=-1.0, mu1=1.0),
        fading=FadingModel(mode=FadingMode.SLOW, multipath=Rayleigh(1.0), shadow=None),
        delta=1e6,
    )
    fc = FcModel(test=TestSpec(TestKind.RANDOM_WALK, mu0=-1.0, mu1=1.0))
    system = SystemModel(nodes=(node,), fc=fc, mode=SystemMode.SINGLE, sensing=Sensing.MEAN)
    result = run_trial(system, Hypothesis.H1, RngStream(1))
    assert result.outcome is TrialOutcome.ABSTAINED
    assert result.decision is None
    assert result.error


def test_single_mode_reports_the_node_decision():
    system = _noise_free_system(4.0, 4.0, 1e9)
    system = SystemModel(system.nodes, system.fc, mode=SystemMode.SINGLE, sensing=Sensing.MEAN)
    result = run_trial(system, Hypothesis.H0, RngStream(1))
    assert result.decision is Hypothesis.H0
    assert result.N == 8


def test_delta_gate_needs_a_per_trial_gain():
    with pytest.raises(ConfigurationError):
        NodeModel(
            test=TestSpec(TestKind.RANDOM_WALK, mu0=-1.0, mu1=1.0),
            fading=FadingModel(mode=FadingMode.FAST),
            delta=0.1,
        )


def test_fc_needs_a_random_walk_kind():
    with pytest.raises(ConfigurationError):
        FcModel(test=TestSpec(TestKind.TTEST, mu0=-1.0, mu1=1.0))


def test_fc_centers_must_fit_the_transmission_levels():
    node = NodeModel(test=TestSpec(TestKind.RANDOM_WALK, mu0=-1.0, mu1=1.0))
    fc = FcModel(test=TestSpec(TestKind.RANDOM_WALK, mu0=-2.0, mu1=1.0))
    with pytest.raises(ConfigurationError):
        SystemModel(nodes=(node,), fc=fc)


def test_with_thresholds_needs_one_pair_per_node():
    with pytest.raises(ConfigurationError):
        _gaussian_system().with_thresholds([1.0], [1.0], 2.0, 2.0)


def test_gaussian_system_usually_decides_correctly():
    system = _gaussian_system().with_thresholds([30.0] * 3, [30.0] * 3, 80.0, 80.0)
    correct = sum(
        run_trial(system, Hypothesis.H1, RngStream(2, i)).decision is Hypothesis.H1 for i in range(50)
    )
    assert correct >= 45


@pytest.mark.parametrize("chunk", [1, 3, 32])
def test_draws_past_the_fc_stop_do_not_reach_the_result(mocker, chunk):
    mocker.patch("seqsense.nodes.FIRST_CHUNK", chunk)
    mocker.patch("seqsense.nodes.MAX_CHUNK", chunk)

    def node(gamma1):
        return NodeModel(
            test=TestSpec(TestKind.RANDOM_WALK, mu0=0.0, mu1=1.0, gamma0=10.0, gamma1=gamma1),
            signal=SignalModel(alphabet=((1.0, 1.0),), noise=Constant(0.0)),
        )

    fc = FcModel(
        test=TestSpec(TestKind.RANDOM_WALK, mu0=-1.0, mu1=1.0, gamma0=3.0, gamma1=3.0),
        noise=NoiseModel(Constant(0.0)),
    )
    system = SystemModel(nodes=(node(1.0), node(10.0)), fc=fc, sensing=Sensing.MEAN)
    result = run_trial(system, Hypothesis.H1, RngStream(1))
    # the fast node latches at slot 2 and W = k - 1 after that; the slow node would stop at slot 20
    assert result.N == 4
    assert result.decision is Hypothesis.H1
    assert result.node_stops == (2, None)
    assert result.node_decisions == (Hypothesis.H1, None)


def test_fully_gated_nodes_leave_a_fair_coin_at_the_fc():
    node = NodeModel(
        test=TestSpec(TestKind.RANDOM_WALK, mu0=0.0, mu1=1.0, gamma0=2.0, gamma1=2.0),
        signal=SignalModel(alphabet=((1.0, 1.0),), noise=Gaussian(0.0, 1.0)),
        fading=FadingModel(mode=FadingMode.SLOW, multipath=Rayleigh(1.0), shadow=None),
        delta=math.inf,
    )
    fc = FcModel(test=TestSpec(TestKind.M2_RANDOM_WALK, mu0=-1.0, mu1=1.0, gamma0=3.0, gamma1=3.0))
    system = SystemModel(nodes=(node,) * 3, fc=fc, sensing=Sensing.MEAN, max_slots=100_000)
    est = estimate(system, n_trials=10_000, seed=6)
    # P(decide H1) is p_fa under H0 and 1 - p_md under H1
    assert est.p_fa == pytest.approx(0.5, abs=0.02)
    assert 1 - est.p_md == pytest.approx(0.5, abs=0.02)
    assert est.truncated0 == est.truncated1 == 0


def _mean_sensing_system(L=3):
    node = NodeModel(
        test=TestSpec(TestKind.RANDOM_WALK, mu0=0.0, mu1=1.0, gamma0=2.0, gamma1=2.0),
        signal=SignalModel(alphabet=((1.0, 1.0),), noise=Gaussian(0.0, 1.0)),
    )
    fc = FcModel(test=TestSpec(TestKind.M2_RANDOM_WALK, mu0=-1.0, mu1=1.0), noise=NoiseModel(Gaussian(0.0, 5.0)))
    return SystemModel(nodes=(node,) * L, fc=fc, sensing=Sensing.MEAN, max_slots=100_000)


def test_false_alarms_fall_as_the_fc_threshold_grows():
    base = _mean_sensing_system()
    p_fa = []
    for beta in (2.0, 4.0, 8.0):
        system = base.with_thresholds([2.0] * 3, [2.0] * 3, beta, beta)
        p_fa.append(estimate(system, n_trials=2_000, seed=7, point=int(beta)).p_fa)
    assert p_fa[0] > p_fa[1] > p_fa[2]
