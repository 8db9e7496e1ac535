"""
Self-check oracles

Each oracle pins one library result to an independent reference. Sample
sizes shrink in ``fast`` mode; tolerances are stated per comparison.
"""

import math
from dataclasses import replace
from typing import List

import numpy as np
from scipy import integrate, optimize

from seqsense.analysis import (
    IncrementModel,
    heavy_tail_delay,
    hill_estimator,
    lundberg_exponent,
    node_stop_gaussian_approx,
    order_statistic_means,
    pfa_heavy_tail,
    solve_heavy_tail_thresholds,
    stop_time_bounds,
)
from seqsense.channel import EnergyConfig, Hypothesis, NoiseModel, SignalModel, energy_blocks, energy_moments
from seqsense.distributions import AlphaStable, Constant, Gaussian, Laplace, Pareto, RngStream
from seqsense.montecarlo import estimate, first_passage, walk_supremum_exceeds
from seqsense.nodes import (
    FcModel,
    FcState,
    NodeModel,
    NodeState,
    Sensing,
    SystemModel,
    fc_step,
    node_step,
    run_trial,
)
from seqsense.seqtests import TestKind, TestSpec, psi_array

from .base_oracle import BaseOracle, OracleRow, register_oracle

# Stream ids of the oracle partition; kept apart from trial streams.
ORACLE_STREAM = 1 << 62


def _size(fast: bool, small: int, full: int) -> int:
    return small if fast else full


def _stream(seed: int, salt: int) -> RngStream:
    return RngStream(seed, ORACLE_STREAM + salt)


@register_oracle
class StopTimeBracketOracle(BaseOracle):
    """Mean exit time of a N(-0.5, 1) walk against the quadrature bracket."""

    description = "E0[N0(-t0)] inside [t0/|theta|, t0/|theta| + E[(Y-)^2]/(2 theta^2)]"

    def __init__(self, workspace_path=None):
        super().__init__("stop-time-bracket", workspace_path)

    def check(self, seed: int, fast: bool) -> List[OracleRow]:
        model = IncrementModel.gaussian(-0.5, 1.0)
        n = _size(fast, 4_000, 100_000)
        rows = []
        for i, t0 in enumerate((10.0, 30.0, 100.0)):
            lo, hi = stop_time_bounds(model, t0)
            walks = first_passage(Gaussian(-0.5, 1.0), n, lower=t0, upper=math.inf, rng=_stream(seed, i))
            steps = walks.steps.astype(float)
            se = float(steps.std(ddof=1)) / math.sqrt(n)
            top = lo + 1.05 * (hi - lo)
            mean = float(steps.mean())
            passed = lo - 4 * se <= mean <= top + 4 * se
            rows.append(self.row(f"t0={t0:g}", (lo + hi) / 2, mean, (top - lo) / 2 + 4 * se, passed))
        return rows


@register_oracle
class HillTailIndexOracle(BaseOracle):
    """Tail index of H1 raws with S-alpha-S EMI recovered by the Hill estimator."""

    description = "Hill estimate of |X| tail index over the top 0.1% equals alpha = 1.8 within 0.1"

    def __init__(self, workspace_path=None):
        super().__init__("hill-tail-index", workspace_path)

    def check(self, seed: int, fast: bool) -> List[OracleRow]:
        n = _size(fast, 4_000_000, 10_000_000)
        sig = SignalModel(noise=Gaussian(0.0, 1.0), emi=AlphaStable(1.8, 1.0, 0.0, 0.0))
        raws = sig.raw_samples(Hypothesis.H1, np.asarray(1.0), _stream(seed, 10).generator(), n)
        observed = hill_estimator(raws, n // 1000)
        return [self.row("alpha=1.8", 1.8, observed, 0.1, abs(observed - 1.8) <= 0.1)]


@register_oracle
class LundbergSupremumOracle(BaseOracle):
    """Cramer-Lundberg bound against simulated walk suprema."""

    description = "P0[sup W >= t1] <= exp(-Gamma t1) + 3 s.e., Gamma = 1 for N(-0.5, 1)"

    def __init__(self, workspace_path=None):
        super().__init__("lundberg-supremum", workspace_path)

    def check(self, seed: int, fast: bool) -> List[OracleRow]:
        gamma = lundberg_exponent(IncrementModel.gaussian(-0.5, 1.0)).gamma
        rows = [self.row("gamma", 1.0, gamma, 1e-10, abs(gamma - 1.0) <= 1e-10)]
        levels = (5.0, 10.0, 15.0)
        n = _size(fast, 20_000, 100_000)
        hits = walk_supremum_exceeds(Gaussian(-0.5, 1.0), n, levels, _stream(seed, 20))
        for t1, (p, se) in zip(levels, hits):
            bound = math.exp(-gamma * t1)
            rows.append(self.row(f"t1={t1:g}", bound, p, 3 * se, p <= bound + 3 * se))
        return rows


def _deterministic_system(gamma0: float, gamma1: float, beta: float) -> SystemModel:
    node = NodeModel(
        test=TestSpec(TestKind.RANDOM_WALK, mu0=0.0, mu1=1.0, gamma0=gamma0, gamma1=gamma1),
        signal=SignalModel(alphabet=((1.0, 1.0),), noise=Constant(0.0)),
    )
    fc = FcModel(
        test=TestSpec(TestKind.RANDOM_WALK, mu0=-1.0, mu1=1.0, gamma0=beta, gamma1=beta),
        noise=NoiseModel(Constant(0.0)),
    )
    return SystemModel(nodes=(node,), fc=fc, sensing=Sensing.MEAN, max_slots=1_000)


def _recursion(system: SystemModel, hypothesis: Hypothesis) -> FcState:
    node_model = system.nodes[0]
    node = NodeState.fresh(node_model, system.energy, system.sensing)
    fc = FcState(spec=system.fc.test)
    level = node_model.signal.amplitude if hypothesis is Hypothesis.H1 else 0.0
    for _ in range(system.max_slots):
        node, tx = node_step(node, level)
        fc = fc_step(fc, tx)
        if fc.stopped is not None:
            break
    return fc


@register_oracle
class DeterministicTrialOracle(BaseOracle):
    """Noise-free trial: chunked simulator against the slot-by-slot recursion."""

    description = "Z = 0, noise-free unit-gain node: N = node stop + ceil(beta / b) - 1"

    def __init__(self, workspace_path=None):
        super().__init__("deterministic-trial", workspace_path)

    def check(self, seed: int, fast: bool) -> List[OracleRow]:
        rows = []
        for gamma0, gamma1, beta in ((10.0, 2.0, 3.0), (3.0, 7.5, 40.0)):
            system = _deterministic_system(gamma0, gamma1, beta)
            for hyp in (Hypothesis.H0, Hypothesis.H1):
                gamma = gamma1 if hyp is Hypothesis.H1 else gamma0
                closed = math.ceil(gamma / 0.5) + math.ceil(beta) - 1
                reference = _recursion(system, hyp)
                trial = run_trial(system, hyp, _stream(seed, 30))
                passed = (
                    trial.N == reference.N == closed
                    and trial.decision is reference.stopped is hyp
                )
                rows.append(self.row(f"{hyp.name} gamma={gamma:g} beta={beta:g}", closed, trial.N, 0.0, passed))
        return rows


@register_oracle
class HeavyTailSolveOracle(BaseOracle):
    """Closed-form heavy-tail delays against a numeric solve of the threshold system."""

    description = "heavy_tail_delay equals t_i/|theta_i| from the solved threshold pair"

    def __init__(self, workspace_path=None):
        super().__init__("heavy-tail-solve", workspace_path)

    def check(self, seed: int, fast: bool) -> List[OracleRow]:
        rows = []
        for theta0, theta1, alpha1, alpha, beta in (
            (1.0, 1.0, 2.0, 0.01, 0.01),
            (-0.4, 0.7, 1.8, 1e-3, 1e-2),
            (-2.0, 0.5, 3.0, 0.05, 1e-4),
        ):
            e0, e1 = heavy_tail_delay(theta0, theta1, alpha1, alpha, beta)
            t0, t1 = solve_heavy_tail_thresholds(theta0, theta1, alpha1, alpha, beta)
            for label, closed, solved in (("E0", e0, t0 / abs(theta0)), ("E1", e1, t1 / abs(theta1))):
                tol = 1e-8 * abs(closed)
                rows.append(self.row(f"{label} alpha1={alpha1:g}", closed, solved, tol, abs(closed - solved) <= tol))
        return rows


@register_oracle
class TwoNormalMinimumOracle(BaseOracle):
    """Order-statistic means against E[min(Z1, Z2)] = -1/sqrt(pi)."""

    description = "E[t_1] for two i.i.d. N(0,1) node times equals -1/sqrt(pi) within 0.003"

    def __init__(self, workspace_path=None):
        super().__init__("two-normal-minimum", workspace_path)

    def check(self, seed: int, fast: bool) -> List[OracleRow]:
        replicates = _size(fast, 1_000_000, 2_000_000)
        observed = float(order_statistic_means([(0.0, 1.0), (0.0, 1.0)], seed=seed, replicates=replicates)[0])
        expected = -1.0 / math.sqrt(math.pi)
        return [self.row("L=2", expected, observed, 0.003, abs(observed - expected) <= 0.003)]


@register_oracle
class StableTailOracle(BaseOracle):
    """alpha-stable tail complement against the Monte-Carlo exceedance frequency."""

    description = "tail_complement(S_1.8, 50) matches the empirical frequency within 3 s.e."

    def __init__(self, workspace_path=None):
        super().__init__("stable-tail", workspace_path)

    def check(self, seed: int, fast: bool) -> List[OracleRow]:
        spec = AlphaStable(1.8, 1.0, 0.0, 0.0)
        n = _size(fast, 4_000_000, 10_000_000)
        gen = _stream(seed, 40).generator()
        batch = 1_000_000
        hits = 0
        for start in range(0, n, batch):
            hits += int(np.count_nonzero(spec.sample(gen, min(batch, n - start)) > 50.0))
        expected = spec.tail_complement(50.0)
        observed = hits / n
        tol = 3 * math.sqrt(expected * (1 - expected) / n)
        return [self.row("x=50", expected, observed, tol, abs(observed - expected) <= tol)]


@register_oracle
class EnergyMomentsOracle(BaseOracle):
    """Analytic energy-sample means against block sums of simulated raws."""

    description = "energy_moments for N(0,1) noise, +-1 symbols, M = 10 match simulation within 4 s.e."

    def __init__(self, workspace_path=None):
        super().__init__("energy-moments", workspace_path)

    def check(self, seed: int, fast: bool) -> List[OracleRow]:
        sig = SignalModel(noise=Gaussian(0.0, 1.0))
        cfg = EnergyConfig(M=10)
        n = _size(fast, 50_000, 200_000)
        analytic = energy_moments(sig, cfg, 1.0)
        rows = []
        for hyp, expected in zip((Hypothesis.H0, Hypothesis.H1), analytic):
            gen = _stream(seed, 50 + int(hyp)).generator()
            raws = sig.raw_samples(hyp, np.asarray(1.0), gen, n * cfg.M).reshape(n, cfg.M)
            energy = energy_blocks(raws, cfg)
            tol = 4 * float(energy.std(ddof=1)) / math.sqrt(n)
            observed = float(energy.mean())
            rows.append(self.row(hyp.name, expected, observed, tol, abs(observed - expected) <= tol))
        return rows


@register_oracle
class NodeStopTimeOracle(BaseOracle):
    """Gaussian approximation of a node stopping time against simulated exits."""

    description = "gamma=50, drift=-0.5, rho^2=1: mean within 2%, variance within 10%"

    def __init__(self, workspace_path=None):
        super().__init__("node-stop-time", workspace_path)

    def check(self, seed: int, fast: bool) -> List[OracleRow]:
        mean, var = node_stop_gaussian_approx(50.0, -0.5, 1.0)
        n = _size(fast, 10_000, 100_000)
        walks = first_passage(Gaussian(-0.5, 1.0), n, lower=50.0, upper=math.inf, rng=_stream(seed, 60))
        steps = walks.steps.astype(float)
        obs_mean, obs_var = float(steps.mean()), float(steps.var(ddof=1))
        return [
            self.row("mean", mean, obs_mean, 0.02 * mean, abs(obs_mean - mean) <= 0.02 * mean),
            self.row("variance", var, obs_var, 0.1 * var, abs(obs_var - var) <= 0.1 * var),
        ]


@register_oracle
class WorkerCountOracle(BaseOracle):
    """Estimates are identical whether trials run in one process or several."""

    description = "estimate() with 1 and 2 workers gives identical tallies"

    def __init__(self, workspace_path=None):
        super().__init__("worker-count", workspace_path)

    def check(self, seed: int, fast: bool) -> List[OracleRow]:
        node = NodeModel(
            test=TestSpec(TestKind.M_RANDOM_WALK, mu0=1.0, mu1=2.0, gamma0=4.0, gamma1=4.0),
            signal=SignalModel(noise=Gaussian(0.0, 1.0)),
        )
        fc = FcModel(test=TestSpec(TestKind.RANDOM_WALK, mu0=-1.0, mu1=1.0, gamma0=5.0, gamma1=5.0))
        system = SystemModel(nodes=(node,), fc=fc, max_slots=100_000)
        n = _size(fast, 600, 2_000)
        one = estimate(system, n, seed, point=7, threads=1)
        two = estimate(system, n, seed, point=7, threads=2)
        return [
            self.row("p_fa", one.p_fa, two.p_fa, 0.0, one.p_fa == two.p_fa),
            self.row("p_md", one.p_md, two.p_md, 0.0, one.p_md == two.p_md),
            self.row("e0_n", one.e0_n, two.e0_n, 0.0, one.e0_n == two.e0_n),
            self.row("e1_n", one.e1_n, two.e1_n, 0.0, one.e1_n == two.e1_n),
        ]


@register_oracle
class HeavyTailFalseAlarmOracle(BaseOracle):
    """Single-big-jump false-alarm approximation against simulated two-sided exits."""

    description = "P0[exit above t1] of a Pareto(2.5) - 0.5 walk within a factor 2 of (1 - F(t1)) E0[N0(-t0)]"

    def __init__(self, workspace_path=None):
        super().__init__("heavy-tail-pfa", workspace_path)

    def check(self, seed: int, fast: bool) -> List[OracleRow]:
        jumps = Pareto(alpha=2.5, scale=1.0)

        def increments(gen, size):
            return jumps.sample(gen, size) - 0.5

        samples = increments(_stream(seed, 70).generator(), 1_000_000)
        model = replace(
            IncrementModel.from_samples(samples, tail_index=2.5, light_tailed=False),
            tail=lambda x: jumps.tail_complement(x + 0.5),
        )
        t0, t1 = 5.0, 60.0
        expected = pfa_heavy_tail(model, t0, t1)
        n = _size(fast, 400_000, 2_000_000)
        walks = first_passage(increments, n, lower=t0, upper=t1, rng=_stream(seed, 71))
        observed = float(walks.upper.mean())
        passed = expected / 2 <= observed <= 2 * expected
        return [self.row(f"t0={t0:g} t1={t1:g}", expected, observed, expected, passed)]


def _clipped_laplace_mgf(s: float, K: float, shift: float) -> float:
    inner, _ = integrate.quad(lambda x: math.exp(s * x) * 0.5 * math.exp(-abs(x)), -K, K, points=[0.0])
    atoms = 0.5 * math.exp(-K) * (math.exp(s * K) + math.exp(-s * K))
    return math.exp(-shift * s) * (inner + atoms)


@register_oracle
class BoundedLundbergOracle(BaseOracle):
    """Lundberg root and two-sided supremum bracket for a clipped (bounded) increment."""

    description = (
        "Y = psi(Laplace, 1.5) - 0.3: Gamma from sample MGF equals the quadrature root within 0.01; "
        "exp(-Gamma (t1 + 1.2)) <= P0[sup W >= t1] <= exp(-Gamma t1) within 3 s.e."
    )

    def __init__(self, workspace_path=None):
        super().__init__("bounded-lundberg", workspace_path)

    def check(self, seed: int, fast: bool) -> List[OracleRow]:
        K, shift = 1.5, 0.3
        noise = Laplace(0.0, 1.0)

        def increments(gen, size):
            return psi_array(noise.sample(gen, size), K) - shift

        reference = optimize.brentq(lambda s: math.log(_clipped_laplace_mgf(s, K, shift)), 1e-3, 20.0, xtol=1e-12)
        samples = increments(_stream(seed, 80).generator(), _size(fast, 200_000, 1_000_000))
        gamma = lundberg_exponent(IncrementModel.from_samples(samples)).gamma
        rows = [self.row("gamma", reference, gamma, 0.01, abs(gamma - reference) <= 0.01)]

        levels = (2.0, 4.0, 6.0)
        overshoot = K - shift
        hits = walk_supremum_exceeds(increments, _size(fast, 50_000, 200_000), levels, _stream(seed, 81))
        for t1, (p, se) in zip(levels, hits):
            upper = math.exp(-reference * t1)
            lower = math.exp(-reference * (t1 + overshoot))
            passed = lower - 3 * se <= p <= upper + 3 * se
            rows.append(self.row(f"t1={t1:g}", (lower + upper) / 2, p, (upper - lower) / 2 + 3 * se, passed))
        return rows
