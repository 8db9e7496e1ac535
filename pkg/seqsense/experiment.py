"""
Turns an :class:`ExperimentConfig` into runnable models and per-point analysis.

The functions here are the bodies of the pipeline stages: center pre-runs,
threshold schedules, and the analytic predictions that sit next to each
Monte-Carlo sweep point.
"""

from __future__ import annotations

import logging
import math
from typing import List, Sequence, Tuple

import numpy as np

from .analysis import (
    DriftSchedule,
    IncrementModel,
    build_drift_schedule,
    fc_delay_approx,
    fc_error_approx,
    first_decision_cdf,
    lundberg_exponent,
    node_stop_gaussian_approx,
    pfa_heavy_tail,
    pfa_light_tail,
    stop_time_bounds,
)
from .channel import EnergyConfig, FadingMode, FadingModel, Hypothesis, NoiseModel, OutlierModel, SignalModel
from .config import ExperimentConfig, NodeSection
from .distributions import RngStream
from .errors import ApproximationDivergence, DomainError, SeqSenseError, UnsupportedOperationError
from .montecarlo import (
    PRERUN_POINT,
    DriftEstimate,
    ThresholdSchedule,
    estimate_drifts,
    estimate_means,
    node_observation_sampler,
    stream_id,
    threshold_schedule,
)
from .nodes import FcModel, NodeModel, Sensing, SystemMode, SystemModel
from .report import AnalysisRow
from .seqtests import TestKind, TestSpec, increments

logger = logging.getLogger(__name__)

# Salt offsets inside the pre-run partition.
_FC_SALT = 1 << 24


def _signal(settings: NodeSection) -> SignalModel:
    outlier = None
    if settings.outlier_epsilon > 0:
        outlier = OutlierModel(settings.outlier_epsilon, settings.outlier_law, settings.outlier_under)
    return SignalModel(
        alphabet=settings.alphabet,
        amplitude=settings.amplitude,
        amplitude_h0=settings.amplitude_h0,
        noise=settings.noise,
        emi=settings.emi,
        outlier=outlier,
    )


def node_model(config: ExperimentConfig, l: int, centers: Tuple[float, float]) -> NodeModel:
    settings = config.node_settings(l)
    test = TestSpec(
        kind=TestKind(settings.test),
        mu0=centers[0],
        mu1=centers[1],
        K=settings.K,
        K1=settings.K1,
        min_samples=settings.min_samples,
    )
    return NodeModel(
        test=test,
        signal=_signal(settings),
        fading=FadingModel(FadingMode(settings.fading), settings.multipath, settings.shadow),
        delta=config.system.delta if settings.delta is None else settings.delta,
        b0=config.system.b0,
        b1=config.system.b1,
    )


def fc_model(config: ExperimentConfig) -> FcModel:
    fc, system = config.fc, config.system
    outlier = OutlierModel(fc.outlier_epsilon, fc.outlier_law, fc.outlier_under) if fc.outlier_epsilon > 0 else None
    test = TestSpec(kind=TestKind(fc.test), mu0=-fc.I * system.b0, mu1=fc.I * system.b1, K=fc.K, K1=fc.K1)
    return FcModel(
        test=test,
        noise=NoiseModel(fc.noise, fc.emi, outlier),
        mac_fading=FadingModel(FadingMode(fc.mac_fading), fc.mac_multipath, fc.mac_shadow),
        partial_coherence=system.partial_coherence,
    )


def build_system(config: ExperimentConfig, centers: Sequence[Tuple[float, float]]) -> SystemModel:
    s = config.system
    nodes = tuple(node_model(config, l + 1, centers[l]) for l in range(s.L))
    return SystemModel(
        nodes=nodes,
        fc=fc_model(config),
        energy=EnergyConfig(s.M, s.p),
        mode=SystemMode(s.mode),
        sensing=Sensing(s.sensing),
        max_slots=s.max_slots,
    )


def resolve_centers(config: ExperimentConfig) -> List[Tuple[float, float]]:
    """Node test centers: configured values, or pre-run estimates of E_i[psi1(X)]."""
    s = config.system
    template = build_system(config, [(-1.0, 1.0)] * s.L)
    centers = []
    for l in range(1, s.L + 1):
        settings = config.node_settings(l)
        if settings.mu0 is not None and settings.mu1 is not None:
            centers.append((settings.mu0, settings.mu1))
            continue
        K1 = settings.K1 if TestKind(settings.test) is TestKind.M2_RANDOM_WALK else None
        sampler = node_observation_sampler(template.nodes[l - 1], template)
        est = estimate_means(sampler, config.sweep.prerun, config.sweep.seed, K1=K1, salt=l)
        mu0 = est.mu0 if settings.mu0 is None else settings.mu0
        mu1 = est.mu1 if settings.mu1 is None else settings.mu1
        centers.append((mu0, mu1))
    return centers


def node_drifts(config: ExperimentConfig, system: SystemModel) -> List[DriftEstimate]:
    return estimate_drifts(system, config.sweep.prerun, config.sweep.seed)


def schedules(config: ExperimentConfig, drifts: Sequence[DriftEstimate]) -> List[ThresholdSchedule]:
    pairs = [(d.e0, d.e1) for d in drifts]
    return [threshold_schedule(c, pairs) for c in config.sweep.c]


def fc_increment_samples(
    system: SystemModel, hypothesis: Hypothesis, transmitting: Sequence[int], n: int, gen: np.random.Generator
) -> np.ndarray:
    """FC increments when the listed nodes all transmit the correct decision."""
    fc = system.fc
    level = np.array([system.nodes[l].b1 if hypothesis is Hypothesis.H1 else -system.nodes[l].b0 for l in transmitting])
    y = np.zeros(n)
    if len(transmitting):
        g = fc.mac_fading.gains(gen, n * len(transmitting)).reshape(n, len(transmitting))
        if fc.partial_coherence:
            g = np.abs(g)
        y = g @ level
    y = y + fc.noise.samples(hypothesis, gen, n)
    return increments(fc.test, y)


def _node_walk_samples(system: SystemModel, l: int, hypothesis: Hypothesis, n: int, seed: int) -> np.ndarray:
    node = system.nodes[l]
    gen = RngStream(seed, stream_id(PRERUN_POINT, hypothesis, _FC_SALT - 1 - l)).generator()
    x = node_observation_sampler(node, system)(hypothesis, gen, n)
    return increments(node.test, x)


def _heavy(node: NodeModel) -> bool:
    return node.test.kind is TestKind.RANDOM_WALK and node.signal.emi is not None


class _Notes:
    def __init__(self) -> None:
        self.items: List[str] = []

    def add(self, text: str) -> None:
        if text not in self.items:
            self.items.append(text)

    @property
    def status(self) -> str:
        return "ok" if not self.items else "; ".join(self.items)


def _lundberg(model: IncrementModel, notes: _Notes, label: str) -> float:
    try:
        return lundberg_exponent(model).gamma
    except (UnsupportedOperationError, DomainError) as exc:
        notes.add(f"{label} unsupported: {exc}")
        return math.nan


def _single_node_row(config: ExperimentConfig, system: SystemModel, schedule: ThresholdSchedule) -> AnalysisRow:
    notes = _Notes()
    node = system.nodes[0]
    nan = math.nan
    if not node.test.kind.iterative:
        notes.add(f"unsupported: {node.test.kind.value} has no increment model")
        return AnalysisRow(schedule.c, schedule.beta0, schedule.beta1, *([nan] * 13), status=notes.status)
    n, seed = config.sweep.prerun, config.sweep.seed
    heavy = _heavy(node)
    model0 = IncrementModel.from_samples(_node_walk_samples(system, 0, Hypothesis.H0, n, seed), light_tailed=not heavy)
    model1 = IncrementModel.from_samples(_node_walk_samples(system, 0, Hypothesis.H1, n, seed), light_tailed=not heavy)
    g0, g1 = schedule.gamma0[0], schedule.gamma1[0]
    reflected1 = model1.reflected()
    lund0 = _lundberg(model0, notes, "lundberg0")
    lund1 = _lundberg(reflected1, notes, "lundberg1")
    try:
        e0_lo, e0_hi = stop_time_bounds(model0, g0)
        e1_lo, e1_hi = stop_time_bounds(reflected1, g1)
    except DomainError as exc:
        notes.add(str(exc))
        e0_lo = e0_hi = e1_lo = e1_hi = nan
    pfa_light = pfa_light_tail(lund0, g1) if lund0 > 0 else nan
    pmd_light = pfa_light_tail(lund1, g0) if lund1 > 0 else nan
    if heavy:
        pfa_hi = pfa_heavy_tail(model0, g0, g1) if math.isfinite(e0_lo) else nan
        neg = -_node_walk_samples(system, 0, Hypothesis.H1, n, seed)
        pmd_hi = (
            IncrementModel.from_samples(neg, light_tailed=False).tail(g0) * (e1_lo + e1_hi) / 2
            if math.isfinite(e1_lo)
            else nan
        )
    else:
        pfa_hi, pmd_hi = pfa_light, pmd_light
    return AnalysisRow(
        c=schedule.c,
        beta0=schedule.beta0,
        beta1=schedule.beta1,
        theta0=model0.theta,
        theta1=model1.theta,
        lundberg0=lund0,
        lundberg1=lund1,
        e0_lower=e0_lo,
        e0_upper=e0_hi,
        pfa_light=pfa_light,
        approx_e0_n=(e0_lo + e0_hi) / 2,
        approx_e1_n=(e1_lo + e1_hi) / 2,
        approx_p_fa_lo=nan,
        approx_p_fa_hi=pfa_hi,
        approx_p_md_lo=nan,
        approx_p_md_hi=pmd_hi,
        status=notes.status,
    )


def drift_schedule(
    system: SystemModel,
    hypothesis: Hypothesis,
    schedule: ThresholdSchedule,
    drifts: Sequence[DriftEstimate],
    n: int,
    seed: int,
) -> Tuple[DriftSchedule, List[Tuple[float, float]]]:
    """FC drift phases under ``hypothesis`` and the Gaussian node stop-time parameters."""
    params = []
    for l, d in enumerate(drifts):
        if hypothesis is Hypothesis.H0:
            params.append(node_stop_gaussian_approx(schedule.gamma0[l], d.e0, d.var0))
        else:
            params.append(node_stop_gaussian_approx(schedule.gamma1[l], d.e1, d.var1))
    order = sorted(range(len(params)), key=lambda l: params[l][0])
    fc_drifts = []
    for j in range(len(params) + 1):
        gen = RngStream(seed, stream_id(PRERUN_POINT, hypothesis, _FC_SALT + j)).generator()
        fc_drifts.append(float(np.mean(fc_increment_samples(system, hypothesis, order[:j], n, gen))))
    return build_drift_schedule(fc_drifts, params, seed=seed), params


def analyze_point(
    config: ExperimentConfig,
    system: SystemModel,
    drifts: Sequence[DriftEstimate],
    schedule: ThresholdSchedule,
) -> AnalysisRow:
    """Bounds and approximations for one sweep point."""
    if system.mode is SystemMode.SINGLE:
        return _single_node_row(config, system, schedule)
    notes = _Notes()
    nan = math.nan
    n, seed = config.sweep.prerun, config.sweep.seed
    everyone = list(range(system.L))

    def fc_samples(hyp: Hypothesis, j_nodes: Sequence[int], salt: int) -> np.ndarray:
        gen = RngStream(seed, stream_id(PRERUN_POINT, hyp, _FC_SALT + salt)).generator()
        return fc_increment_samples(system, hyp, j_nodes, n, gen)

    decided0 = IncrementModel.from_samples(fc_samples(Hypothesis.H0, everyone, system.L))
    decided1 = IncrementModel.from_samples(fc_samples(Hypothesis.H1, everyone, system.L))
    lund0 = _lundberg(decided0, notes, "lundberg0")
    lund1 = _lundberg(decided1.reflected(), notes, "lundberg1")
    try:
        e0_lo, e0_hi = stop_time_bounds(decided0, schedule.beta0)
    except DomainError as exc:
        notes.add(str(exc))
        e0_lo = e0_hi = nan
    pfa_light = pfa_light_tail(lund0, schedule.beta1) if lund0 > 0 else nan

    approx = {}
    errors = {}
    for hyp, barrier, opposite in (
        (Hypothesis.H0, -schedule.beta0, schedule.beta1),
        (Hypothesis.H1, schedule.beta1, schedule.beta0),
    ):
        try:
            sched, params = drift_schedule(system, hyp, schedule, drifts, n, seed)
            approx[hyp] = fc_delay_approx(sched, barrier)
        except (ApproximationDivergence, DomainError) as exc:
            notes.add(f"delay approximation under {hyp.name}: {exc}")
            approx[hyp] = nan
            errors[hyp] = (nan, nan)
            continue
        pre = fc_samples(hyp, [], 0)
        if hyp is Hypothesis.H1:
            pre = -pre
        cdf = first_decision_cdf(params, seed=seed)
        err = fc_error_approx(opposite, pre, cdf, config.sweep.approx_terms)
        if err.remainder > 1e-3:
            notes.add(f"error series under {hyp.name} truncated, remainder {err.remainder:.3g}")
        errors[hyp] = (err.lower, err.upper)

    return AnalysisRow(
        c=schedule.c,
        beta0=schedule.beta0,
        beta1=schedule.beta1,
        theta0=decided0.theta,
        theta1=decided1.theta,
        lundberg0=lund0,
        lundberg1=lund1,
        e0_lower=e0_lo,
        e0_upper=e0_hi,
        pfa_light=pfa_light,
        approx_e0_n=approx[Hypothesis.H0],
        approx_e1_n=approx[Hypothesis.H1],
        approx_p_fa_lo=errors[Hypothesis.H0][0],
        approx_p_fa_hi=errors[Hypothesis.H0][1],
        approx_p_md_lo=errors[Hypothesis.H1][0],
        approx_p_md_hi=errors[Hypothesis.H1][1],
        status=notes.status,
    )


def safe_analyze_point(
    config: ExperimentConfig,
    system: SystemModel,
    drifts: Sequence[DriftEstimate],
    schedule: ThresholdSchedule,
) -> AnalysisRow:
    """:func:`analyze_point` that reports failures in the row instead of raising."""
    try:
        return analyze_point(config, system, drifts, schedule)
    except SeqSenseError as exc:
        logger.warning("analysis failed at c=%g: %s", schedule.c, exc)
        nan = math.nan
        return AnalysisRow(schedule.c, schedule.beta0, schedule.beta1, *([nan] * 13), status=f"failed: {exc}")
