"""Closed-form models, simulated slowdowns and Monte-Carlo failure rates."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.stats import binomtest

from .attacks import AttackLoop, gen_combined_loop
from .charge import BlastConfig, ChargeModel
from .engine import RefreshSchedule, SimReport, run
from .errors import ConfigError, InsufficientMitigations
from .fixedpoint import FRAC_BITS, as_fraction
from .mitigations import PolicyConfig
from .search import AmplificationResult, SearchBudget, amplification_search  # noqa: F401
from .timing import CommandTimeline, TimingParams, default_timing
from .trackers import TrackerConfig

MIN_MITIGATIONS = 10


def effective_threshold(trh, A) -> Fraction:
    A = as_fraction(A)
    if A < 1:
        raise ValueError("amplification below 1 is impossible")
    return as_fraction(trh) / A


def precision_relative_threshold(b: int) -> Fraction:
    """Relative tolerated threshold when EACT keeps ``b`` fractional bits."""
    if not 0 <= b <= FRAC_BITS:
        raise ValueError(f"b must be in [0, {FRAC_BITS}]")
    if b == FRAC_BITS:
        return Fraction(1)
    if b == 0:
        return Fraction(1, 2)
    return 1 - Fraction(1, 2**b)


def accuracy_relative_threshold(A) -> Fraction:
    """Relative threshold under the linear accuracy-loss reading, 1 - (A - 1).

    A tracker whose weights under-count by a fraction d loses d of its
    accuracy; this is the quantity the precision curve reports.
    """
    return 2 - as_fraction(A)


def graphene_attack_slowdown(T, K: int) -> Fraction:
    """Every T/2 activations cost one mitigation of 4*tRC, whatever K is."""
    T = as_fraction(T)
    if T <= 0 or K < 0:
        raise ValueError("need T > 0 and K >= 0")
    return 8 / T


def para_attack_slowdown(p, K: int) -> Fraction:
    p = as_fraction(p)
    if not 0 < p <= 1 or K < 0:
        raise ValueError("need 0 < p <= 1 and K >= 0")
    return 4 * min(Fraction(1), p * (K + 1)) / (K + 1)


@dataclass(frozen=True)
class SlowdownMeasurement:
    slowdown: Fraction
    mitigations: int
    iterations: int
    report: SimReport = field(repr=False, compare=False, default=None)


def simulated_attack_slowdown(
    tracker: TrackerConfig,
    policy: PolicyConfig,
    loop: AttackLoop,
    trh,
    seed: int = 0,
    cm: ChargeModel = ChargeModel(Fraction(1)),
    tp: Optional[TimingParams] = None,
    bank_rows: int = 1024,
) -> SlowdownMeasurement:
    """Mitigation time over attack time, from an engine run.

    MC-side mitigations cost 4*tRC each; in-DRAM trackers pay tRFM per RFM.
    """
    tp = tp or default_timing()
    tl = gen_combined_loop(loop, tp, bank_rows)
    rep = run(tl, policy, tracker, cm, trh, tp, seed=seed)
    attack_time = loop.N * (loop.K + 1) * tp.tRC
    if tracker.in_dram:
        count, spent = rep.rfm_count, rep.rfm_ticks
    else:
        count, spent = rep.mitigations, rep.mitigation_ticks
    if count < MIN_MITIGATIONS:
        raise InsufficientMitigations(
            f"only {count} mitigations in {loop.N} iterations; need {MIN_MITIGATIONS}"
        )
    return SlowdownMeasurement(Fraction(spent, attack_time), count, loop.N, rep)


@dataclass(frozen=True)
class FailureEstimate:
    p_hat: float
    trials: int
    ci95: tuple
    seed: int
    failures: int = 0


def wilson_interval(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    ci = binomtest(successes, trials).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class RunSetup:
    """Everything ``run`` needs except the timeline and seed."""

    policy: PolicyConfig
    tracker: TrackerConfig
    cm: ChargeModel
    trh: Fraction
    tp: TimingParams = field(default_factory=default_timing)
    blast: BlastConfig = BlastConfig()
    schedule: Optional[RefreshSchedule] = None


def trial_seeds(seed: int, trials: int) -> list[int]:
    ss = np.random.SeedSequence(int(seed))
    return [int(s.generate_state(1, np.uint64)[0]) for s in ss.spawn(trials)]


def monte_carlo_failure(config: RunSetup, pattern: CommandTimeline, trials: int, seed: int) -> FailureEstimate:
    """Fraction of independently seeded runs with at least one flip."""
    if trials < 1:
        raise ConfigError("trials must be >= 1", key="trials")
    fails = 0
    for s in trial_seeds(seed, trials):
        rep = run(pattern, config.policy, config.tracker, config.cm, config.trh, config.tp,
                  seed=s, blast=config.blast, schedule=config.schedule)
        fails += rep.flipped
    lo, hi = wilson_interval(fails, trials)
    return FailureEstimate(fails / trials, trials, (lo, hi), seed, fails)
