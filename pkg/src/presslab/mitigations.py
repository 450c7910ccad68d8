"""Row-Press policies: how open time reaches the tracker.

Each transform maps a legal command timeline to the weighted event stream a
tracker observes. ExPress additionally rewrites the timeline itself by
capping how long a row may stay open.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .charge import ChargeModel, tcl_exact
from .errors import ConfigError
from .fixedpoint import FRAC_BITS, ONE, as_fraction, truncate_frac_bits
from .timing import Cmd, Command, CommandTimeline, TimingParams, row_open_episodes
from .trackers import WeightedAct

POLICY_KINDS = ("norp", "express", "impress_n", "impress_p")


@dataclass(frozen=True)
class PolicyConfig:
    kind: str
    tmro: Optional[int] = None  # ticks, ExPress only
    frac_bits: int = FRAC_BITS
    alpha_assumed: Fraction = Fraction(1)

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy {self.kind!r}", key="policy")
        object.__setattr__(self, "alpha_assumed", as_fraction(self.alpha_assumed))
        if not 0 <= self.frac_bits <= FRAC_BITS:
            raise ConfigError("frac_bits must be in [0, 7]", key="frac_bits")
        if self.kind == "express" and self.tmro is None:
            raise ConfigError("express needs tmro", key="tmro_ns")

    def check(self, tp: TimingParams) -> None:
        if self.tmro is not None and self.tmro < tp.tRAS:
            raise ConfigError(f"tMRO {self.tmro} is below tRAS {tp.tRAS}", key="tmro_ns")


@dataclass(frozen=True)
class PolicyOutput:
    """Timeline the bank actually executes plus the tracker-visible stream."""

    timeline: CommandTimeline
    events: list
    reacts: int = 0


def transform_norp(tl: CommandTimeline) -> list[WeightedAct]:
    return [WeightedAct(c.row, ONE, c.time) for c in tl.commands if c.kind is Cmd.ACT]


def eact_fx(ton: int, tp: TimingParams, frac_bits: int = FRAC_BITS) -> int:
    """Equivalent activation count of an episode as Q.7, truncated to ``frac_bits``.

    With tRC = 128 ticks the division by tRC is exact at 7 fractional bits, so
    the raw value is simply tON + tPRE.
    """
    total = ton + tp.tPRE
    if tp.trc_shift == FRAC_BITS:
        raw = total
    else:
        raw = (total * ONE) // tp.tRC
    return max(ONE, truncate_frac_bits(raw, frac_bits))


def transform_impress_p(tl: CommandTimeline, tp: TimingParams, b: int = FRAC_BITS) -> list[WeightedAct]:
    """One event per episode, delivered when the row closes."""
    if not 0 <= b <= FRAC_BITS:
        raise ConfigError("frac_bits must be in [0, 7]", key="frac_bits")
    return [
        WeightedAct(e.row, eact_fx(e.tON, tp, b), e.close_time)
        for e in row_open_episodes(tl)
    ]


def impress_n_synthetic(tl: CommandTimeline, tp: TimingParams) -> list[WeightedAct]:
    """Synthetic window events only.

    Windows start at multiples of tRC from time 0. A row counts as open at a
    boundary B when ACT <= B < close. ORA is loaded at every boundary; when
    the same episode is still open at the next boundary the row stayed open
    for a whole window and gets an extra unit event. A fresh ACT in between
    is a real event already, so it never repeats ORA.
    """
    trc = tp.tRC
    out = []
    for e in row_open_episodes(tl):
        first = -(-e.open_time // trc)
        last = (e.close_time - 1) // trc
        for k in range(first + 1, last + 1):
            out.append(WeightedAct(e.row, ONE, k * trc, True))
    return out


def transform_impress_n(tl: CommandTimeline, tp: TimingParams) -> list[WeightedAct]:
    events = transform_norp(tl) + impress_n_synthetic(tl, tp)
    events.sort(key=lambda ev: (ev.time, ev.synthetic))
    return events


def express_rewrite(tl: CommandTimeline, tmro: int, tp: TimingParams) -> tuple[CommandTimeline, int]:
    """Split every episode longer than ``tmro`` into tMRO-long pieces.

    Each split costs tPRE of precharge plus a demand re-ACT; the final piece
    is padded to tRAS. Everything after a split shifts by the added delay.
    Returns the rewritten timeline and the number of re-ACTs inserted.
    """
    if tmro < tp.tRAS:
        raise ConfigError(f"tMRO {tmro} is below tRAS {tp.tRAS}", key="tmro_ns")
    out = []
    delay = 0
    reacts = 0
    open_row = None
    open_at = 0
    for c in tl.commands:
        if c.kind is Cmd.ACT:
            open_row, open_at = c.row, c.time
            continue
        if c.kind in (Cmd.PRE, Cmd.REF) and open_row is not None:
            remaining = c.time - open_at
            a = open_at + delay
            while remaining > tmro:
                out.append(Command(a, Cmd.ACT, open_row))
                out.append(Command(a + tmro, Cmd.PRE))
                a += tmro + tp.tPRE
                remaining -= tmro
                reacts += 1
            last = max(remaining, tp.tRAS)
            out.append(Command(a, Cmd.ACT, open_row))
            out.append(Command(a + last, c.kind))
            delay = a + last - c.time
            open_row = None
            continue
        out.append(Command(c.time + delay, c.kind, c.row))
    return CommandTimeline(out, tl.bank_rows), reacts


def transform_express(tl: CommandTimeline, tmro: int, tp: TimingParams):
    """Returns (rewritten timeline, unit events, re-ACT count)."""
    new, reacts = express_rewrite(tl, tmro, tp)
    return new, transform_norp(new), reacts


def express_effective_threshold(trh, tmro: int, alpha, tp: TimingParams) -> Fraction:
    """Threshold an RH tracker must be sized for under a tMRO cap."""
    return as_fraction(trh) / tcl_exact(tmro, ChargeModel(as_fraction(alpha)), tp)


def express_tstar_rounded(trh, tmro: int, alpha, tp: TimingParams) -> int:
    return math.floor(express_effective_threshold(trh, tmro, alpha, tp))


def apply_policy(tl: CommandTimeline, policy: PolicyConfig, tp: TimingParams) -> PolicyOutput:
    if policy.kind == "norp":
        return PolicyOutput(tl, transform_norp(tl))
    if policy.kind == "impress_n":
        return PolicyOutput(tl, transform_impress_n(tl, tp))
    if policy.kind == "impress_p":
        return PolicyOutput(tl, transform_impress_p(tl, tp, policy.frac_bits))
    new, events, reacts = transform_express(tl, policy.tmro, tp)
    return PolicyOutput(new, events, reacts)
