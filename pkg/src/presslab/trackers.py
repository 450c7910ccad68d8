"""Aggressor-row trackers driven by weighted activation events.

Weights and counters are Q.7 integers (see :mod:`presslab.fixedpoint`).
Graphene and PARA live in the memory controller and return a target from
``on_act``; Mithril and MINT live in the DRAM and only return a target from
``on_rfm``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigError, UnsupportedCombination
from .fixedpoint import ONE, as_fraction, fx_ceil

TRACKER_KINDS = ("graphene", "para", "mithril", "mint", "none")
MC_TRACKERS = ("graphene", "para", "none")
IN_DRAM_TRACKERS = ("mithril", "mint")


class WeightedAct(NamedTuple):
    row: int
    weight: int  # Q.7
    time: int
    synthetic: bool = False


class NullTracker:
    """Unprotected baseline: sees everything, mitigates nothing."""

    in_dram = False

    def on_act(self, ev: WeightedAct) -> Optional[int]:
        return None

    def on_rfm(self) -> Optional[int]:
        return None

    def reset_epoch(self) -> None:
        pass


class Graphene:
    """Misra-Gries table with a spillover counter (Graphene's variant).

    A tracked row's counter, or the spillover count for an untracked row,
    never under-estimates the weight the row received since its last
    mitigation in the current epoch. A row is returned as a target when its
    counter reaches ``internal_threshold``; the counter then restarts at 0.
    """

    in_dram = False

    def __init__(self, entries: int, internal_threshold):
        if entries < 1:
            raise ConfigError("graphene needs at least one entry", key="entries")
        self.entries = entries
        self.threshold = fx_ceil(internal_threshold)
        if self.threshold <= 0:
            raise ConfigError("internal threshold must be positive", key="internal_threshold")
        self.table: dict[int, int] = {}
        self.spill = 0

    def on_act(self, ev: WeightedAct) -> Optional[int]:
        row, w = ev.row, ev.weight
        table = self.table
        if row in table:
            c = table[row] + w
        elif len(table) < self.entries:
            c = self.spill + w
        else:
            victim = min(table, key=lambda r: (table[r], r))
            if table[victim] > self.spill:
                self.spill += w
                return None
            del table[victim]
            c = self.spill + w
        if c >= self.threshold:
            table[row] = 0
            return row
        table[row] = c
        return None

    def on_rfm(self) -> Optional[int]:
        return None

    def reset_epoch(self) -> None:
        self.table.clear()
        self.spill = 0

    def estimate(self, row: int) -> int:
        return self.table.get(row, self.spill)


class Para:
    """Selects each event with probability ``min(1, p * weight)``.

    Exactly one uniform draw is consumed per event, selected or not.
    """

    in_dram = False

    def __init__(self, p, rng: np.random.Generator):
        p = as_fraction(p)
        if not 0 <= p <= 1:
            raise ConfigError(f"p must be in [0, 1], got {p}", key="p")
        self.p = p
        self._p_unit = float(p) / ONE
        self.rng = rng

    def selection_probability(self, weight: int) -> float:
        return min(1.0, self._p_unit * weight)

    def on_act(self, ev: WeightedAct) -> Optional[int]:
        u = self.rng.random()
        if u < self._p_unit * ev.weight:
            return ev.row
        return None

    def on_rfm(self) -> Optional[int]:
        return None

    def reset_epoch(self) -> None:
        pass


class Mithril:
    """Space-Saving summary; mitigates the heaviest row at each RFM."""

    in_dram = True

    def __init__(self, entries: int):
        if entries < 1:
            raise ConfigError("mithril needs at least one entry", key="entries")
        self.entries = entries
        self.table: dict[int, int] = {}

    def on_act(self, ev: WeightedAct) -> Optional[int]:
        table = self.table
        row, w = ev.row, ev.weight
        if row in table:
            table[row] += w
        elif len(table) < self.entries:
            table[row] = w
        else:
            victim = min(table, key=lambda r: (table[r], r))
            floor = table.pop(victim)
            table[row] = floor + w
        return None

    def on_rfm(self) -> Optional[int]:
        table = self.table
        if not table:
            return None
        target = min(table, key=lambda r: (-table[r], r))
        table[target] = min(table.values())
        return target

    def reset_epoch(self) -> None:
        pass


class Mint:
    """Single-entry in-DRAM tracker (SAN/CAN/SAR registers).

    SAN is drawn uniformly from the Q.7 grid over (0, rfmth]; an event whose
    weight moves CAN across SAN is captured, so capture probability is
    proportional to weight.
    """

    in_dram = True

    def __init__(self, rfmth: int, rng: np.random.Generator):
        if rfmth < 1:
            raise ConfigError("rfmth must be >= 1", key="rfmth")
        self.rfmth = rfmth
        self.rng = rng
        self.can = 0
        self.sar: Optional[int] = None
        self.san = self._draw_san()

    def _draw_san(self) -> int:
        return int(self.rng.integers(1, self.rfmth * ONE + 1))

    def on_act(self, ev: WeightedAct) -> Optional[int]:
        prev = self.can
        self.can = prev + ev.weight
        if prev < self.san <= self.can:
            self.sar = ev.row
        return None

    def on_rfm(self) -> Optional[int]:
        target = self.sar
        self.can = 0
        self.sar = None
        self.san = self._draw_san()
        return target

    def reset_epoch(self) -> None:
        pass


@dataclass(frozen=True)
class TrackerConfig:
    kind: str
    entries: Optional[int] = None
    internal_threshold: Optional[Fraction] = None
    p: Optional[Fraction] = None
    rfmth: int = 80
    frac_bits: int = 7
    seed: int = 0
    epoch_len: Optional[int] = None  # ticks; None -> tREFW

    def __post_init__(self):
        if self.kind not in TRACKER_KINDS:
            raise ConfigError(f"unknown tracker {self.kind!r}", key="kind")
        if not 0 <= self.frac_bits <= 7:
            raise ConfigError("frac_bits must be in [0, 7]", key="frac_bits")
        if self.internal_threshold is not None:
            object.__setattr__(self, "internal_threshold", as_fraction(self.internal_threshold))
        if self.p is not None:
            object.__setattr__(self, "p", as_fraction(self.p))
        if self.kind in ("graphene", "mithril") and not self.entries:
            raise ConfigError(f"{self.kind} needs 'entries'", key="entries")
        if self.kind == "graphene" and self.internal_threshold is None:
            raise ConfigError("graphene needs 'internal_threshold'", key="internal_threshold")
        if self.kind == "para" and self.p is None:
            raise ConfigError("para needs 'p'", key="p")

    @property
    def in_dram(self) -> bool:
        return self.kind in IN_DRAM_TRACKERS

    def with_(self, **kw) -> "TrackerConfig":
        return replace(self, **kw)


def build_tracker(cfg: TrackerConfig, rng: np.random.Generator):
    if cfg.kind == "graphene":
        return Graphene(cfg.entries, cfg.internal_threshold)
    if cfg.kind == "para":
        return Para(cfg.p, rng)
    if cfg.kind == "mithril":
        return Mithril(cfg.entries)
    if cfg.kind == "mint":
        return Mint(cfg.rfmth, rng)
    return NullTracker()


# --- sizing ---------------------------------------------------------------

GRAPHENE_BASE_ENTRIES = 448  # per bank at TRH 4K
BASE_TRH = 4000
PARA_BASE_INV_P = 184  # p = 1/184 at TRH 4K
PARA_SLOWDOWN_INV_P = 84  # p = 1/84 at TRH 4K in the attack-slowdown model
MITHRIL_ENTRIES = {Fraction(0): 383, Fraction(35, 100): 615, Fraction(1): 1545}
MINT_RFMTH = {Fraction(0): 80, Fraction(35, 100): 60, Fraction(1): 40}
MINT_TOLERATED_TRH = 1600

THRESHOLD_PRESETS = ("third", "half", "tight")


def graphene_internal_threshold(target, preset: str = "third") -> Fraction:
    """Internal threshold for a Graphene table that must protect ``target``.

    ``third``: floor(T/3), the 1333-at-4K sizing. ``half``: T/2, the
    periodic-reset model used for attack slowdown. ``tight``: ceil(T)-1, the
    largest counter that still mitigates a single-sided Rowhammer pattern
    before its victim reaches T.
    """
    t = as_fraction(target)
    if preset == "third":
        return Fraction(math.floor(t / 3))
    if preset == "half":
        return t / 2
    if preset == "tight":
        return Fraction(math.ceil(t) - 1)
    raise ConfigError(f"unknown threshold preset {preset!r}", key="threshold_preset")


def graphene_secure_threshold(trh, max_weight, sides: int = 2) -> Fraction:
    """Largest internal threshold that keeps every victim below ``trh``.

    Each of the ``sides`` aggressors of a victim can deposit at most
    threshold + max_weight before its own mitigation refreshes the victim.
    Epoch resets are not covered; keep runs inside one epoch.
    """
    t = as_fraction(trh) / sides - as_fraction(max_weight)
    if t <= 0:
        raise UnsupportedCombination(
            f"TRH {trh} cannot be protected against episodes of weight {max_weight}"
        )
    return t


def _scale(alpha, policy: str) -> Fraction:
    if policy in ("impress_n", "express"):
        return 1 + as_fraction(alpha)
    if policy in ("impress_p", "norp"):
        return Fraction(1)
    raise ConfigError(f"unknown policy {policy!r}", key="policy")


def size_tracker(
    kind: str,
    trh,
    alpha_policy=0,
    rfmth: int = 80,
    policy: str = "impress_n",
    threshold_preset: str = "third",
    para_family: str = "methodology",
) -> TrackerConfig:
    """Tracker configuration from the published sizing rules.

    ImPress-N and ExPress must target T* = TRH / (1 + alpha), so Graphene
    entries and PARA's p grow by (1 + alpha); ImPress-P keeps the RH sizing.
    """
    trh = as_fraction(trh)
    if trh <= 0:
        raise ConfigError("trh must be positive", key="trh")
    alpha = as_fraction(alpha_policy)
    scale = _scale(alpha, policy)
    if kind == "graphene":
        entries = math.ceil(GRAPHENE_BASE_ENTRIES * BASE_TRH * scale / trh)
        thr = graphene_internal_threshold(trh / scale, threshold_preset)
        return TrackerConfig("graphene", entries=entries, internal_threshold=thr, rfmth=rfmth)
    if kind == "para":
        if para_family == "methodology":
            if trh != BASE_TRH:
                raise UnsupportedCombination("PARA p=1/184 is only given for TRH 4K")
            inv = Fraction(PARA_BASE_INV_P)
        elif para_family == "slowdown_model":
            inv = PARA_SLOWDOWN_INV_P * trh / BASE_TRH
        else:
            raise ConfigError(f"unknown PARA family {para_family!r}", key="para_family")
        return TrackerConfig("para", p=Fraction(1, math.floor(inv / scale)), rfmth=rfmth)
    if kind == "mithril":
        key = Fraction(0) if policy == "impress_p" else alpha
        if trh != BASE_TRH or rfmth != 80 or key not in MITHRIL_ENTRIES:
            raise UnsupportedCombination(
                f"no published Mithril size for TRH={trh}, RFMTH={rfmth}, alpha={alpha}"
            )
        return TrackerConfig("mithril", entries=MITHRIL_ENTRIES[key], rfmth=rfmth)
    if kind == "mint":
        key = Fraction(0) if policy == "impress_p" else alpha
        if trh != MINT_TOLERATED_TRH or key not in MINT_RFMTH:
            raise UnsupportedCombination(f"no published MINT setting for TRH={trh}, alpha={alpha}")
        return TrackerConfig("mint", rfmth=MINT_RFMTH[key])
    raise ConfigError(f"cannot size tracker {kind!r}", key="kind")
