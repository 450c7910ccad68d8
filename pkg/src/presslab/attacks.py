"""Attack timelines and synthetic workload streams."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .charge import BlastConfig
from .errors import ConfigError, RowOutOfRange, RowsTooClose, TONOutOfRange
from .rng import STREAM_WORKLOAD, make_rng
from .timing import Cmd, Command, CommandTimeline, TimingParams

DEFAULT_BANK_ROWS = 1024
DEFAULT_DECOY_DISTANCE = 8


@dataclass(frozen=True)
class AttackLoop:
    """One aggressor opened for tRAS + K*tRC, N times; each pass is (K+1)*tRC."""

    K: int
    N: int
    aggressor: int = 500

    def __post_init__(self):
        if self.K < 0:
            raise ConfigError("K must be >= 0", key="k")
        if self.N < 1:
            raise ConfigError("N must be >= 1", key="n")


@dataclass(frozen=True)
class StreamWorkload:
    lines_per_row: int = 8
    access_interval: int = 32  # ticks between line accesses
    row_sequence: str = "sequential"

    def __post_init__(self):
        if self.lines_per_row < 1:
            raise ConfigError("lines_per_row must be >= 1", key="lines_per_row")
        if self.access_interval < 1:
            raise ConfigError("access_interval must be positive", key="access_interval_ns")
        if self.row_sequence not in ("sequential", "random"):
            raise ConfigError(f"unknown row sequence {self.row_sequence!r}", key="order")


def _check_row(row: int, bank_rows: int) -> None:
    if not 0 <= row < bank_rows:
        raise RowOutOfRange(f"row {row} outside bank of {bank_rows}")


def _episodes(row: int, ton: int, period: int, n: int, start: int = 0) -> list[Command]:
    cmds = []
    for i in range(n):
        t = start + i * period
        cmds.append(Command(t, Cmd.ACT, row))
        cmds.append(Command(t + ton, Cmd.PRE))
    return cmds


def gen_rowhammer(aggr: int, n: int, tp: TimingParams, bank_rows: int = DEFAULT_BANK_ROWS) -> CommandTimeline:
    if n < 1:
        raise ConfigError("rowhammer needs n >= 1", key="n")
    _check_row(aggr, bank_rows)
    return CommandTimeline(_episodes(aggr, tp.tRAS, tp.tRC, n), bank_rows)


def gen_rowpress(
    aggr: int, ton: int, rounds: int, tp: TimingParams, bank_rows: int = DEFAULT_BANK_ROWS
) -> CommandTimeline:
    if not tp.tRAS <= ton <= tp.tONMax:
        raise TONOutOfRange(f"tON={ton} outside [{tp.tRAS}, {tp.tONMax}]")
    if rounds < 1:
        raise ConfigError("rowpress needs rounds >= 1", key="rounds")
    _check_row(aggr, bank_rows)
    return CommandTimeline(_episodes(aggr, ton, ton + tp.tPRE, rounds), bank_rows)


def gen_combined_loop(loop: AttackLoop, tp: TimingParams, bank_rows: int = DEFAULT_BANK_ROWS) -> CommandTimeline:
    ton = tp.tRAS + loop.K * tp.tRC
    if ton > tp.tONMax:
        raise TONOutOfRange(f"K={loop.K} keeps the row open past tONMax")
    _check_row(loop.aggressor, bank_rows)
    return CommandTimeline(_episodes(loop.aggressor, ton, (loop.K + 1) * tp.tRC, loop.N), bank_rows)


def evasion_round_length(tp: TimingParams) -> int:
    return 3 * tp.tRC


def gen_impressn_evasion(
    aggr: int,
    decoy: Optional[int],
    rounds: int,
    tp: TimingParams,
    bank_rows: int = DEFAULT_BANK_ROWS,
    blast: BlastConfig = BlastConfig(),
) -> CommandTimeline:
    """Window-phase attack on ImPress-N.

    Each round spans three tRC windows starting at boundary B. The aggressor
    opens at B + tPRE and stays open tRC + tRAS, so it closes exactly on the
    boundary B + 2*tRC and is registered in ORA only once (at B + tRC). A
    decoy then occupies the bank from B + 2*tRC + tPRE to B + 3*tRC, so no
    row is open at B + 3*tRC either and ORA never repeats.
    """
    if rounds < 1:
        raise ConfigError("evasion needs rounds >= 1", key="rounds")
    if decoy is None:
        decoy = aggr + DEFAULT_DECOY_DISTANCE
        if decoy >= bank_rows:
            decoy = aggr - DEFAULT_DECOY_DISTANCE
    _check_row(aggr, bank_rows)
    _check_row(decoy, bank_rows)
    min_gap = blast.charge_radius + 2 * blast.refresh_radius
    if abs(aggr - decoy) < min_gap:
        raise RowsTooClose(f"decoy {decoy} must be at least {min_gap} rows from aggressor {aggr}")
    period = evasion_round_length(tp)
    hold = tp.tRC + tp.tRAS
    cmds = []
    for i in range(rounds):
        b = i * period
        a = b + tp.tPRE
        cmds.append(Command(a, Cmd.ACT, aggr))
        cmds.append(Command(a + hold, Cmd.PRE))
        d = b + 2 * tp.tRC + tp.tPRE
        cmds.append(Command(d, Cmd.ACT, decoy))
        cmds.append(Command(d + tp.tRAS, Cmd.PRE))
    return CommandTimeline(cmds, bank_rows)


def gen_stream(
    w: StreamWorkload,
    duration: int,
    tp: TimingParams,
    bank_rows: int = DEFAULT_BANK_ROWS,
    seed: int = 0,
) -> CommandTimeline:
    """Benign traffic for overhead accounting.

    ``sequential`` walks rows in order and keeps each open while its
    ``lines_per_row`` lines are read; ``random`` opens a random row per
    access and closes it after tRAS.
    """
    if duration < tp.tRC:
        raise ConfigError("stream duration must be at least tRC", key="duration_ns")
    cmds = []
    t = 0
    if w.row_sequence == "sequential":
        ton = max(tp.tRAS, min(tp.tONMax, w.lines_per_row * w.access_interval))
        row = 0
        while t + ton <= duration:
            cmds.append(Command(t, Cmd.ACT, row))
            cmds.append(Command(t + ton, Cmd.PRE))
            t += ton + tp.tPRE
            row = (row + 1) % bank_rows
    else:
        rng = make_rng(seed, STREAM_WORKLOAD)
        period = max(tp.tRC, w.access_interval)
        n = (duration - tp.tRAS) // period + 1
        rows = rng.integers(0, bank_rows, size=n)
        for i in range(n):
            t = i * period
            cmds.append(Command(t, Cmd.ACT, int(rows[i])))
            cmds.append(Command(t + tp.tRAS, Cmd.PRE))
    return CommandTimeline(cmds, bank_rows)


@dataclass(frozen=True)
class RandomConstraints:
    horizon: int  # ticks
    rows: int = 8
    max_ton: Optional[int] = None
    max_gap: Optional[int] = None  # idle ticks after tPRE, default 4*tRC
    refresh: bool = True
    postponed_refs: int = 4
    long_fraction: float = 0.5


def gen_random_legal(seed: int, constraints: RandomConstraints, tp: TimingParams) -> CommandTimeline:
    """Random timeline that is legal by construction.

    Open times are a mix of short (up to tRAS + 4*tRC) and long episodes,
    capped so the refresh cadence rule can always be met; REFs are issued
    while the bank is idle whenever the next episode would overrun the
    postponement budget, and occasionally close a row themselves.
    """
    c = constraints
    if c.horizon < tp.tRC:
        raise ConfigError("horizon must be at least tRC", key="horizon")
    rng = make_rng(seed, STREAM_WORKLOAD)
    max_ton = min(tp.tONMax, c.max_ton or tp.tONMax)
    max_gap = c.max_gap if c.max_gap is not None else 4 * tp.tRC
    limit = (1 + c.postponed_refs) * tp.tREFI
    cmds = []
    t = 0
    last_ref = 0
    while True:
        a = t + int(rng.integers(0, max_gap + 1))
        if c.refresh and a + tp.tRAS + tp.tPRE > last_ref + limit:
            # bank is idle at t and t is still inside the budget
            cmds.append(Command(t, Cmd.REF))
            last_ref = t
        hi = max_ton
        if c.refresh:
            # leave room for the following command before the REF deadline
            hi = min(hi, last_ref + limit - a - tp.tPRE)
        if rng.random() < c.long_fraction:
            ton = int(rng.integers(tp.tRAS, hi + 1))
        else:
            ton = int(rng.integers(tp.tRAS, min(hi, tp.tRAS + 4 * tp.tRC) + 1))
        if a + ton > c.horizon:
            break
        row = int(rng.integers(0, c.rows))
        cmds.append(Command(a, Cmd.ACT, row))
        close_kind = Cmd.PRE
        if c.refresh and rng.random() < 0.05:
            close_kind = Cmd.REF
            last_ref = a + ton
        cmds.append(Command(a + ton, close_kind))
        t = a + ton + tp.tPRE
    if not cmds:
        cmds = [Command(0, Cmd.ACT, 0), Command(tp.tRAS, Cmd.PRE)]
    return CommandTimeline(cmds, c.rows)
