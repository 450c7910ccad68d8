"""DDR5 timing parameters, the command vocabulary and timeline legality.

Time is an integer tick count. At 8/3 ticks per ns the default profile has
tRC == 128 ticks, so converting open time into units of tRC is a 7-bit
right shift.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Iterator, Optional, Sequence

from .errors import (
    ConfigError,
    EmptyTimeline,
    TimelineParseError,
    UnclosedRow,
)

DEFAULT_TICKS_PER_NS = Fraction(8, 3)
REFRESH_GROUPS = 8192  # DDR5 refresh groups per tREFW


def ns_to_ticks(ns, ticks_per_ns: Fraction = DEFAULT_TICKS_PER_NS, name: str = "time") -> int:
    """Exact ns -> tick conversion; non-integral results are config errors."""
    if isinstance(ns, float):
        ns = Fraction(repr(ns))
    t = Fraction(ns) * ticks_per_ns
    if t.denominator != 1:
        raise ConfigError(f"{ns} ns is {float(t):.4f} ticks, not an integer", key=name)
    return int(t)


def ticks_to_ns(ticks: int, ticks_per_ns: Fraction = DEFAULT_TICKS_PER_NS) -> Fraction:
    return Fraction(ticks) / ticks_per_ns


@dataclass(frozen=True)
class TimingParams:
    tACT: int
    tPRE: int
    tRAS: int
    tRC: int
    tREFW: int
    tREFI: int
    tRFC: int
    tONMax: int
    tRFM: int
    ticks_per_ns: Fraction = DEFAULT_TICKS_PER_NS

    def __post_init__(self):
        for name in ("tACT", "tPRE", "tRAS", "tRC", "tREFW", "tREFI", "tRFC", "tONMax", "tRFM"):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ConfigError(f"must be a positive integer tick count, got {v!r}", key=name)
        if self.tRAS + self.tPRE != self.tRC:
            raise ConfigError(
                f"tRAS + tPRE ({self.tRAS} + {self.tPRE}) must equal tRC ({self.tRC})", key="tRC"
            )
        if self.tONMax > 5 * self.tREFI:
            raise ConfigError("tONMax exceeds 5 x tREFI", key="tONMax")
        if self.tONMax < self.tRAS:
            raise ConfigError("tONMax below tRAS", key="tONMax")

    @property
    def trc_shift(self) -> Optional[int]:
        """log2(tRC) when tRC is a power of two, else None."""
        if self.tRC & (self.tRC - 1) == 0:
            return self.tRC.bit_length() - 1
        return None

    def div_trc(self, x: int) -> int:
        s = self.trc_shift
        if s is not None:
            return x >> s
        return x // self.tRC

    def with_ns(self, **overrides_ns) -> "TimingParams":
        """Copy with some fields replaced by ns values (converted exactly)."""
        ticks = {k: ns_to_ticks(v, self.ticks_per_ns, k) for k, v in overrides_ns.items()}
        return replace(self, **ticks)


def default_timing() -> TimingParams:
    """DDR5 profile at 2.66 GHz (8/3 ticks per ns); tRC is 128 ticks.

    tREFW is 8192 x tREFI (one refresh group per REF) because 32 ms is not a
    whole number of ticks; tRFC (350 ns) and the RFM latency (205 ns) are
    rounded up to the next tick for the same reason.
    """
    tpn = DEFAULT_TICKS_PER_NS
    t = lambda ns, name: ns_to_ticks(ns, tpn, name)  # noqa: E731
    trefi = t(3900, "tREFI")
    return TimingParams(
        tACT=t(12, "tACT"),
        tPRE=t(12, "tPRE"),
        tRAS=t(36, "tRAS"),
        tRC=t(48, "tRC"),
        tREFW=REFRESH_GROUPS * trefi,
        tREFI=trefi,
        tRFC=math.ceil(Fraction(350) * tpn),
        tONMax=t(Fraction(39, 2) * 1000, "tONMax"),
        tRFM=math.ceil(Fraction(205) * tpn),
        ticks_per_ns=tpn,
    )


class Cmd(str, enum.Enum):
    ACT = "ACT"
    PRE = "PRE"
    REF = "REF"
    RFM = "RFM"


@dataclass(frozen=True)
class Command:
    time: int
    kind: Cmd
    row: Optional[int] = None

    def __str__(self) -> str:
        if self.kind is Cmd.ACT:
            return f"ACT {self.row} @{self.time}"
        return f"{self.kind.value} @{self.time}"


def ACT(row: int, time: int) -> Command:
    return Command(time, Cmd.ACT, row)


def PRE(time: int) -> Command:
    return Command(time, Cmd.PRE)


def REF(time: int) -> Command:
    return Command(time, Cmd.REF)


def RFM(time: int) -> Command:
    return Command(time, Cmd.RFM)


@dataclass(frozen=True)
class CommandTimeline:
    commands: tuple
    bank_rows: int

    def __init__(self, commands: Iterable[Command], bank_rows: int):
        object.__setattr__(self, "commands", tuple(commands))
        object.__setattr__(self, "bank_rows", int(bank_rows))

    def __len__(self) -> int:
        return len(self.commands)

    def __iter__(self) -> Iterator[Command]:
        return iter(self.commands)

    @property
    def end_time(self) -> int:
        return self.commands[-1].time if self.commands else 0

    def to_text(self) -> str:
        lines = [f"rows={self.bank_rows}"]
        lines.extend(str(c) for c in self.commands)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CommandTimeline":
        return parse_timeline(text)


_LINE = re.compile(r"^(ACT)\s+(\d+)\s+@(\d+)$|^(PRE|REF|RFM)\s+@(\d+)$")


def parse_timeline(text: str) -> CommandTimeline:
    rows = None
    cmds = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if rows is None:
            m = re.fullmatch(r"rows\s*=\s*(\d+)", line)
            if not m:
                raise TimelineParseError("expected header 'rows=<n>'", line=lineno)
            rows = int(m.group(1))
            continue
        m = _LINE.match(line)
        if not m:
            raise TimelineParseError(f"cannot parse command {line!r}", line=lineno)
        if m.group(1):
            cmds.append(Command(int(m.group(3)), Cmd.ACT, int(m.group(2))))
        else:
            cmds.append(Command(int(m.group(5)), Cmd(m.group(4))))
    if rows is None:
        raise TimelineParseError("missing 'rows=<n>' header", line=1)
    return CommandTimeline(cmds, rows)


def format_timeline(tl: CommandTimeline) -> str:
    return tl.to_text()


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    rule: Optional[str] = None
    index: Optional[int] = None
    time: Optional[int] = None
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return f"{self.rule} violation at command {self.index} (t={self.time}): {self.message}"


def _fail(rule, i, t, msg) -> ValidationResult:
    return ValidationResult(False, rule, i, t, msg)


def validate_timeline(
    tl: CommandTimeline,
    tp: TimingParams,
    postponed_refs_allowed: Optional[int] = 4,
) -> ValidationResult:
    """Check single-bank command legality.

    ``postponed_refs_allowed=None`` skips the refresh-cadence rule; use it
    for attacker streams that the engine will merge with its own REFs.
    """
    if not tl.commands:
        raise EmptyTimeline("timeline has no commands")
    if postponed_refs_allowed is not None and not 0 <= postponed_refs_allowed <= 4:
        raise ConfigError("postponed_refs_allowed must be in [0, 4]", key="postponed_refs")

    ref_limit = None
    if postponed_refs_allowed is not None:
        ref_limit = (1 + postponed_refs_allowed) * tp.tREFI

    prev_time = 0
    open_row = None
    open_at = None
    last_act = None
    last_close = None
    last_ref = 0
    for i, c in enumerate(tl.commands):
        t = c.time
        if t < 0 or t < prev_time:
            return _fail("monotonic_time", i, t, f"time {t} precedes {prev_time}")
        prev_time = t
        if ref_limit is not None and t - last_ref > ref_limit:
            return _fail(
                "refresh_cadence", i, t,
                f"{t - last_ref} ticks since last REF exceeds {ref_limit}",
            )
        if c.kind is Cmd.ACT:
            if c.row is None or not 0 <= c.row < tl.bank_rows:
                return _fail("row_range", i, t, f"row {c.row} outside bank of {tl.bank_rows}")
            if open_row is not None:
                return _fail("double_act", i, t, f"row {open_row} still open")
            if last_act is not None and t - last_act < tp.tRC:
                return _fail("act_to_act", i, t, f"{t - last_act} < tRC={tp.tRC}")
            if last_close is not None and t - last_close < tp.tPRE:
                return _fail("pre_to_act", i, t, f"{t - last_close} < tPRE={tp.tPRE}")
            open_row, open_at, last_act = c.row, t, t
        elif c.kind in (Cmd.PRE, Cmd.REF):
            if open_row is not None:
                ton = t - open_at
                if ton < tp.tRAS:
                    return _fail("min_open", i, t, f"tON={ton} < tRAS={tp.tRAS}")
                if ton > tp.tONMax:
                    return _fail("max_open", i, t, f"tON={ton} > tONMax={tp.tONMax}")
                open_row = None
                last_close = t
            if c.kind is Cmd.REF:
                last_ref = t
        elif c.kind is Cmd.RFM:
            if open_row is not None:
                return _fail("rfm_open_bank", i, t, f"RFM while row {open_row} is open")
    return ValidationResult(True)


@dataclass(frozen=True)
class Episode:
    row: int
    open_time: int
    close_time: int
    closed_by: Cmd = Cmd.PRE

    @property
    def tON(self) -> int:
        return self.close_time - self.open_time


def row_open_episodes(tl: CommandTimeline) -> list[Episode]:
    """One episode per ACT, closed by the next PRE or REF."""
    out = []
    open_row = None
    open_at = 0
    for c in tl.commands:
        if c.kind is Cmd.ACT:
            if open_row is not None:
                raise UnclosedRow(f"ACT at {c.time} while row {open_row} is open")
            open_row, open_at = c.row, c.time
        elif c.kind in (Cmd.PRE, Cmd.REF) and open_row is not None:
            out.append(Episode(open_row, open_at, c.time, c.kind))
            open_row = None
    if open_row is not None:
        raise UnclosedRow(f"row {open_row} opened at {open_at} is never closed")
    return out


def timeline_from_episodes(
    episodes: Sequence[Episode], bank_rows: int, extra: Iterable[Command] = ()
) -> CommandTimeline:
    """Build a timeline from episodes plus standalone commands (REF/RFM)."""
    cmds = []
    for e in episodes:
        cmds.append(Command(e.open_time, Cmd.ACT, e.row))
        cmds.append(Command(e.close_time, e.closed_by))
    cmds.extend(extra)
    # stable: at equal times closes sort before ACTs via the insertion order above
    order = {Cmd.PRE: 0, Cmd.REF: 0, Cmd.RFM: 1, Cmd.ACT: 2}
    cmds.sort(key=lambda c: (c.time, order[c.kind]))
    return CommandTimeline(cmds, bank_rows)
