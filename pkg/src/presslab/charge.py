"""Golden charge-loss oracle.

Victim charge is kept in Q.7 units where one unit equals the leakage of a
single minimum-length activation. An episode that keeps an aggressor open
for ``tON`` costs each neighbour ``1 + alpha * (tON - tRAS) / tRC`` units,
rounded up so the oracle never under-counts. The oracle knows nothing about
trackers; the engine tells it when rows are refreshed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from .errors import ConfigError, RowOutOfRange, TONOutOfRange
from .fixedpoint import ONE, as_fraction, fx_ceil, fx_str
from .timing import TimingParams


@dataclass(frozen=True)
class ChargeModel:
    alpha: Fraction
    leakage_kind: str = "linear_clm"

    def __post_init__(self):
        a = as_fraction(self.alpha)
        object.__setattr__(self, "alpha", a)
        if not 0 <= a <= 1:
            raise ConfigError(f"alpha must be in [0, 1], got {a}", key="alpha")
        if self.leakage_kind != "linear_clm":
            raise ConfigError(f"unknown leakage kind {self.leakage_kind!r}", key="leakage_kind")


@dataclass(frozen=True)
class BlastConfig:
    charge_radius: int = 1
    refresh_radius: int = 2

    def __post_init__(self):
        if not 1 <= self.charge_radius <= self.refresh_radius:
            raise ConfigError("need 1 <= charge_radius <= refresh_radius", key="charge_radius")

    def charge_victims(self, aggressor: int, bank_rows: int) -> list[int]:
        return _neighbours(aggressor, self.charge_radius, bank_rows)

    def refresh_victims(self, aggressor: int, bank_rows: int) -> list[int]:
        return _neighbours(aggressor, self.refresh_radius, bank_rows)


def _neighbours(row: int, radius: int, bank_rows: int) -> list[int]:
    lo = max(0, row - radius)
    hi = min(bank_rows - 1, row + radius)
    return [r for r in range(lo, hi + 1) if r != row]


def tcl_rowhammer(k: int) -> int:
    """Total charge loss of ``k`` plain activations, in whole units."""
    if k < 0:
        raise ValueError("activation count must be nonnegative")
    return k


def _check_ton(ton: int, tp: TimingParams) -> None:
    if not tp.tRAS <= ton <= tp.tONMax:
        raise TONOutOfRange(f"tON={ton} outside [{tp.tRAS}, {tp.tONMax}]")


def tcl_exact(ton: int, cm: ChargeModel, tp: TimingParams) -> Fraction:
    _check_ton(ton, tp)
    return 1 + cm.alpha * Fraction(ton - tp.tRAS, tp.tRC)


def tcl_episode(ton: int, cm: ChargeModel, tp: TimingParams) -> int:
    """Charge of one open episode as a Q.7 value, rounded toward +inf."""
    _check_ton(ton, tp)
    p, q = cm.alpha.numerator, cm.alpha.denominator
    num = ONE * (q * tp.tRC + p * (ton - tp.tRAS))
    den = q * tp.tRC
    return -(-num // den)


@dataclass
class VictimChargeState:
    bank_rows: int
    charge: dict = field(default_factory=dict)
    last_refresh: dict = field(default_factory=dict)

    def copy(self) -> "VictimChargeState":
        return VictimChargeState(self.bank_rows, dict(self.charge), dict(self.last_refresh))

    def get(self, row: int) -> int:
        return self.charge.get(row, 0)

    def add_episode(self, aggressor: int, amount: int, bc: BlastConfig) -> list[int]:
        """In-place accrual; returns the victims touched."""
        if not 0 <= aggressor < self.bank_rows:
            raise RowOutOfRange(f"row {aggressor} outside bank of {self.bank_rows}")
        victims = bc.charge_victims(aggressor, self.bank_rows)
        ch = self.charge
        for v in victims:
            ch[v] = ch.get(v, 0) + amount
        return victims

    def refresh(self, rows: Iterable[int], now: int) -> None:
        for r in rows:
            self.charge.pop(r, None)
            self.last_refresh[r] = now

    def to_csv(self) -> str:
        rows = sorted(set(self.charge) | set(self.last_refresh))
        lines = ["row,charge,last_refresh"]
        for r in rows:
            lr = self.last_refresh.get(r, "")
            lines.append(f"{r},{fx_str(self.get(r))},{lr}")
        return "\n".join(lines) + "\n"


def apply_episode(
    state: VictimChargeState,
    aggressor: int,
    ton: int,
    cm: ChargeModel,
    tp: TimingParams,
    bc: BlastConfig = BlastConfig(),
) -> VictimChargeState:
    out = state.copy()
    out.add_episode(aggressor, tcl_episode(ton, cm, tp), bc)
    return out


def refresh_rows(state: VictimChargeState, rows: Iterable[int], now: int) -> VictimChargeState:
    out = state.copy()
    out.refresh(rows, now)
    return out


def trh_fx(trh) -> int:
    """Threshold in Q.7 units; a victim flips once its charge reaches it."""
    v = fx_ceil(trh)
    if v <= 0:
        raise ConfigError("TRH must be positive", key="trh")
    return v


def flipped_rows(state: VictimChargeState, trh) -> set[int]:
    limit = trh_fx(trh)
    return {r for r, c in state.charge.items() if c >= limit}
