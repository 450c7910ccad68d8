"""Single-bank discrete-event simulation.

``run`` checks the attacker timeline, applies the policy (including the
ExPress rewrite), merges periodic refresh, and replays everything in time
order against the tracker and the charge oracle.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional

from .charge import BlastConfig, ChargeModel, VictimChargeState, tcl_episode, trh_fx
from .errors import ConfigError, IncompatiblePairing, InvalidTimeline, MismatchedWorkload
from .fixedpoint import fx_str, fx_to_float
from .mitigations import (
    PolicyConfig,
    express_rewrite,
    transform_impress_n,
    transform_impress_p,
    transform_norp,
)
from .rng import STREAM_TRACKER, make_rng
from .timing import (
    Cmd,
    Command,
    CommandTimeline,
    TimingParams,
    default_timing,
    row_open_episodes,
    validate_timeline,
)
from .trackers import TrackerConfig, build_tracker
from .trackers import WeightedAct as _WA

DEFAULT_REFRESH_GROUPS = 16


class RaaCounter:
    """Rolling count of ACTs since the last RFM."""

    def __init__(self, rfmth: int):
        if rfmth < 1:
            raise ConfigError("rfmth must be >= 1", key="rfmth")
        self.rfmth = rfmth
        self.value = 0

    def on_act(self) -> bool:
        """Count one ACT; True when the threshold is reached (and reset)."""
        self.value += 1
        if self.value >= self.rfmth:
            self.value = 0
            return True
        return False


@dataclass(frozen=True)
class RefreshSchedule:
    groups: int = DEFAULT_REFRESH_GROUPS
    rows_per_group: int = 64
    postponed_allowed: int = 4

    def __post_init__(self):
        if self.groups < 1 or self.rows_per_group < 1:
            raise ConfigError("refresh groups and rows per group must be positive", key="refresh_groups")
        if not 0 <= self.postponed_allowed <= 4:
            raise ConfigError("postponed_refs must be in [0, 4]", key="postponed_refs")

    @classmethod
    def for_bank(cls, bank_rows: int, groups: int = DEFAULT_REFRESH_GROUPS, postponed_allowed: int = 4):
        groups = min(groups, bank_rows)
        if bank_rows % groups:
            raise ConfigError(f"{bank_rows} rows do not split into {groups} refresh groups", key="refresh_groups")
        return cls(groups, bank_rows // groups, postponed_allowed)

    @property
    def bank_rows(self) -> int:
        return self.groups * self.rows_per_group

    def rows_of(self, group: int) -> range:
        lo = group * self.rows_per_group
        return range(lo, lo + self.rows_per_group)


def auto_refresh_events(schedule: RefreshSchedule, tp: TimingParams, horizon: int) -> list[tuple[int, int]]:
    """(time, group) for an idle bank: one REF every tREFI, round-robin."""
    n = horizon // tp.tREFI
    return [(k * tp.tREFI, (k - 1) % schedule.groups) for k in range(1, n + 1)]


@dataclass
class MergedTimeline:
    timeline: CommandTimeline
    ref_groups: list  # group refreshed by each REF, in command order
    forced_closures: int = 0


def merge_refresh(tl: CommandTimeline, schedule: RefreshSchedule, tp: TimingParams) -> MergedTimeline:
    """Interleave controller REFs with an attacker timeline.

    A REF due while the bank is idle goes out on time. A REF due while a row
    is open waits for the close, unless waiting would break the postponement
    budget; then it closes the row itself. If the attacker timeline already
    carries REFs, those are used as-is.
    """
    G = schedule.groups
    if any(c.kind is Cmd.REF for c in tl.commands):
        nref = sum(1 for c in tl.commands if c.kind is Cmd.REF)
        return MergedTimeline(tl, [i % G for i in range(nref)], 0)

    trefi = tp.tREFI
    limit = (1 + schedule.postponed_allowed) * trefi
    out: list[Command] = []
    groups: list[int] = []
    k = 1
    last_ref = 0
    prev_close = 0
    forced = 0

    def issue(t):
        nonlocal k, last_ref
        out.append(Command(t, Cmd.REF))
        groups.append((k - 1) % G)
        k += 1
        last_ref = t

    for e in row_open_episodes(tl):
        a = e.open_time
        while k * trefi <= a:
            issue(max(k * trefi, prev_close))
        if last_ref + limit < a + tp.tRAS:
            issue(a)  # pull the next REF in rather than open a row we must cut short
        deadline = last_ref + limit
        out.append(Command(a, Cmd.ACT, e.row))
        c = e.close_time
        if c > deadline:
            c = deadline
            forced += 1
            issue(c)
        else:
            out.append(Command(c, Cmd.PRE))
        while k * trefi <= c:
            issue(c)
        prev_close = c
    horizon = tl.end_time
    while k * trefi <= horizon:
        issue(max(k * trefi, prev_close))

    rfms = [c for c in tl.commands if c.kind is Cmd.RFM]
    if rfms:
        order = {Cmd.PRE: 0, Cmd.REF: 0, Cmd.RFM: 1, Cmd.ACT: 2}
        out = sorted(out + rfms, key=lambda c: (c.time, order[c.kind]))
    return MergedTimeline(CommandTimeline(out, tl.bank_rows), groups, forced)


@dataclass
class SimReport:
    flips: list = field(default_factory=list)  # (row, time, charge_fx, neighbour_acts)
    peak_charge: dict = field(default_factory=dict)
    demand_acts: int = 0
    mitigative_acts: int = 0
    mitigations: int = 0
    rfm_count: int = 0
    elapsed: int = 0
    seed: int = 0
    express_reacts: int = 0
    forced_closures: int = 0
    ref_count: int = 0
    tracker_weight: int = 0
    mitigation_ticks: int = 0
    rfm_ticks: int = 0
    workload_id: str = ""

    @property
    def flipped(self) -> bool:
        return bool(self.flips)

    @property
    def first_flip(self):
        return self.flips[0] if self.flips else None

    def max_peak(self) -> int:
        return max(self.peak_charge.values(), default=0)

    SUMMARY_COLUMNS = (
        "seed", "flips", "first_flip_row", "first_flip_time", "first_flip_acts",
        "peak_charge", "demand_acts", "express_reacts", "mitigative_acts",
        "mitigations", "rfm_count", "elapsed", "mitigation_ticks", "rfm_ticks",
        "forced_closures",
    )

    def summary(self) -> dict:
        ff = self.first_flip
        return {
            "seed": self.seed,
            "flips": len(self.flips),
            "first_flip_row": "" if ff is None else ff[0],
            "first_flip_time": "" if ff is None else ff[1],
            "first_flip_acts": "" if ff is None else ff[3],
            "peak_charge": fx_str(self.max_peak()),
            "demand_acts": self.demand_acts,
            "express_reacts": self.express_reacts,
            "mitigative_acts": self.mitigative_acts,
            "mitigations": self.mitigations,
            "rfm_count": self.rfm_count,
            "elapsed": self.elapsed,
            "mitigation_ticks": self.mitigation_ticks,
            "rfm_ticks": self.rfm_ticks,
            "forced_closures": self.forced_closures,
        }

    def to_json(self) -> str:
        d = asdict(self)
        d["peak_charge"] = {str(r): fx_to_float(v) for r, v in sorted(self.peak_charge.items())}
        d["flips"] = [[r, t, fx_to_float(c), n] for r, t, c, n in self.flips]
        return json.dumps(d, sort_keys=True, indent=1)


_CLOSE, _REF, _EPOCH, _ACT, _TRACK, _RFM = range(6)


def workload_id(tl: CommandTimeline) -> str:
    return hashlib.sha256(tl.to_text().encode()).hexdigest()[:16]


def run(
    tl: CommandTimeline,
    policy: PolicyConfig,
    tracker: TrackerConfig,
    cm: ChargeModel,
    trh,
    tp: Optional[TimingParams] = None,
    seed: int = 0,
    blast: BlastConfig = BlastConfig(),
    schedule: Optional[RefreshSchedule] = None,
    rfm_enabled: Optional[bool] = None,
) -> SimReport:
    tp = tp or default_timing()
    res = validate_timeline(tl, tp, postponed_refs_allowed=None)
    if not res:
        raise InvalidTimeline(res)
    if policy.kind == "express" and tracker.in_dram:
        raise IncompatiblePairing("ExPress cannot be paired with an in-DRAM tracker")
    policy.check(tp)
    bank_rows = tl.bank_rows
    if schedule is None:
        schedule = RefreshSchedule.for_bank(bank_rows)
    elif schedule.bank_rows != bank_rows:
        raise ConfigError("refresh schedule does not cover the bank", key="refresh_groups")
    if rfm_enabled is None:
        rfm_enabled = tracker.in_dram

    wid = workload_id(tl)
    reacts = 0
    work = tl
    if policy.kind == "express":
        work, reacts = express_rewrite(tl, policy.tmro, tp)
    merged = merge_refresh(work, schedule, tp)
    mtl = merged.timeline
    if policy.kind == "impress_n":
        stream = transform_impress_n(mtl, tp)
    elif policy.kind == "impress_p":
        stream = transform_impress_p(mtl, tp, policy.frac_bits)
    else:
        stream = transform_norp(mtl)

    # ---- event list ----------------------------------------------------
    events = []
    push = events.append
    seq = 0
    ref_i = 0
    open_row = None
    open_at = 0
    for c in mtl.commands:
        kind = c.kind
        if kind is Cmd.ACT:
            push((c.time, _ACT, seq, c.row, 0))
            open_row, open_at = c.row, c.time
        elif kind is Cmd.PRE or kind is Cmd.REF:
            if open_row is not None:
                push((c.time, _CLOSE, seq, open_row, c.time - open_at))
                open_row = None
            if kind is Cmd.REF:
                seq += 1
                push((c.time, _REF, seq, merged.ref_groups[ref_i], 0))
                ref_i += 1
        else:
            push((c.time, _RFM, seq, 0, 0))
        seq += 1
    for ev in stream:
        push((ev.time, _TRACK, seq, ev.row, ev.weight))
        seq += 1
    end = mtl.end_time
    if tracker.kind == "graphene":
        epoch = tracker.epoch_len or tp.tREFW
        t = epoch
        while t <= end:
            push((t, _EPOCH, seq, 0, 0))
            seq += 1
            t += epoch
    events.sort()

    # ---- replay --------------------------------------------------------
    trk = build_tracker(tracker, make_rng(seed, STREAM_TRACKER, tracker.seed))
    raa = RaaCounter(tracker.rfmth)
    state = VictimChargeState(bank_rows)
    charge = state.charge
    peak = {}
    flips = []
    limit = trh_fx(trh)
    rep = SimReport(seed=seed, express_reacts=reacts, forced_closures=merged.forced_closures,
                    workload_id=wid)
    act_count: dict[int, int] = {}
    tcl_cache: dict[int, int] = {}
    cr = blast.charge_radius
    refresh_cost = 2 * blast.refresh_radius
    rfm_pending = False
    bank_open = False
    mitigations = 0
    tracker_weight = 0

    def mitigate(target, now):
        nonlocal mitigations
        mitigations += 1
        state.refresh(blast.refresh_victims(target, bank_rows), now)

    n = len(events)
    i = 0
    while i < n:
        now = events[i][0]
        while i < n and events[i][0] == now:
            _, kind, _, a, b = events[i]
            i += 1
            if kind == _CLOSE:
                bank_open = False
                amt = tcl_cache.get(b)
                if amt is None:
                    amt = tcl_cache[b] = tcl_episode(b, cm, tp)
                lo = a - cr if a - cr > 0 else 0
                hi = a + cr if a + cr < bank_rows else bank_rows - 1
                for v in range(lo, hi + 1):
                    if v == a:
                        continue
                    old = charge.get(v, 0)
                    new = old + amt
                    charge[v] = new
                    if new > peak.get(v, 0):
                        peak[v] = new
                    if old < limit <= new:
                        nacts = 0
                        for r in range(max(0, v - cr), min(bank_rows, v + cr + 1)):
                            if r != v:
                                nacts += act_count.get(r, 0)
                        flips.append((v, now, new, nacts))
            elif kind == _ACT:
                bank_open = True
                act_count[a] = act_count.get(a, 0) + 1
                rep.demand_acts += 1
                if raa.on_act() and rfm_enabled:
                    rfm_pending = True
            elif kind == _TRACK:
                tracker_weight += b
                target = trk.on_act(_WA(a, b, now))
                if target is not None:
                    mitigate(target, now)
            elif kind == _REF:
                rep.ref_count += 1
                state.refresh(schedule.rows_of(a), now)
            elif kind == _EPOCH:
                trk.reset_epoch()
            else:  # explicit RFM in the timeline
                rep.rfm_count += 1
                target = trk.on_rfm()
                if target is not None:
                    mitigate(target, now)
        if rfm_pending and not bank_open:
            rfm_pending = False
            rep.rfm_count += 1
            target = trk.on_rfm()
            if target is not None:
                mitigate(target, now)

    rep.flips = flips
    rep.peak_charge = peak
    rep.mitigations = mitigations
    rep.mitigative_acts = refresh_cost * mitigations
    rep.tracker_weight = tracker_weight
    rep.elapsed = end
    if tracker.in_dram:
        rep.rfm_ticks = rep.rfm_count * tp.tRFM
    else:
        rep.mitigation_ticks = rep.mitigative_acts * tp.tRC
    rep.final_state = state
    return rep


@dataclass(frozen=True)
class OverheadBreakdown:
    demand_overhead: Fraction
    mitigative_overhead: Fraction

    @property
    def total(self) -> Fraction:
        return self.demand_overhead + self.mitigative_overhead


def count_overheads(report: SimReport, baseline: SimReport) -> OverheadBreakdown:
    """ACT overheads normalised to the unprotected baseline's demand ACTs."""
    if report.workload_id != baseline.workload_id:
        raise MismatchedWorkload("reports come from different workload timelines")
    base = baseline.demand_acts
    if base == 0:
        raise MismatchedWorkload("baseline has no activations")
    return OverheadBreakdown(
        Fraction(report.demand_acts - base, base),
        Fraction(report.mitigative_acts, base),
    )
