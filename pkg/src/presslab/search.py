"""Charge-amplification search.

Amplification of a timeline is the largest ratio, over victims, of oracle
charge to the tracker-visible weight of the aggressors that caused it. The
exhaustive search maximises that ratio over every single-aggressor schedule
on a time grid by combining a dynamic program with Dinkelbach iteration, so
it is exact on the grid rather than sampled.

Restricting to one aggressor loses nothing: weight is attributed per row, a
victim's ratio over two aggressors is a mediant of their individual ratios,
and any decoy row that breaks ImPress-N's ORA chain can be replaced by idle
time with the same effect.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .attacks import (
    RandomConstraints,
    evasion_round_length,
    gen_impressn_evasion,
    gen_random_legal,
    gen_rowpress,
)
from .charge import BlastConfig, ChargeModel, tcl_exact
from .errors import BudgetTooSmall, UnsupportedCombination
from .fixedpoint import ONE
from .mitigations import (
    PolicyConfig,
    eact_fx,
    express_rewrite,
    impress_n_synthetic,
    transform_impress_n,
    transform_impress_p,
    transform_norp,
)
from .timing import Cmd, Command, CommandTimeline, TimingParams, row_open_episodes

SEARCH_KINDS = ("closed_family", "exhaustive", "randomized")


@dataclass(frozen=True)
class SearchBudget:
    horizon: int  # ticks
    rows: int = 8
    quantum: Optional[int] = None  # grid for exhaustive search; None -> tPRE
    samples: int = 200  # randomized kind
    seed: int = 0


@dataclass(frozen=True)
class AmplificationResult:
    A: Fraction
    witness: CommandTimeline
    search_kind: str
    victim: Optional[int] = None

    def describe(self) -> str:
        return (
            f"search_kind = {self.search_kind}\n"
            f"A = {self.A} ({float(self.A):.6f})\n"
            f"victim = {self.victim}\n"
            f"witness_commands = {len(self.witness)}\n"
        )


def policy_events(tl: CommandTimeline, policy: PolicyConfig, tp: TimingParams):
    """(timeline seen by the bank, tracker events) for a policy."""
    if policy.kind == "express":
        tl, _ = express_rewrite(tl, policy.tmro, tp)
        return tl, transform_norp(tl)
    if policy.kind == "impress_n":
        return tl, transform_impress_n(tl, tp)
    if policy.kind == "impress_p":
        return tl, transform_impress_p(tl, tp, policy.frac_bits)
    return tl, transform_norp(tl)


def timeline_amplification(
    tl: CommandTimeline,
    policy: PolicyConfig,
    cm: ChargeModel,
    tp: TimingParams,
    blast: BlastConfig = BlastConfig(),
) -> tuple[Fraction, Optional[int]]:
    """Exact amplification of one timeline through the real transforms.

    Refresh is ignored: it lowers charge without touching tracker weight, so
    leaving it out can only raise the ratio.
    """
    bank_tl, events = policy_events(tl, policy, tp)
    charge: dict[int, Fraction] = {}
    for e in row_open_episodes(bank_tl):
        amt = tcl_exact(e.tON, cm, tp)
        for v in blast.charge_victims(e.row, bank_tl.bank_rows):
            charge[v] = charge.get(v, 0) + amt
    weight: dict[int, int] = {}
    for ev in events:
        weight[ev.row] = weight.get(ev.row, 0) + ev.weight
    best, arg = Fraction(0), None
    for v in sorted(charge):
        w = sum(weight.get(a, 0) for a in blast.charge_victims(v, bank_tl.bank_rows))
        ratio = charge[v] * ONE / w
        if ratio > best:
            best, arg = ratio, v
    return best, arg


# --- exhaustive grid search ------------------------------------------------


@dataclass(frozen=True)
class _Ep:
    a: int  # slot
    c: int


def _grid(budget: SearchBudget, tp: TimingParams) -> tuple[int, int]:
    q = budget.quantum or tp.tPRE
    for name in ("tRC", "tRAS", "tPRE"):
        if getattr(tp, name) % q:
            raise UnsupportedCombination(f"{name} is not a multiple of the search grid {q}")
    if budget.horizon < tp.tRC:
        raise BudgetTooSmall(f"horizon {budget.horizon} is shorter than tRC")
    if budget.rows < 3:
        raise BudgetTooSmall("need at least 3 rows for an aggressor with a victim")
    return q, budget.horizon // q


class _Model:
    """Per-episode charge and weight on the grid, as integers."""

    def __init__(self, policy: PolicyConfig, cm: ChargeModel, tp: TimingParams, q: int):
        self.policy, self.tp, self.q = policy, tp, q
        self.trc_slots = tp.tRC // q
        self.pre_slots = tp.tPRE // q
        self.ras_slots = tp.tRAS // q
        cap = tp.tONMax
        if policy.kind == "express":
            cap = min(cap, policy.tmro)
        self.max_slots = cap // q
        al = cm.alpha
        self._p, self._q = al.numerator, al.denominator
        self.charge_den = self._q * tp.tRC  # charge numerators share this denominator

    def charge(self, ton_slots: int) -> int:
        ton = ton_slots * self.q
        return self._q * self.tp.tRC + self._p * (ton - self.tp.tRAS)

    def boundaries(self, a: int, c: int) -> int:
        n = self.trc_slots
        first = -(-a // n)
        last = (c - 1) // n
        return max(0, last - first + 1)

    def weight(self, a: int, c: int) -> int:
        """Tracker weight in Q.7."""
        kind = self.policy.kind
        if kind == "impress_p":
            return eact_fx((c - a) * self.q, self.tp, self.policy.frac_bits)
        if kind == "impress_n":
            # one real ACT plus one synthetic event per extra boundary crossed
            return ONE * max(1, self.boundaries(a, c))
        return ONE


def _dp(model: _Model, S: int, lam: Fraction):
    """Best schedule for objective sum(charge) - lam * sum(weight)."""
    P, Q = lam.numerator, lam.denominator
    cden = model.charge_den
    # value scaled by Q*ONE*cden to stay integral
    top = S + model.pre_slots + 1
    best: list = [None] * (top + 1)
    back: dict = {}
    best[0] = 0
    for r in range(S + 1):
        v = best[r]
        if v is None:
            continue
        if best[r + 1] is None or v > best[r + 1]:
            best[r + 1] = v
            back[r + 1] = ("idle", r)
        a = r
        for c in range(a + model.ras_slots, min(S, a + model.max_slots) + 1):
            nv = v + model.charge(c - a) * ONE * Q - P * model.weight(a, c) * cden
            r2 = c + model.pre_slots
            if best[r2] is None or nv > best[r2]:
                best[r2] = nv
                back[r2] = ("ep", a, c)
    end, val = None, None
    for r, v in enumerate(best):
        if v is not None and (val is None or v > val):
            end, val = r, v
    eps = []
    node = end
    while node in back:
        step = back[node]
        if step[0] == "ep":
            eps.append(_Ep(step[1], step[2]))
        node = step[1]
    eps.reverse()
    return val, eps


def _schedule_ratio(model: _Model, eps: list) -> Fraction:
    C = sum(model.charge(e.c - e.a) for e in eps)
    W = sum(model.weight(e.a, e.c) for e in eps)
    return Fraction(C * ONE, W * model.charge_den)


def grid_timeline(eps, q: int, rows: int, aggressor: Optional[int] = None) -> CommandTimeline:
    row = rows // 2 if aggressor is None else aggressor
    cmds = []
    for e in eps:
        cmds.append(Command(e.a * q, Cmd.ACT, row))
        cmds.append(Command(e.c * q, Cmd.PRE))
    return CommandTimeline(cmds, rows)


def exhaustive_search(policy: PolicyConfig, cm: ChargeModel, tp: TimingParams, budget: SearchBudget):
    """Exact maximum over all grid schedules (Dinkelbach on a DP).

    Returns (A, episodes on the grid, grid quantum).
    """
    q, S = _grid(budget, tp)
    model = _Model(policy, cm, tp, q)
    if model.max_slots < model.ras_slots:
        raise BudgetTooSmall("no legal episode fits the policy cap")
    eps = [_Ep(0, model.ras_slots)]
    lam = _schedule_ratio(model, eps)
    while True:
        val, cand = _dp(model, S, lam)
        if val is None or val <= 0 or not cand:
            return lam, eps, q
        lam, eps = _schedule_ratio(model, cand), cand


def best_single_episode(policy: PolicyConfig, cm: ChargeModel, tp: TimingParams, budget: SearchBudget):
    """Best one-episode schedule; used to cross-check the DP."""
    q, S = _grid(budget, tp)
    model = _Model(policy, cm, tp, q)
    best, arg = None, None
    for a in range(S + 1):
        for c in range(a + model.ras_slots, min(S, a + model.max_slots) + 1):
            r = _schedule_ratio(model, [_Ep(a, c)])
            if best is None or r > best:
                best, arg = r, _Ep(a, c)
    return best, arg


# --- closed families and randomized sampling --------------------------------


def closed_family_candidates(tp: TimingParams, budget: SearchBudget):
    rows = budget.rows
    aggr = rows // 2
    q = budget.quantum or tp.tPRE
    top = min(tp.tONMax, budget.horizon)
    ton = tp.tRAS
    while ton <= top:
        yield gen_rowpress(aggr, ton, 1, tp, rows)
        reps = budget.horizon // (ton + tp.tPRE)
        if reps > 1:
            yield gen_rowpress(aggr, ton, reps, tp, rows)
        ton += q
    period = evasion_round_length(tp)
    if budget.horizon >= period:
        blast = BlastConfig()
        gap = blast.charge_radius + 2 * blast.refresh_radius
        if rows > gap:
            yield gen_impressn_evasion(0, gap, budget.horizon // period, tp, rows, blast)


def amplification_search(
    policy: PolicyConfig,
    cm: ChargeModel,
    tp: TimingParams,
    budget: SearchBudget,
    kind: str = "exhaustive",
    blast: BlastConfig = BlastConfig(),
) -> AmplificationResult:
    if kind == "exhaustive":
        A, eps, q = exhaustive_search(policy, cm, tp, budget)
        wit = grid_timeline(eps, q, budget.rows)
        check, victim = timeline_amplification(wit, policy, cm, tp, blast)
        if check != A:
            raise AssertionError(f"grid model {A} disagrees with transforms {check}")
        return AmplificationResult(A, wit, kind, victim)
    if budget.horizon < tp.tRC:
        raise BudgetTooSmall(f"horizon {budget.horizon} is shorter than tRC")
    if kind == "closed_family":
        cands = closed_family_candidates(tp, budget)
    elif kind == "randomized":
        cons = RandomConstraints(horizon=budget.horizon, rows=budget.rows, refresh=False)
        cands = (gen_random_legal(budget.seed + i, cons, tp) for i in range(budget.samples))
    else:
        raise ValueError(f"unknown search kind {kind!r}")
    best = None
    for tl in cands:
        A, v = timeline_amplification(tl, policy, cm, tp, blast)
        if best is None or A > best.A:
            best = AmplificationResult(A, tl, kind, v)
    if best is None:
        raise BudgetTooSmall("no candidate pattern fits the budget")
    return best


def matches_evasion_shape(tl: CommandTimeline, tp: TimingParams) -> bool:
    """True when every episode of the witness's aggressor is a window-phase
    evasion: held tRC + tRAS, seen in exactly one ORA sample, never repeated."""
    eps = row_open_episodes(tl)
    if not eps:
        return False
    counts: dict[int, int] = {}
    for e in eps:
        counts[e.row] = counts.get(e.row, 0) + 1
    aggr = max(counts, key=lambda r: (counts[r], -r))
    n = tp.tRC
    for e in eps:
        if e.row != aggr:
            continue
        if e.tON != tp.tRC + tp.tRAS:
            return False
        first = -(-e.open_time // n)
        last = (e.close_time - 1) // n
        if last - first + 1 != 1:
            return False
    syn = [ev for ev in impress_n_synthetic(tl, tp) if ev.row == aggr]
    return not syn
