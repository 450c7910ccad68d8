"""Running configs (sweep x seeds) and building closed-form tables."""

from __future__ import annotations

import re
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .analysis import (
    graphene_attack_slowdown,
    para_attack_slowdown,
    precision_relative_threshold,
    effective_threshold,
)
from .config import ExperimentConfig, RunPlan
from .engine import SimReport, run
from .errors import ConfigError
from .mitigations import express_effective_threshold
from .report import ReportTable
from .timing import default_timing, ns_to_ticks

CONTEXT_COLUMNS = (
    "policy", "tracker", "alpha", "trh", "entries", "internal_threshold", "p", "rfmth", "frac_bits",
)


def _context(plan: RunPlan) -> dict:
    t = plan.tracker
    return {
        "policy": plan.policy.kind,
        "tracker": t.kind,
        "alpha": plan.cm.alpha,
        "trh": plan.trh,
        "entries": t.entries,
        "internal_threshold": t.internal_threshold,
        "p": "" if t.p is None else str(t.p),
        "rfmth": t.rfmth,
        "frac_bits": plan.policy.frac_bits,
    }


def run_plan(plan: RunPlan, seed: int) -> SimReport:
    tl = plan.timeline(seed)
    return run(tl, plan.policy, plan.tracker, plan.cm, plan.trh, plan.tp, seed=seed,
               blast=plan.blast, schedule=plan.schedule)


def _task(args):
    plan, seed = args
    return run_plan(plan, seed)


def run_config(
    cfg: ExperimentConfig,
    seed_base: int = 0,
    jobs: int = 1,
    emit_timeline: Optional[Path] = None,
) -> tuple[ReportTable, list]:
    """Run every (sweep point, seed) pair; rows come out in sweep x seed order."""
    plans = cfg.points()
    axes = [a for a, _ in cfg.axes()]
    tasks = [(p, seed_base + s) for p in plans for s in cfg.seeds()]
    if emit_timeline is not None:
        plan, seed = tasks[0]
        Path(emit_timeline).write_text(plan.timeline(seed).to_text())
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            reports = list(ex.map(_task, tasks))
    else:
        reports = [_task(t) for t in tasks]
    columns = axes + [c for c in CONTEXT_COLUMNS if c not in axes] + list(SimReport.SUMMARY_COLUMNS)
    table = ReportTable("simulate", columns)
    for (plan, _), rep in zip(tasks, reports):
        row = dict(_context(plan))
        row.update(plan.point)
        row.update(rep.summary())
        table.add(row)
    return table, reports


# --- closed-form tables ------------------------------------------------------

ANALYTIC_KINDS = ("graphene_slowdown", "para_slowdown", "precision", "effective_threshold", "express_tstar")


def parse_values(text: str, integer: bool = False) -> list:
    """``a..b`` (inclusive, optional ``:step``) or a comma list of numbers."""
    text = text.strip()
    m = re.fullmatch(r"(-?\d+)\.\.(-?\d+)(?::(\d+))?", text)
    if m:
        lo, hi, step = int(m.group(1)), int(m.group(2)), int(m.group(3) or 1)
        if step < 1 or hi < lo:
            raise ConfigError(f"bad range {text!r}")
        return list(range(lo, hi + 1, step))
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            v = Fraction(tok)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"cannot read value {tok!r}") from None
        if integer:
            if v.denominator != 1:
                raise ConfigError(f"expected an integer, got {tok!r}")
            v = int(v)
        out.append(v)
    if not out:
        raise ConfigError("empty value list")
    return out


def analytic_table(kind: str, params: dict) -> ReportTable:
    if kind == "precision":
        t = ReportTable("analytic_precision", ["b", "relative_threshold"])
        for b in parse_values(params.get("b") or "0..7", integer=True):
            t.add({"b": b, "relative_threshold": precision_relative_threshold(b)})
        return t
    if kind == "graphene_slowdown":
        t = ReportTable("analytic_graphene_slowdown", ["T", "K", "slowdown"])
        for T in parse_values(params.get("T") or "1000,2000,4000"):
            for K in parse_values(params.get("K") or "0..100", integer=True):
                t.add({"T": T, "K": K, "slowdown": graphene_attack_slowdown(T, K)})
        return t
    if kind == "para_slowdown":
        t = ReportTable("analytic_para_slowdown", ["p", "K", "slowdown"])
        for p in parse_values(params.get("p") or "1/84"):
            for K in parse_values(params.get("K") or "0..100", integer=True):
                t.add({"p": str(p), "K": K, "slowdown": para_attack_slowdown(p, K)})
        return t
    if kind == "effective_threshold":
        t = ReportTable("analytic_effective_threshold", ["trh", "A", "tstar"])
        for trh in parse_values(params.get("trh") or "4000"):
            for A in parse_values(params.get("A") or "1,1.35,2"):
                t.add({"trh": trh, "A": A, "tstar": effective_threshold(trh, A)})
        return t
    if kind == "express_tstar":
        tp = default_timing()
        t = ReportTable("analytic_express_tstar", ["trh", "tmro_ns", "alpha", "tstar"])
        for trh in parse_values(params.get("trh") or "4000"):
            for tm in parse_values(params.get("tmro_ns") or "36,84"):
                ticks = ns_to_ticks(tm, tp.ticks_per_ns, "tmro_ns")
                for a in parse_values(params.get("alpha") or "0.35,1"):
                    t.add({"trh": trh, "tmro_ns": tm, "alpha": a,
                           "tstar": express_effective_threshold(trh, ticks, a, tp)})
        return t
    raise ConfigError(f"unknown analytic kind {kind!r}; choose from {', '.join(ANALYTIC_KINDS)}")


# default plot axes per analytic table
ANALYTIC_PLOTS = {
    "precision": ("b", "relative_threshold", None),
    "graphene_slowdown": ("K", "slowdown", "T"),
    "para_slowdown": ("K", "slowdown", "p"),
    "effective_threshold": ("A", "tstar", "trh"),
    "express_tstar": ("alpha", "tstar", "tmro_ns"),
}
