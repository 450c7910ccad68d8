"""Experiment configuration files.

A config is an INI file with the sections ``run``, ``timing``, ``bank``,
``policy``, ``tracker``, ``attack``, ``oracle``, ``search`` and ``sweep``.
Values are kept as the strings written in the file so that a config
serialises back to itself; :meth:`ExperimentConfig.points` resolves them
into typed run plans, one per sweep point.
"""

from __future__ import annotations

import configparser
import itertools
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .attacks import (
    AttackLoop,
    RandomConstraints,
    StreamWorkload,
    gen_combined_loop,
    gen_impressn_evasion,
    gen_random_legal,
    gen_rowhammer,
    gen_rowpress,
    gen_stream,
)
from .charge import BlastConfig, ChargeModel
from .engine import RefreshSchedule
from .errors import ConfigError, PresslabError
from .mitigations import POLICY_KINDS, PolicyConfig, express_effective_threshold
from .search import SEARCH_KINDS, SearchBudget
from .timing import CommandTimeline, TimingParams, default_timing, ns_to_ticks, parse_timeline
from .trackers import (
    THRESHOLD_PRESETS,
    TRACKER_KINDS,
    TrackerConfig,
    graphene_internal_threshold,
    size_tracker,
)

SECTIONS = ("run", "timing", "bank", "policy", "tracker", "attack", "oracle", "search", "sweep")

KEYS = {
    "run": {"name", "seeds", "description", "trials"},
    "timing": {"profile", "tras_ns", "tpre_ns", "trc_ns", "trefi_ns", "tonmax_ns", "trfm_ns", "trfc_ns"},
    "bank": {"rows", "refresh_groups", "postponed_refs"},
    "policy": {"policy", "tmro_ns", "tmro_ticks", "frac_bits", "alpha_assumed"},
    "tracker": {
        "kind", "entries", "internal_threshold", "threshold_preset", "size_for", "p",
        "para_family", "rfmth", "frac_bits", "seed", "epoch_ns", "epoch_ticks",
    },
    "attack": {
        "attack", "aggressor", "decoy", "rounds", "n", "k", "ton_ns", "ton_ticks",
        "lines_per_row", "access_interval_ns", "access_interval_ticks", "order",
        "duration_ns", "duration_ticks", "horizon_ns", "horizon_ticks", "rows",
        "max_ton_ticks", "path",
    },
    "oracle": {"alpha", "trh", "charge_radius", "refresh_radius"},
    "search": {"kind", "horizon_ticks", "horizon_ns", "rows", "quantum_ticks", "samples", "seed"},
}

# short sweep axis names -> (section, key)
AXES = {
    "tmro_ns": ("policy", "tmro_ns"),
    "k": ("attack", "k"),
    "b": ("policy", "frac_bits"),
    "alpha": ("oracle", "alpha"),
    "trh": ("oracle", "trh"),
    "p": ("tracker", "p"),
    "rounds": ("attack", "rounds"),
    "n": ("attack", "n"),
}

ATTACKS = ("rowhammer", "rowpress", "combined", "evasion", "stream", "random", "file")


def parse_number(text: str, key: str, line: Optional[int] = None) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"expected a number, got {text!r}", key=key, line=line) from None


def parse_int(text: str, key: str, line: Optional[int] = None) -> int:
    v = parse_number(text, key, line)
    if v.denominator != 1:
        raise ConfigError(f"expected an integer, got {text!r}", key=key, line=line)
    return int(v)


def parse_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _line_index(text: str) -> dict:
    """(section, key) -> 1-based line number, found by scanning the file."""
    idx = {}
    section = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip().lower()
            idx.setdefault((section, None), n)
            continue
        m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            idx.setdefault((section, m.group(1).strip().lower()), n)
    return idx


@dataclass
class RunPlan:
    """One fully resolved sweep point."""

    name: str
    point: dict
    tp: TimingParams
    bank_rows: int
    schedule: RefreshSchedule
    policy: PolicyConfig
    tracker: TrackerConfig
    cm: ChargeModel
    trh: Fraction
    blast: BlastConfig
    attack: dict
    base_dir: Path

    def timeline(self, seed: int = 0) -> CommandTimeline:
        return build_attack(self.attack, self.tp, self.bank_rows, self.blast, seed, self.base_dir)


@dataclass
class ExperimentConfig:
    sections: dict = field(default_factory=dict)  # section -> {key: str}, insertion ordered
    lines: dict = field(default_factory=dict)
    source: Optional[Path] = None

    # ---- io ------------------------------------------------------------
    @classmethod
    def from_text(cls, text: str, source: Optional[Path] = None) -> "ExperimentConfig":
        lines = _line_index(text)
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        try:
            cp.read_string(text)
        except configparser.DuplicateOptionError as e:
            raise ConfigError(f"duplicate key {e.option!r}", key=e.option, line=e.lineno) from None
        except configparser.Error as e:
            line = getattr(e, "lineno", None)
            raise ConfigError(f"cannot parse config: {e.message.splitlines()[0]}", line=line) from None
        sections = {}
        for sec in cp.sections():
            s = sec.lower()
            if s not in SECTIONS:
                raise ConfigError(f"unknown section [{sec}]", key=s, line=lines.get((s, None)))
            vals = {}
            for k, v in cp.items(sec):
                if s != "sweep" and k not in KEYS[s]:
                    raise ConfigError(f"unknown key in [{s}]", key=k, line=lines.get((s, k)))
                vals[k] = v.strip()
            sections[s] = vals
        cfg = cls(sections, lines, source)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        return cls.from_text(text, path)

    def to_text(self) -> str:
        out = []
        for sec in SECTIONS:
            if sec not in self.sections:
                continue
            out.append(f"[{sec}]")
            for k, v in self.sections[sec].items():
                out.append(f"{k} = {v}")
            out.append("")
        return "\n".join(out)

    def __eq__(self, other) -> bool:
        return isinstance(other, ExperimentConfig) and self.sections == other.sections

    # ---- access --------------------------------------------------------
    def line_of(self, section: str, key: Optional[str] = None) -> Optional[int]:
        return self.lines.get((section, key))

    def get(self, section: str, key: str, default=None) -> Optional[str]:
        return self.sections.get(section, {}).get(key, default)

    def err(self, section: str, key: str, msg: str) -> ConfigError:
        return ConfigError(msg, key=key, line=self.line_of(section, key))

    @property
    def name(self) -> str:
        if self.get("run", "name"):
            return self.get("run", "name")
        return self.source.stem if self.source else "experiment"

    def seeds(self) -> list[int]:
        raw = self.get("run", "seeds", "0")
        try:
            return [int(s) for s in parse_list(raw)]
        except ValueError:
            raise self.err("run", "seeds", f"seeds must be integers, got {raw!r}") from None

    def axes(self) -> list[tuple[str, list[str]]]:
        out = []
        for axis, raw in self.sections.get("sweep", {}).items():
            if axis not in AXES and "." not in axis:
                raise self.err("sweep", axis, "unknown sweep axis")
            if "." in axis:
                sec, key = axis.split(".", 1)
                if sec not in KEYS or key not in KEYS[sec]:
                    raise self.err("sweep", axis, "unknown sweep axis")
            vals = parse_list(raw)
            if not vals:
                raise self.err("sweep", axis, "sweep axis is empty")
            out.append((axis, vals))
        return out

    def with_values(self, overrides: dict) -> "ExperimentConfig":
        secs = {s: dict(v) for s, v in self.sections.items()}
        for axis, val in overrides.items():
            sec, key = AXES.get(axis) or axis.split(".", 1)
            secs.setdefault(sec, {})[key] = val
        return ExperimentConfig(secs, self.lines, self.source)

    def points(self) -> list[RunPlan]:
        axes = self.axes()
        names = [a for a, _ in axes]
        plans = []
        for combo in itertools.product(*[vals for _, vals in axes]):
            point = dict(zip(names, combo))
            plans.append(self.with_values(point)._resolve(point))
        return plans

    def validate(self) -> None:
        self.seeds()
        for plan in self.points():
            check_attack(plan)

    def search_budget(self, tp: TimingParams) -> tuple[str, SearchBudget]:
        kind = self.get("search", "kind", "exhaustive")
        if kind not in SEARCH_KINDS:
            raise self.err("search", "kind", f"unknown search kind {kind!r}")
        horizon = self._ticks("search", "horizon", tp, 64 * tp.tRC)
        rows = self._int("search", "rows", 8)
        q = self._int("search", "quantum_ticks", tp.tPRE)
        return kind, SearchBudget(horizon, rows, q, self._int("search", "samples", 200),
                                  self._int("search", "seed", 0))

    # ---- typed helpers ---------------------------------------------------
    def _num(self, sec, key, default=None) -> Optional[Fraction]:
        raw = self.get(sec, key)
        if raw is None:
            return None if default is None else Fraction(default)
        return parse_number(raw, key, self.line_of(sec, key))

    def _int(self, sec, key, default=None) -> Optional[int]:
        raw = self.get(sec, key)
        if raw is None:
            return default
        return parse_int(raw, key, self.line_of(sec, key))

    def _ticks(self, sec, base, tp, default=None) -> Optional[int]:
        if self.get(sec, base + "_ticks") is not None:
            return self._int(sec, base + "_ticks")
        if self.get(sec, base + "_ns") is not None:
            key = base + "_ns"
            try:
                return ns_to_ticks(self._num(sec, key), tp.ticks_per_ns, key)
            except ConfigError as e:
                raise self.err(sec, key, str(e)) from None
        return default

    def _choice(self, sec, key, choices, default=None) -> str:
        v = self.get(sec, key, default)
        if v is None:
            raise self.err(sec, key, f"missing required key '{key}' in [{sec}]")
        if v not in choices:
            raise self.err(sec, key, f"expected one of {', '.join(choices)}, got {v!r}")
        return v

    def timing(self) -> TimingParams:
        tp = default_timing()
        prof = self.get("timing", "profile", "ddr5")
        if prof != "ddr5":
            raise self.err("timing", "profile", f"unknown timing profile {prof!r}")
        over = {}
        names = {"tras": "tRAS", "tpre": "tPRE", "trc": "tRC", "trefi": "tREFI",
                 "tonmax": "tONMax", "trfm": "tRFM", "trfc": "tRFC"}
        for k, v in self.sections.get("timing", {}).items():
            if k.endswith("_ns"):
                over[names[k[:-3]]] = self._num("timing", k)
        if not over:
            return tp
        try:
            return tp.with_ns(**over)
        except ConfigError as e:
            raise self.err("timing", (e.key or "").lower() + "_ns", str(e)) from None

    def _resolve(self, point: dict) -> RunPlan:
        try:
            return self._resolve_inner(point)
        except ConfigError:
            raise
        except PresslabError as e:
            raise ConfigError(str(e)) from None

    def _resolve_inner(self, point: dict) -> RunPlan:
        tp = self.timing()
        rows = self._int("bank", "rows", 1024)
        if rows < 3:
            raise self.err("bank", "rows", "bank needs at least 3 rows")
        try:
            schedule = RefreshSchedule.for_bank(
                rows, self._int("bank", "refresh_groups", 16), self._int("bank", "postponed_refs", 4)
            )
        except ConfigError as e:
            raise self.err("bank", e.key or "refresh_groups", str(e)) from None

        try:
            alpha = self._num("oracle", "alpha")
            if alpha is None:
                raise self.err("oracle", "alpha", "missing required key 'alpha' in [oracle]")
            cm = ChargeModel(alpha)
        except ConfigError as e:
            if e.line is None:
                raise self.err("oracle", "alpha", str(e)) from None
            raise
        trh = self._num("oracle", "trh")
        if trh is None or trh <= 0:
            raise self.err("oracle", "trh", "trh must be a positive number")
        blast = BlastConfig(self._int("oracle", "charge_radius", 1), self._int("oracle", "refresh_radius", 2))

        kind = self._choice("policy", "policy", POLICY_KINDS)
        tmro = self._ticks("policy", "tmro", tp)
        b = self._int("policy", "frac_bits", 7)
        assumed = self._num("policy", "alpha_assumed")
        if assumed is None:
            assumed = cm.alpha
        if kind == "express" and tmro is None:
            raise self.err("policy", "tmro_ns", "express needs tmro_ns")
        if tmro is not None and tmro < tp.tRAS:
            raise self.err("policy", "tmro_ns", f"tMRO {tmro} ticks is below tRAS")
        if not 0 <= b <= 7:
            raise self.err("policy", "frac_bits", "frac_bits must be in [0, 7]")
        policy = PolicyConfig(kind, tmro, b, assumed)

        tracker = self._tracker(policy, trh, tp)
        if kind == "express" and tracker.in_dram:
            raise self.err("tracker", "kind", "ExPress needs a memory-controller tracker (graphene or para)")

        attack = dict(self.sections.get("attack", {}))
        if "attack" not in attack:
            raise self.err("attack", "attack", "missing required key 'attack' in [attack]")
        base = self.source.parent if self.source else Path(".")
        return RunPlan(self.name, point, tp, rows, schedule, policy, tracker, cm, trh, blast,
                       {"_cfg": self, **attack}, base)

    def _target(self, policy: PolicyConfig, trh: Fraction, tp: TimingParams) -> Fraction:
        size_for = self._choice("tracker", "size_for", ("trh", "tstar"), "trh")
        if size_for == "trh":
            return trh
        if policy.kind == "impress_n":
            return trh / (1 + policy.alpha_assumed)
        if policy.kind == "express":
            return express_effective_threshold(trh, policy.tmro, policy.alpha_assumed, tp)
        return trh

    def _tracker(self, policy: PolicyConfig, trh: Fraction, tp: TimingParams) -> TrackerConfig:
        kind = self._choice("tracker", "kind", TRACKER_KINDS)
        preset = self._choice("tracker", "threshold_preset", THRESHOLD_PRESETS, "third")
        target = self._target(policy, trh, tp)
        rfmth = self._int("tracker", "rfmth", 80)
        fb = self._int("tracker", "frac_bits", policy.frac_bits)
        if fb != policy.frac_bits:
            raise self.err("tracker", "frac_bits", "tracker frac_bits must match the policy's")
        epoch = self._ticks("tracker", "epoch", tp)
        seed = self._int("tracker", "seed", 0)
        entries = thr = p = None

        def auto(key):
            return self.get("tracker", key, "auto") == "auto"

        try:
            if kind in ("graphene", "mithril") and auto("entries"):
                sized = size_tracker(kind, trh, policy.alpha_assumed, rfmth, policy.kind, preset)
                entries = sized.entries
            elif kind in ("graphene", "mithril"):
                entries = self._int("tracker", "entries")
            if kind == "graphene":
                if auto("internal_threshold"):
                    thr = graphene_internal_threshold(target, preset)
                else:
                    thr = self._num("tracker", "internal_threshold")
            if kind == "para":
                if auto("p"):
                    fam = self._choice("tracker", "para_family", ("methodology", "slowdown_model"), "methodology")
                    p = size_tracker("para", trh, policy.alpha_assumed, rfmth, policy.kind,
                                     para_family=fam).p
                else:
                    p = self._num("tracker", "p")
            return TrackerConfig(kind, entries=entries, internal_threshold=thr, p=p, rfmth=rfmth,
                                 frac_bits=fb, seed=seed, epoch_len=epoch)
        except ConfigError as e:
            if e.line is None and e.key is not None:
                raise self.err("tracker", e.key, str(e).split(": ", 1)[-1]) from None
            raise
        except PresslabError as e:
            raise self.err("tracker", "kind", str(e)) from None


def check_attack(plan: RunPlan) -> None:
    """Resolve the attack parameters without building a long timeline."""
    a = plan.attack
    cfg: ExperimentConfig = a["_cfg"]
    kind = cfg._choice("attack", "attack", ATTACKS)
    if kind == "file":
        if "path" not in a:
            raise cfg.err("attack", "attack", "attack = file needs 'path'")
        return
    needed = {
        "rowhammer": ("n",), "rowpress": ("rounds",), "combined": ("k", "n"),
        "evasion": ("rounds",), "stream": (), "random": (),
    }[kind]
    for key in needed:
        if key not in a:
            raise cfg.err("attack", "attack", f"attack = {kind} needs '{key}'")
    for key in ("aggressor", "decoy", "rounds", "n", "k", "lines_per_row", "rows"):
        if key in a:
            cfg._int("attack", key)
    if kind == "rowpress" and cfg._ticks("attack", "ton", plan.tp) is None:
        raise cfg.err("attack", "attack", "attack = rowpress needs 'ton_ns' or 'ton_ticks'")


def build_attack(a: dict, tp: TimingParams, bank_rows: int, blast: BlastConfig, seed: int, base_dir: Path):
    cfg: ExperimentConfig = a["_cfg"]
    kind = cfg._choice("attack", "attack", ATTACKS)
    aggr = cfg._int("attack", "aggressor", bank_rows // 2)
    try:
        if kind == "rowhammer":
            return gen_rowhammer(aggr, cfg._int("attack", "n"), tp, bank_rows)
        if kind == "rowpress":
            return gen_rowpress(aggr, cfg._ticks("attack", "ton", tp), cfg._int("attack", "rounds"), tp, bank_rows)
        if kind == "combined":
            loop = AttackLoop(cfg._int("attack", "k"), cfg._int("attack", "n"), aggr)
            return gen_combined_loop(loop, tp, bank_rows)
        if kind == "evasion":
            return gen_impressn_evasion(aggr, cfg._int("attack", "decoy"), cfg._int("attack", "rounds"),
                                        tp, bank_rows, blast)
        if kind == "stream":
            w = StreamWorkload(cfg._int("attack", "lines_per_row", 8),
                               cfg._ticks("attack", "access_interval", tp, 32),
                               cfg.get("attack", "order", "sequential"))
            return gen_stream(w, cfg._ticks("attack", "duration", tp, 1000 * tp.tRC), tp, bank_rows, seed)
        if kind == "random":
            cons = RandomConstraints(cfg._ticks("attack", "horizon", tp, 64 * tp.tRC),
                                     rows=cfg._int("attack", "rows", bank_rows),
                                     max_ton=cfg._int("attack", "max_ton_ticks"))
            return gen_random_legal(seed, cons, tp)
        path = Path(a["path"])
        if not path.is_absolute():
            path = base_dir / path
        try:
            return parse_timeline(path.read_text())
        except FileNotFoundError:
            raise cfg.err("attack", "path", f"timeline file {path} not found") from None
    except ConfigError:
        raise
    except PresslabError as e:
        raise cfg.err("attack", "attack", str(e)) from None


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.load(path)
