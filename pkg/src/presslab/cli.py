"""``presslab`` command-line tool.

Exit codes: 0 success, 1 reproduction failure, 2 bad input (config, CSV,
timeline), 3 a bit flip was observed while ``--assert-no-flip`` was set.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ExperimentConfig, check_attack
from .errors import ConfigError, PresslabError
from .experiments import ANALYTIC_KINDS, ANALYTIC_PLOTS, analytic_table, run_config
from .report import ReportTable

EXIT_OK, EXIT_REPRO, EXIT_INPUT, EXIT_FLIP = 0, 1, 2, 3


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _simulate(args, with_plot: bool) -> int:
    cfg = ExperimentConfig.load(args.config)
    for plan in cfg.points():
        check_attack(plan)
    out = _out_dir(args)
    if args.emit_timeline:
        Path(args.emit_timeline).parent.mkdir(parents=True, exist_ok=True)
    table, reports = run_config(cfg, seed_base=args.seed_base, jobs=args.jobs,
                                emit_timeline=args.emit_timeline)
    csv_path = table.write(out / "results.csv")
    print(f"wrote {csv_path} ({len(table.rows)} rows)")
    if with_plot:
        from .plotting import plot_table

        axes = [a for a, _ in cfg.axes()]
        x = args.x or (axes[0] if axes else "seed")
        series = args.series or (axes[1] if len(axes) > 1 else None)
        svg = plot_table(table, x, args.y, out / "results.svg", series=series, title=cfg.name)
        print(f"wrote {svg}")
    flips = sum(len(r.flips) for r in reports)
    if args.assert_no_flip and flips:
        print(f"bit flips observed: {flips}", file=sys.stderr)
        return EXIT_FLIP
    return EXIT_OK


def cmd_simulate(args) -> int:
    return _simulate(args, with_plot=False)


def cmd_sweep(args) -> int:
    return _simulate(args, with_plot=True)


def cmd_adversary(args) -> int:
    from .search import amplification_search

    cfg = ExperimentConfig.load(args.config)
    out = _out_dir(args)
    axes = [a for a, _ in cfg.axes()]
    table = ReportTable("adversary", axes + ["policy", "alpha", "frac_bits", "search_kind", "A", "victim",
                                             "witness"])
    text = []
    for i, plan in enumerate(cfg.points()):
        kind, budget = cfg.with_values(plan.point).search_budget(plan.tp)
        res = amplification_search(plan.policy, plan.cm, plan.tp, budget, kind=kind)
        wpath = out / f"witness_{i:03d}.txt"
        wpath.write_text(res.witness.to_text())
        row = dict(plan.point)
        row.update({"policy": plan.policy.kind, "alpha": plan.cm.alpha, "frac_bits": plan.policy.frac_bits,
                    "search_kind": res.search_kind, "A": res.A, "victim": res.victim, "witness": wpath.name})
        table.add(row)
        head = "".join(f"{k} = {v}\n" for k, v in plan.point.items())
        text.append(f"[point {i}]\n{head}policy = {plan.policy.kind}\n{res.describe()}witness = {wpath.name}\n")
    (out / "adversary.txt").write_text("\n".join(text))
    table.write(out / "adversary.csv")
    sys.stdout.write("\n".join(text))
    return EXIT_OK


def cmd_analytic(args) -> int:
    params = {k: getattr(args, k) for k in ("b", "T", "K", "p", "trh", "A", "tmro_ns", "alpha")}
    table = analytic_table(args.kind, params)
    if args.out:
        path = table.write(args.out)
        from .plotting import plot_table

        x, y, series = ANALYTIC_PLOTS[args.kind]
        svg = plot_table(table, x, y, path.with_suffix(".svg"), series=series, title=args.kind)
        print(f"wrote {path} and {svg}", file=sys.stderr)
    sys.stdout.write(table.to_csv())
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot_table

    table = ReportTable.read(args.csv)
    out = Path(args.out) if args.out else Path(args.csv).with_suffix(".svg")
    plot_table(table, args.x, args.y, out, series=args.series, title=args.title,
               xlabel=args.xlabel, ylabel=args.ylabel)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    if args.timeline:
        from .timing import default_timing, parse_timeline, validate_timeline

        tl = parse_timeline(Path(args.timeline).read_text())
        # attacker streams carry no REFs; the engine merges its own
        allowed = None if args.attacker_stream else 4
        res = validate_timeline(tl, default_timing(), postponed_refs_allowed=allowed)
        print(res)
        return EXIT_OK if res else EXIT_INPUT
    if not args.config:
        raise ConfigError("validate needs --config or --timeline")
    cfg = ExperimentConfig.load(args.config)
    plans = cfg.points()
    for plan in plans:
        check_attack(plan)
    print(f"{args.config}: ok ({len(plans)} sweep points x {len(cfg.seeds())} seeds)")
    return EXIT_OK


def cmd_repro(args) -> int:
    from .repro import run_all_repro

    numbers = None if args.all or not args.criterion else args.criterion
    results = run_all_repro(numbers, preset_dir=args.presets, out_dir=args.out, echo=print)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed"
          + (f"; failed: {', '.join(map(str, failed))}" if failed else ""))
    return EXIT_REPRO if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="presslab", description="Row-open-time aware Rowhammer mitigation lab")
    sub = ap.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--config", required=True)
        p.add_argument("--out", help="output directory (default: current directory)")
        p.add_argument("--seed-base", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--assert-no-flip", action="store_true")
        p.add_argument("--emit-timeline", help="write the first run's attacker timeline here")

    p = sub.add_parser("simulate", help="run a config and write results.csv")
    run_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="simulate and also render results.svg")
    run_flags(p)
    p.add_argument("--x")
    p.add_argument("--y", default="peak_charge")
    p.add_argument("--series")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("adversary", help="amplification search per sweep point")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_adversary)

    p = sub.add_parser("analytic", help="closed-form tables as CSV on stdout")
    p.add_argument("kind", choices=ANALYTIC_KINDS)
    for flag in ("b", "T", "K", "p", "trh", "A", "tmro_ns", "alpha"):
        p.add_argument(f"--{flag}")
    p.add_argument("--out", help="also write CSV (and an SVG next to it)")
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("plot", help="render a results CSV to SVG")
    p.add_argument("csv")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--series")
    p.add_argument("--title")
    p.add_argument("--xlabel")
    p.add_argument("--ylabel")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("validate", help="check a config or a timeline file")
    p.add_argument("--config")
    p.add_argument("--timeline")
    p.add_argument("--attacker-stream", action="store_true",
                   help="timeline will be merged with refresh, skip the REF cadence rule")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("repro", help="run the acceptance reproduction scripts")
    p.add_argument("--all", action="store_true")
    p.add_argument("--criterion", type=int, action="append")
    p.add_argument("--out", help="write one CSV per criterion here")
    p.add_argument("--presets", help="directory holding the preset configs")
    p.set_defaults(func=cmd_repro)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PresslabError, OSError) as e:
        print(f"presslab {args.command}: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
