"""Byte-stable SVG figures from report tables."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import SchemaError  # noqa: E402
from .report import ReportTable  # noqa: E402

_STABLE_RC = {
    "svg.hashsalt": "presslab",
    "svg.fonttype": "none",
    "path.simplify": False,
}


def _as_float(v):
    try:
        return float(v)
    except (TypeError, ValueError):
        return None


def plot_table(
    table: ReportTable,
    x: str,
    y: str,
    out_path,
    series: Optional[str] = None,
    title: Optional[str] = None,
    xlabel: Optional[str] = None,
    ylabel: Optional[str] = None,
) -> Path:
    """Line plot of ``y`` against ``x`` (one line per ``series`` value).

    Non-numeric x values fall back to a grouped bar chart.
    """
    xs, ys = table.column(x), table.column(y)
    groups = table.column(series) if series else ["" for _ in xs]
    yv = [_as_float(v) for v in ys]
    if any(v is None for v in yv):
        raise SchemaError(f"column {y!r} is not numeric")
    numeric_x = all(_as_float(v) is not None for v in xs)

    order = []
    for g in groups:
        if g not in order:
            order.append(g)
    with plt.rc_context(_STABLE_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        if numeric_x:
            for g in order:
                pts = sorted((float(a), b) for a, b, gg in zip(xs, yv, groups) if gg == g)
                label = f"{series}={g}" if series else None
                ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=label)
        else:
            cats = []
            for v in xs:
                if v not in cats:
                    cats.append(v)
            width = 0.8 / max(1, len(order))
            for i, g in enumerate(order):
                vals = {a: b for a, b, gg in zip(xs, yv, groups) if gg == g}
                pos = [j + i * width for j in range(len(cats))]
                ax.bar(pos, [vals.get(c, 0.0) for c in cats], width,
                       label=f"{series}={g}" if series else None)
            ax.set_xticks([j + width * (len(order) - 1) / 2 for j in range(len(cats))])
            ax.set_xticklabels(cats)
        ax.set_xlabel(xlabel or x)
        ax.set_ylabel(ylabel or y)
        if title:
            ax.set_title(title)
        if series:
            ax.legend()
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out_path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return out_path
