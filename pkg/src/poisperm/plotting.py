"""SVG figures from harness CSV output."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import BIAS_HEADER, RESULTS_HEADER, smooth_rates  # noqa: E402

# deterministic, text-searchable SVG output
_RC = {"svg.fonttype": "none", "svg.hashsalt": "poisperm", "path.simplify": False}


class SchemaError(ValueError):
    pass


def load_table(path: str | Path) -> tuple[str, list[dict[str, str]]]:
    """Read a harness CSV; returns ``("results" | "bias", rows)``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        rows = list(reader)
    if header == RESULTS_HEADER:
        kind = "results"
    elif header == BIAS_HEADER:
        kind = "bias"
    else:
        raise SchemaError(f"{path}: header {header} matches neither the results nor the bias schema")
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    try:
        for row in rows:
            if kind == "results":
                for key in ("n", "K", "rejections"):
                    int(row[key])
                for key in ("rate", "ci_lo", "ci_hi"):
                    float(row[key])
            else:
                int(row["n"])
                float(row["bias"])
    except (TypeError, ValueError):
        raise SchemaError(f"{path}: malformed numeric field") from None
    return kind, rows


def band_edges(rows) -> list[tuple[float, float]]:
    return sorted({(float(r["ci_lo"]), float(r["ci_hi"])) for r in rows})


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_type1(rows, path, window: int = 5) -> None:
    groups: dict[tuple[str, str], dict[str, list[tuple[float, float]]]] = defaultdict(
        lambda: defaultdict(list)
    )
    for r in rows:
        groups[(r["scenario"], r["kind_params"])][r["method"]].append(
            (math.log10(int(r["n"])), float(r["rate"]))
        )
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(8, 5))
        for lo, hi in band_edges(rows):
            ax.axhspan(lo, hi, color="0.85", zorder=0, gid="ci-band")
            for edge in (lo, hi):
                ax.annotate(f"{edge:.4f}", xy=(1.0, edge), xycoords=("axes fraction", "data"),
                            xytext=(3, 0), textcoords="offset points", va="center", fontsize=8)
        colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
        for ci, ((scenario, params), methods) in enumerate(sorted(groups.items())):
            color = colors[ci % len(colors)]
            label = f"{scenario} ({params})"
            for method, pts in sorted(methods.items()):
                marker, style = ("o", "-") if method == "wald" else ("x", "--")
                xs, ys = zip(*sorted(pts))
                ax.scatter(xs, ys, marker=marker, color=color, facecolors="none" if marker == "o" else color,
                           s=18, label=f"{label}, {method}")
                w = min(window, len(pts) if len(pts) % 2 else len(pts) - 1)
                sx, sy = zip(*smooth_rates(pts, max(1, w)))
                ax.plot(sx, sy, linestyle=style, color=color, linewidth=1.2)
        ax.axhline(0.05, color="0.4", linewidth=0.6, linestyle=":")
        ax.set_xlabel("log10(sample size)")
        ax.set_ylabel("Type I error rate")
        ax.legend(fontsize=7, loc="upper left")
        fig.tight_layout()
        _save(fig, path)


def plot_bias(rows, path) -> None:
    by_n: dict[int, list[float]] = defaultdict(list)
    for r in rows:
        by_n[int(r["n"])].append(float(r["bias"]))
    sizes = sorted(by_n)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 0.45 * len(sizes) + 1.5))
        ax.boxplot([by_n[n] for n in sizes], orientation="horizontal", tick_labels=[str(n) for n in sizes],
                   flierprops={"markersize": 2})
        ax.axvline(0.0, color="red", linestyle="--", linewidth=1)
        ax.set_xlabel("bias of estimated rate")
        ax.set_ylabel("sample size")
        fig.tight_layout()
        _save(fig, path)


def plot_file(csv_path, svg_path) -> str:
    """Render ``csv_path`` to ``svg_path``; returns the detected schema name."""
    kind, rows = load_table(csv_path)
    if kind == "results":
        plot_type1(rows, svg_path)
    else:
        plot_bias(rows, svg_path)
    return kind
