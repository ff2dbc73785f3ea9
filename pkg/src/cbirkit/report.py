"""Result serialization: report JSON, curve CSVs, summary figures, tables.

The JSON report deliberately excludes wall-clock time so re-running the
same configuration on the same inputs reproduces the file byte-for-byte.
Figures are rendered with the Agg backend straight to disk.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Mapping, Sequence

from .evaluate import EvalReport


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def report_to_dict(report: EvalReport) -> dict:
    return {
        "config": report.config,
        "map": report.map,
        "map_11pt": report.map_11pt,
        "er": report.er,
        "per_class_map": report.per_class_map,
        "mean_pr": report.mean_pr,
        "er_curve": report.er_curve,
        "per_query_ap": report.per_query_ap,
    }


def write_report_json(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_report(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_pr_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["recall", "precision"])
        for recall, precision in report.mean_pr:
            writer.writerow([f"{recall:.2f}", f"{precision:.6f}"])


def write_er_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "er"])
        for rank, er in report.er_curve:
            writer.writerow([rank, f"{er:.6f}"])


def config_tag(config: Mapping) -> str:
    split = config.get("split", "?")
    if split == "holdout":
        split = f"holdout:{config.get('test_per_class', '?')}"
    return "|".join(
        [
            str(config.get("pipeline", "identity")),
            str(config.get("metric", "?")),
            split,
            f"seed{config.get('seed', 0)}",
        ]
    )


def flat_line(report: EvalReport) -> str:
    """One comma-delimited line per run, for pasting into result tables."""
    return f"config={config_tag(report.config)},map={report.map:.6f},er={report.er:.6f}"


def render_pr_figure(series: Mapping[str, Sequence], path, title: str = "Precision vs recall") -> None:
    """series maps a legend label to [(recall, precision), ...]."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for label, points in series.items():
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        ax.plot(xs, ys, marker="o", markersize=3, label=label)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_title(title)
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    if series:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_er_figure(series: Mapping[str, Sequence], path, title: str = "Error rate vs rank") -> None:
    """series maps a legend label to [(rank, er), ...]."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for label, points in series.items():
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        ax.plot(xs, ys, label=label)
    ax.set_xlabel("number of retrieved images")
    ax.set_ylabel("error rate")
    ax.set_title(title)
    ax.set_ylim(0.0, 1.0)
    ax.grid(True, alpha=0.3)
    if series:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_sweep_figure(rows: Sequence[Mapping], path, x_key: str = "size", y_key: str = "map") -> None:
    """One line per (cl, metric) pair across dictionary sizes."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    groups: dict = {}
    for row in rows:
        label = f"{row.get('cl', '?')}/{row.get('metric', '?')}"
        groups.setdefault(label, []).append((row[x_key], row[y_key]))
    for label, points in sorted(groups.items()):
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", markersize=3, label=label)
    ax.set_xlabel("dictionary size")
    ax.set_ylabel(y_key)
    ax.grid(True, alpha=0.3)
    if groups:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_map_bars(rows: Sequence[Mapping], path) -> None:
    """Horizontal MAP bars, one per aggregated run."""
    plt = _plt()
    labels = [f"{r.get('pipeline', '?')} | {r.get('metric', '?')} | {r.get('split', '?')}" for r in rows]
    values = [r["map"] for r in rows]
    fig, ax = plt.subplots(figsize=(7, max(2.0, 0.35 * len(rows) + 1.2)))
    ypos = range(len(rows))
    ax.barh(list(ypos), values)
    ax.set_yticks(list(ypos))
    ax.set_yticklabels(labels, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel("MAP")
    ax.set_xlim(0.0, 1.0)
    ax.grid(True, axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_eval_outputs(report: EvalReport, out_dir, figures: bool = True, basename: str = "report") -> dict:
    """Write the full evaluate bundle; returns {kind: path}."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out_dir / f"{basename}.json",
        "pr_csv": out_dir / "pr_curve.csv",
        "er_csv": out_dir / "er_curve.csv",
    }
    write_report_json(report, paths["report"])
    write_pr_csv(report, paths["pr_csv"])
    write_er_csv(report, paths["er_csv"])
    if figures:
        tag = config_tag(report.config)
        paths["pr_png"] = out_dir / "pr_curve.png"
        paths["er_png"] = out_dir / "er_curve.png"
        render_pr_figure({tag: report.mean_pr}, paths["pr_png"])
        render_er_figure({tag: report.er_curve}, paths["er_png"])
    return paths


def aggregate_runs(report_paths: Sequence) -> list:
    """Flatten many report JSONs into sortable table rows."""
    rows = []
    for path in report_paths:
        data = load_report(path)
        config = data.get("config", {})
        rows.append(
            {
                "pipeline": config.get("pipeline", "identity"),
                "metric": config.get("metric", "?"),
                "split": config.get("split", "?"),
                "seed": config.get("seed", 0),
                "map": data["map"],
                "map_11pt": data.get("map_11pt", float("nan")),
                "er": data["er"],
                "source": str(path),
            }
        )
    rows.sort(key=lambda r: (r["metric"], r["pipeline"], r["split"], r["seed"]))
    return rows


def write_rows_csv(rows: Sequence[Mapping], path, columns: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in columns})


def format_table(rows: Sequence[Mapping], columns: Sequence[str]) -> str:
    """Monospace table for terminal output."""
    cells = [[str(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) if cells else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines)
