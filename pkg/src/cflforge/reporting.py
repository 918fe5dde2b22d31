"""Result persistence and presentation.

The run path writes per-seed JSON reports, two delimited CSV files (the full
accuracy matrix and the metric series) and matplotlib PNG curves next to them.
The plot command renders standalone SVG line charts (one polyline per method,
seed-averaged, with a min/max band), and compare tabulates final-task metrics
against a baseline method.
"""

from __future__ import annotations

import json
import os
from typing import Dict, List
from xml.sax.saxutils import escape

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


class ReportError(ValueError):
    """A report file is malformed or reports are not comparable."""


def _fmt(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".12g")


def _column_agg(series: np.ndarray, fn) -> np.ndarray:
    """Apply fn per column over finite entries; all-NaN columns stay NaN."""
    out = np.full(series.shape[1], np.nan)
    for j in range(series.shape[1]):
        col = series[:, j]
        col = col[np.isfinite(col)]
        if col.size:
            out[j] = fn(col)
    return out


def write_csvs(reports: List[dict], out_dir: str) -> dict:
    """Write the accuracy-matrix and metric-series CSVs; returns the paths.

    Filenames carry the method name so runs of different methods can share an
    output directory without clobbering each other.
    """
    os.makedirs(out_dir, exist_ok=True)
    name = reports[0]["name"]
    matrix_path = os.path.join(out_dir, f"accuracy_matrix_{name}.csv")
    metrics_path = os.path.join(out_dir, f"metrics_{name}.csv")
    with open(matrix_path, "w", encoding="utf-8", newline="\n") as f:
        f.write("seed,after_task,task,accuracy\n")
        for rep in reports:
            for t, row in enumerate(rep["accuracy_matrix"]):
                for i, a in enumerate(row):
                    f.write(f"{rep['seed']},{t},{i},{_fmt(a)}\n")
    with open(metrics_path, "w", encoding="utf-8", newline="\n") as f:
        f.write("seed,after_task,avg_accuracy,avg_forgetting\n")
        for rep in reports:
            for t, (acc, fgt) in enumerate(zip(rep["avg_accuracy"], rep["avg_forgetting"])):
                f.write(f"{rep['seed']},{t},{_fmt(acc)},{_fmt(fgt)}\n")
    return {"accuracy_matrix": matrix_path, "metrics": metrics_path}


def write_reports(reports: List[dict], out_dir: str) -> List[str]:
    """One JSON report per seed; private keys are stripped."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for rep in reports:
        clean = {k: v for k, v in rep.items() if not k.startswith("_")}
        path = os.path.join(out_dir, f"report_{rep['name']}_seed{rep['seed']}.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump(clean, f, indent=2, sort_keys=True)
            f.write("\n")
        paths.append(path)
    return paths


def save_model_file(report: dict, out_dir: str) -> str:
    spec = report["_model_spec"]
    path = os.path.join(out_dir, f"model_{report['name']}_seed{report['seed']}.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(
            {
                "layer_sizes": list(spec.layer_sizes),
                "activation": spec.activation,
                "params": [float(v) for v in report["_final_params"]],
            },
            f,
        )
        f.write("\n")
    return path


def load_report(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            rep = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ReportError(f"cannot read report {path}: {exc}") from exc
    for key in ("name", "scenario", "seed", "avg_accuracy", "avg_forgetting"):
        if key not in rep:
            raise ReportError(f"report {path} lacks key {key!r}")
    return rep


def _group_by_method(reports: List[dict]) -> Dict[str, List[dict]]:
    scenarios = {rep["scenario"] for rep in reports}
    if len(scenarios) > 1:
        raise ReportError(f"reports span multiple scenarios: {sorted(scenarios)}")
    groups: Dict[str, List[dict]] = {}
    for rep in reports:
        groups.setdefault(rep["name"], []).append(rep)
    return groups


def render_figures(reports: List[dict], out_dir: str) -> List[str]:
    """Matplotlib PNG curves for the run output directory."""
    os.makedirs(out_dir, exist_ok=True)
    groups = _group_by_method(reports)
    tag = reports[0]["name"]
    paths = []
    for metric, fname, label in (
        ("avg_accuracy", f"accuracy_curve_{tag}.png", "average accuracy (%)"),
        ("avg_forgetting", f"forgetting_curve_{tag}.png", "average forgetting (%)"),
    ):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for name in sorted(groups):
            series = np.array(
                [[np.nan if v is None else v for v in rep[metric]] for rep in groups[name]],
                dtype=np.float64,
            )
            xs = np.arange(1, series.shape[1] + 1)
            mean = _column_agg(series, np.mean)
            ax.plot(xs, mean, marker="o", label=name)
            if series.shape[0] > 1:
                ax.fill_between(
                    xs,
                    _column_agg(series, np.min),
                    _column_agg(series, np.max),
                    alpha=0.2,
                )
        ax.set_xlabel("tasks trained")
        ax.set_ylabel(label)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(out_dir, fname)
        fig.savefig(path)
        plt.close(fig)
        paths.append(path)
    return paths


def _svg_chart(groups: Dict[str, List[dict]], metric: str, title: str) -> str:
    """One SVG line chart: a polyline per method plus a min/max band."""
    width, height = 640, 400
    ml, mr, mt, mb = 60, 150, 40, 50
    plot_w, plot_h = width - ml - mr, height - mt - mb

    per_method = {}
    n_tasks = 0
    for name, reps in groups.items():
        series = np.array(
            [[np.nan if v is None else float(v) for v in rep[metric]] for rep in reps]
        )
        per_method[name] = series
        n_tasks = max(n_tasks, series.shape[1])
    finite = np.concatenate([s[np.isfinite(s)] for s in per_method.values()])
    lo = float(finite.min()) if finite.size else 0.0
    hi = float(finite.max()) if finite.size else 1.0
    if hi == lo:
        hi = lo + 1.0

    def sx(t):
        return ml + plot_w * (t / max(1, n_tasks - 1))

    def sy(v):
        return mt + plot_h * (1.0 - (v - lo) / (hi - lo))

    palette = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<text x="{ml}" y="20" font-size="14">{escape(title)}</text>',
        f'<line x1="{ml}" y1="{mt + plot_h}" x2="{ml + plot_w}" y2="{mt + plot_h}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + plot_h}" stroke="black"/>',
        f'<text x="{ml}" y="{height - 16}" font-size="11">tasks trained (1..{n_tasks})</text>',
        f'<text x="8" y="{mt + 4}" font-size="11">{_fmt(hi)}</text>',
        f'<text x="8" y="{mt + plot_h}" font-size="11">{_fmt(lo)}</text>',
    ]
    for idx, name in enumerate(sorted(per_method)):
        series = per_method[name]
        color = palette[idx % len(palette)]
        mean = _column_agg(series, np.mean)
        valid = np.isfinite(mean)
        ts = np.flatnonzero(valid)
        if series.shape[0] > 1 and len(ts):
            top = _column_agg(series, np.max)[ts]
            bot = _column_agg(series, np.min)[ts]
            ring = [f"{_fmt(sx(t))},{_fmt(sy(v))}" for t, v in zip(ts, top)]
            ring += [f"{_fmt(sx(t))},{_fmt(sy(v))}" for t, v in zip(ts[::-1], bot[::-1])]
            parts.append(
                f'<polygon points="{" ".join(ring)}" fill="{color}" opacity="0.15" stroke="none"/>'
            )
        pts = " ".join(f"{_fmt(sx(t))},{_fmt(sy(mean[t]))}" for t in ts)
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        ly = mt + 16 * idx
        parts.append(
            f'<rect x="{ml + plot_w + 10}" y="{ly}" width="12" height="12" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{ml + plot_w + 26}" y="{ly + 10}" font-size="11">{escape(name)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plots(report_paths: List[str], out_dir: str) -> List[str]:
    """Render accuracy and forgetting SVG charts from saved reports."""
    if not report_paths:
        raise ReportError("need at least one report to plot")
    reports = [load_report(p) for p in report_paths]
    groups = _group_by_method(reports)
    os.makedirs(out_dir, exist_ok=True)
    out = []
    for metric, fname, title in (
        ("avg_accuracy", "accuracy_vs_tasks.svg", "Average accuracy (%) vs tasks trained"),
        ("avg_forgetting", "forgetting_vs_tasks.svg", "Average forgetting (%) vs tasks trained"),
    ):
        path = os.path.join(out_dir, fname)
        with open(path, "w", encoding="utf-8") as f:
            f.write(_svg_chart(groups, metric, title))
        out.append(path)
    return out


def compare_runs(report_paths: List[str], baseline: str, csv_path=None) -> str:
    """Per-method mean/std of final accuracy and forgetting, with baseline deltas.

    Returns the CSV text (also written to csv_path when given). Rows are sorted
    by method name for stable ordering.
    """
    if not report_paths:
        raise ReportError("need at least one report to compare")
    reports = [load_report(p) for p in report_paths]
    groups = _group_by_method(reports)
    if baseline not in groups:
        raise ReportError(f"baseline method {baseline!r} not among {sorted(groups)}")

    def stats(reps, metric):
        vals = [rep[metric][-1] for rep in reps]
        arr = np.array([np.nan if v is None else float(v) for v in vals])
        finite = arr[np.isfinite(arr)]
        if not finite.size:
            return float("nan"), float("nan")
        return float(finite.mean()), float(finite.std())

    base_acc, _ = stats(groups[baseline], "avg_accuracy")
    base_fgt, _ = stats(groups[baseline], "avg_forgetting")
    lines = ["method,seeds,acc_mean,acc_std,fgt_mean,fgt_std,acc_delta,fgt_delta"]
    for name in sorted(groups):
        am, asd = stats(groups[name], "avg_accuracy")
        fm, fsd = stats(groups[name], "avg_forgetting")
        lines.append(
            ",".join(
                [
                    name,
                    str(len(groups[name])),
                    _fmt(am),
                    _fmt(asd),
                    _fmt(fm),
                    _fmt(fsd),
                    _fmt(am - base_acc),
                    _fmt(fm - base_fgt),
                ]
            )
        )
    text = "\n".join(lines) + "\n"
    if csv_path:
        os.makedirs(os.path.dirname(csv_path) or ".", exist_ok=True)
        with open(csv_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    return text
