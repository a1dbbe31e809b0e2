"""Rendering of benchmark reports: box statistics, tables, vector plots.

Every number emitted here is recomputable from the flat trials.csv; the
renderer holds no state of its own.  Quartiles use the median-of-halves
convention (lower/upper halves exclude the middle element for odd counts),
noted in the emitted metadata.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .errors import MalformedReport

QUARTILE_CONVENTION = "median-of-halves"


def box_stats(values) -> dict:
    """Five-number summary with median-of-halves quartiles."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise MalformedReport("no values to summarize")
    half = v.size // 2
    lower = v[:half]
    upper = v[v.size - half:]
    med = float(np.median(v))
    return {
        "min": float(v[0]),
        "q1": float(np.median(lower)) if lower.size else med,
        "median": med,
        "q3": float(np.median(upper)) if upper.size else med,
        "max": float(v[-1]),
    }


def _norm_errors(doc: dict) -> dict[str, list[float]]:
    out: dict[str, list[float]] = {}
    for rec in doc["records"]:
        for res in rec["results"]:
            if res["status"] == "ok" and res["norm_error"] is not None:
                out.setdefault(res["estimator"], []).append(res["norm_error"])
    return out


def box_table(tagged: list[tuple[str, dict]]) -> list[dict]:
    """One row of box statistics per (source label, estimator)."""
    rows = []
    for label, doc in tagged:
        for est, vals in _norm_errors(doc).items():
            row = {"source": label, "estimator": est, "n": len(vals)}
            row.update(box_stats(vals))
            rows.append(row)
    return rows


def write_box_csv(rows: list[dict], path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["source", "estimator", "n", "min", "q1", "median", "q3", "max",
                     "quartile_convention"])
    for r in rows:
        writer.writerow([r["source"], r["estimator"], r["n"], repr(r["min"]), repr(r["q1"]),
                         repr(r["median"]), repr(r["q3"]), repr(r["max"]), QUARTILE_CONVENTION])
    Path(path).write_text(buf.getvalue())


def write_correlation_csv(tagged: list[tuple[str, dict]], path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["source", "estimator_a", "estimator_b", "pearson"])
    for label, doc in tagged:
        corr = doc.get("correlation", {})
        for a, row in corr.items():
            for b, value in row.items():
                writer.writerow([label, a, b, "" if value is None else repr(value)])
    Path(path).write_text(buf.getvalue())


def write_by_source_csv(summary: dict, path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["source", "estimator", "mean_abs_norm_error", "n_trials"])
    for label, ests in summary["by_source"].items():
        for est, cell in ests.items():
            writer.writerow([label, est, repr(cell["mean_abs_norm_error"]), cell["n_trials"]])
    for est, cell in summary["overall"].items():
        writer.writerow(["overall", est, repr(cell["mean_abs_norm_error"]), cell["n_trials"]])
    Path(path).write_text(buf.getvalue())


def render_boxes_svg(rows: list[dict], path: str | Path, title: str = "absolute normalized error") -> None:
    """Self-contained SVG of one box per (source, estimator)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not rows:
        raise MalformedReport("nothing to plot")
    boxes = [{
        "label": f"{r['source']}:{r['estimator']}" if r["source"] else r["estimator"],
        "whislo": r["min"], "q1": r["q1"], "med": r["median"],
        "q3": r["q3"], "whishi": r["max"], "fliers": [],
    } for r in rows]
    fig, ax = plt.subplots(figsize=(max(6.0, 1.1 * len(boxes)), 4.5))
    ax.bxp(boxes, showfliers=False)
    ax.set_ylabel(title)
    ax.tick_params(axis="x", rotation=45)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
