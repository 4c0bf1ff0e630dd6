"""Per-run SVG line plots and the CSV series they are drawn from."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import MissingSeries  # noqa: E402

SERIES_COLUMNS = ["t", "cle_gt", "cle_target", "mean_abs_pert", "iterations", "anchor"]

# fixed ids and no timestamp, so identical data gives identical files
plt.rcParams["svg.hashsalt"] = "advtrack"
_SVG_META = {"Date": None, "Creator": None}


def _records(run) -> list[dict]:
    recs = run["records"] if isinstance(run, dict) else [r.__dict__ for r in run.records]
    if not recs:
        raise MissingSeries("run has no per-frame records")
    return recs


def write_series_csv(run, path: str) -> list[dict]:
    rows = [{k: r.get(k) for k in SERIES_COLUMNS} for r in _records(run)]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, SERIES_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: "" if v is None else repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return rows


def read_series_csv(path: str) -> dict:
    """Columns of a series CSV as lists; empty cells become ``None``."""
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    cols = {}
    for k in SERIES_COLUMNS:
        vals = []
        for r in rows:
            v = r[k]
            vals.append(None if v == "" else v == "True" if v in ("True", "False") else float(v))
        cols[k] = vals
    return cols


def _line_plot(path, x, ys: dict, xlabel, ylabel, title):
    fig, ax = plt.subplots(figsize=(6, 3.2))
    for label, y in ys.items():
        ax.plot(x, y, label=label, linewidth=1.2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(ys) > 1:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def plot_run(series_csv: str, out_dir: str, loss_traces: dict | None = None, tag: str = "") -> dict:
    """Draw the per-frame plots of one run from its series CSV.

    Returns ``{svg path: {label: plotted values}}`` so callers can compare
    what was drawn against the CSV. ``loss_traces`` maps frame numbers to
    objective values per iteration. Raises :class:`MissingSeries` when a
    requested plot has no data.
    """
    cols = read_series_csv(series_csv)
    t = cols["t"]
    if not t:
        raise MissingSeries(f"{series_csv} has no rows")
    drawn = {}

    dist = cols["cle_target"] if any(v is not None for v in cols["cle_target"]) else None
    if dist is None and all(v is None for v in cols["cle_gt"]):
        raise MissingSeries("neither cle_target nor cle_gt is present")
    label, ys = ("distance to target", dist) if dist is not None else ("distance to ground truth", cols["cle_gt"])
    p = os.path.join(out_dir, f"{tag}distance.svg")
    _line_plot(p, t, {label: ys}, "frame", "center distance (px)", label)
    drawn[p] = {label: ys}

    if any(v is None for v in cols["mean_abs_pert"]):
        raise MissingSeries("mean_abs_pert has gaps")
    p = os.path.join(out_dir, f"{tag}perturbation.svg")
    _line_plot(p, t, {"mean |E_t|": cols["mean_abs_pert"]}, "frame", "mean |E_t|", "perturbation per frame")
    drawn[p] = {"mean |E_t|": cols["mean_abs_pert"]}

    if loss_traces is not None:
        traces = {f"frame {k}": v for k, v in sorted(loss_traces.items()) if v}
        if not traces:
            raise MissingSeries("no loss traces at the selected frames")
        p = os.path.join(out_dir, f"{tag}loss.svg")
        fig, ax = plt.subplots(figsize=(6, 3.2))
        for label, v in traces.items():
            ax.plot(range(len(v)), v, marker="o", markersize=3, label=label)
        ax.axhline(0.0, color="gray", linewidth=0.8)
        ax.set_xlabel("iteration")
        ax.set_ylabel("objective")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(p, format="svg", metadata=_SVG_META)
        plt.close(fig)
        drawn[p] = traces
    return drawn


def select_loss_frames(run, count: int = 4) -> dict:
    """Loss traces of the anchor frames plus the first frames after them."""
    recs = _records(run)
    picked = {}
    for i, r in enumerate(recs):
        if r.get("anchor"):
            picked[r["t"]] = r.get("loss_trace") or []
            if i + 1 < len(recs):
                picked[recs[i + 1]["t"]] = recs[i + 1].get("loss_trace") or []
        if len(picked) >= count:
            break
    if not picked:
        attacked = [r for r in recs if r.get("loss_trace")]
        picked = {r["t"]: r["loss_trace"] for r in attacked[:count]}
    return picked
