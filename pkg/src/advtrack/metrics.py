"""Tracking-attack metrics: precision, success rate, mean absolute perturbation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatch
from .geometry import BBox, Point, cle, point_distance

THRESHOLD = 20.0


def _check(a, b):
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} predictions vs {len(b)} references")
    if not a:
        raise LengthMismatch("empty sequence")


def precision(preds: list[BBox], annotations: list[BBox], threshold: float = THRESHOLD) -> float:
    """Fraction of frames whose center error is below ``threshold``."""
    _check(preds, annotations)
    return sum(cle(p, a) < threshold for p, a in zip(preds, annotations)) / len(preds)


def succ_rate(preds: list[BBox], targets: list[Point], threshold: float = THRESHOLD) -> float:
    """Fraction of frames whose predicted center lies within ``threshold`` of the target."""
    _check(preds, targets)
    return sum(point_distance(Point(p.cx, p.cy), q) < threshold for p, q in zip(preds, targets)) / len(preds)


def mean_abs_perturbation(suite) -> float:
    """Nested mean of ``|E|``: over videos, then frames, then pixels and channels.

    ``suite`` is a list of videos, each a list of per-frame perturbation grids
    (or of already-reduced per-frame means).
    """
    if not suite:
        raise ValueError("empty suite")
    per_video = []
    for video in suite:
        if not len(video):
            raise ValueError("video without frames")
        per_video.append(np.mean([float(np.mean(np.abs(e))) for e in video]))
    return float(np.mean(per_video))


@dataclass
class RunMetrics:
    precision: float
    prec_drop: float
    succ_rate: float | None
    map: float
    map_frame: float
    mean_iterations: float
    per_frame: list = field(default_factory=list, repr=False)


def run_metrics(run, clean_precision: float) -> RunMetrics:
    """Metrics of one :class:`~advtrack.runs.AttackRun`.

    Iterations and MAP average over the attacked frames (every frame after
    the initialization frame).
    """
    recs = run.records
    preds = [BBox(*r.pred) for r in recs]
    gts = [BBox(*r.gt) for r in recs]
    prec = precision(preds, gts)
    sr = None
    if run.objective == "ta":
        sr = succ_rate(preds, [Point(*r.target) for r in recs])
    tracked = recs[1:]
    return RunMetrics(
        precision=prec,
        prec_drop=clean_precision - prec,
        succ_rate=sr,
        map=float(np.mean([r.mean_abs_pert for r in tracked])),
        map_frame=float(np.mean([r.mean_abs_pert_frame for r in tracked])),
        mean_iterations=float(np.mean([r.iterations for r in tracked])),
        per_frame=[(r.cle_gt, r.cle_target, r.mean_abs_pert, r.iterations) for r in recs],
    )
