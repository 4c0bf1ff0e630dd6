"""Per-video online attack loop shared by the basic attacks and SPARK.

An *attacker* object produces a whole-frame perturbation for each incoming
frame; this module feeds the perturbed frame to the victim tracker, keeps
the clean reference in step and records everything the metrics need.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import frames
from . import tracker as trk
from .errors import NoDisjointCandidate, TargetOutsideRegion
from .geometry import BBox, Point, cle, iou, point_distance
from .objectives import CleanReference

SUCCESS_RADIUS = 20.0


@dataclass
class FrameStep:
    """What an attacker returns for one frame."""

    perturbation: np.ndarray               # whole-frame grid
    iterations: int = 0
    objective: float | None = None
    attacked: bool = False
    failed: str | None = None
    anchor: bool = False
    increment_mean_abs: float | None = None
    buffer_len: int | None = None
    loss_trace: list = field(default_factory=list)


@dataclass
class FrameRecord:
    t: int
    pred: list
    clean: list
    gt: list
    target: list | None
    cle_gt: float
    cle_target: float | None
    objective: float | None
    iterations: int
    attacked: bool
    succeeded: bool
    failed: str | None
    mean_abs_pert: float
    mean_abs_pert_frame: float
    anchor: bool = False
    increment_mean_abs: float | None = None
    buffer_len: int | None = None
    loss_trace: list = field(default_factory=list)


@dataclass
class AttackRun:
    attack: str
    objective: str
    attacker_kernel: str
    victim_kernel: str
    video: int
    seed: int
    records: list = field(default_factory=list)

    def series(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AttackRun":
        d = dict(d)
        d["records"] = [FrameRecord(**r) for r in d.get("records", [])]
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(_finite(self.to_dict()), sort_keys=True, separators=(",", ":"))


def _finite(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def frame_success(kind: str, pred: BBox, clean_box: BBox, target: Point | None) -> bool:
    if kind == "ua":
        return iou(pred, clean_box) == 0.0
    return point_distance(Point(pred.cx, pred.cy), target) < SUCCESS_RADIUS


def run_online(video, attacker, kind: str, victim_kernel: trk.FeatureKernel,
               targets: list | None = None, context_factor: float = 2.0,
               name: str = "attack", video_index: int = 0, seed: int = 0,
               on_frame=None) -> AttackRun:
    """Drive ``attacker`` over ``video`` against a victim tracker.

    ``attacker`` must provide ``start(frame0, gt0, context_factor)`` returning
    its own tracker state, ``use_victim_box`` and
    ``step(t, frame_t, region_box, clean_box, target) -> FrameStep``.
    ``on_frame(t, adversarial_frame, perturbation)`` is called after every
    attacked frame when given.
    """
    if kind == "ta" and targets is None:
        raise ValueError("targeted runs need a target trajectory")
    frames0, gt0 = video.frames[0], video.gt[0]
    victim = trk.init(frames0, gt0, victim_kernel, context_factor)
    attack_state = attacker.start(frames0, gt0, context_factor)
    clean_ref = CleanReference(attack_state)
    run = AttackRun(name, kind, attack_state.kernel.kind, victim_kernel.kind, video_index, seed)
    region_px = None

    tgt0 = targets[0] if targets is not None else None
    run.records.append(FrameRecord(
        t=1, pred=gt0.to_list(), clean=gt0.to_list(), gt=gt0.to_list(),
        target=[tgt0.x, tgt0.y] if tgt0 else None, cle_gt=0.0,
        cle_target=point_distance(Point(gt0.cx, gt0.cy), tgt0) if tgt0 else None,
        objective=None, iterations=0, attacked=False,
        succeeded=frame_success(kind, gt0, gt0, tgt0) if kind == "ta" else False,
        failed=None, mean_abs_pert=0.0, mean_abs_pert_frame=0.0))

    for i in range(1, len(video.frames)):
        frame_t = video.frames[i]
        t = i + 1
        target = targets[i] if targets is not None else None
        attacker_prev = clean_ref.prev_box
        clean_box = clean_ref.advance(frame_t)
        if attacker.use_victim_box:
            rbox = trk.region_box(victim)
        else:
            rbox = trk.region_box(attack_state, attacker_prev)
        if region_px is None:
            _, _, rw, rh = frames.region_bounds(rbox)
            region_px = rw * rh
        step = attacker.step(t, frame_t, rbox, clean_box, target)
        adv = frames.apply(frame_t, step.perturbation)
        victim, pred, _ = trk.track(victim, adv)
        if on_frame is not None:
            on_frame(t, adv, step.perturbation)

        abs_sum = float(np.abs(step.perturbation).sum())
        C = frame_t.shape[2]
        gt = video.gt[i]
        run.records.append(FrameRecord(
            t=t, pred=pred.to_list(), clean=clean_box.to_list(), gt=gt.to_list(),
            target=[target.x, target.y] if target else None,
            cle_gt=cle(pred, gt),
            cle_target=point_distance(Point(pred.cx, pred.cy), target) if target else None,
            objective=step.objective, iterations=step.iterations, attacked=step.attacked,
            succeeded=frame_success(kind, pred, clean_box, target),
            failed=step.failed,
            mean_abs_pert=abs_sum / (region_px * C),
            mean_abs_pert_frame=abs_sum / frame_t.size,
            anchor=step.anchor, increment_mean_abs=step.increment_mean_abs,
            buffer_len=step.buffer_len, loss_trace=list(step.loss_trace)))
    return run


FRAME_ERRORS = (NoDisjointCandidate, TargetOutsideRegion)
