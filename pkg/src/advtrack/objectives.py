"""Untargeted and targeted margin objectives on a tracker response map."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import frames
from . import tracker as trk
from .errors import NoDisjointCandidate, TargetOutsideRegion
from .geometry import BBox, Point


@dataclass
class ObjectiveEval:
    value: float
    grad_weights: np.ndarray   # per-candidate weights, shaped like the activations
    gt_index: int
    adversary_index: int

    @property
    def succeeded(self) -> bool:
        return self.value < 0


def _sparse_weights(shape, gt_index: int, adv_index: int) -> np.ndarray:
    w = np.zeros(shape)
    w.flat[gt_index] += 1.0
    w.flat[adv_index] -= 1.0
    return w


def disjoint_mask(response: trk.ResponseMap, box: BBox) -> np.ndarray:
    """Candidates whose box has zero IoU with ``box`` (touching edges count as disjoint)."""
    cx, cy = response.centers()
    bw, bh = response.box_w, response.box_h
    gx0, gy0, gx1, gy1 = box.corners
    iw = np.minimum(cx + bw / 2, gx1) - np.maximum(cx - bw / 2, gx0)
    ih = np.minimum(cy + bh / 2, gy1) - np.maximum(cy - bh / 2, gy0)
    return (iw <= 0) | (ih <= 0)


def f_ua(response: trk.ResponseMap, gt_box: BBox) -> ObjectiveEval:
    """``y_gt - max_{IoU(b_i, gt)=0} y_i``; negative once a disjoint candidate wins."""
    gt_index = response.nearest_index(gt_box.cx, gt_box.cy)
    mask = disjoint_mask(response, gt_box)
    if not mask.any():
        raise NoDisjointCandidate(f"no candidate in the {response.shape} grid is disjoint from {gt_box}")
    masked = np.where(mask, response.activations, -np.inf)
    adv_index = int(np.argmax(masked))
    y = response.activations
    value = float(y.flat[gt_index] - y.flat[adv_index])
    return ObjectiveEval(value, _sparse_weights(y.shape, gt_index, adv_index), gt_index, adv_index)


def target_index(response: trk.ResponseMap, p_tr: Point) -> tuple[int, float]:
    """Candidate whose center is nearest to ``p_tr`` and that distance."""
    cx, cy = response.centers()
    d2 = (cx - p_tr.x) ** 2 + (cy - p_tr.y) ** 2
    idx = int(np.argmin(d2))
    return idx, math.sqrt(float(d2.flat[idx]))


def f_ta(response: trk.ResponseMap, p_tr: Point, gt_box: BBox) -> ObjectiveEval:
    """``y_gt - y_target`` where the target candidate is centered nearest to ``p_tr``."""
    idx, dist = target_index(response, p_tr)
    if dist > 0.5 * math.hypot(response.box_w, response.box_h):
        raise TargetOutsideRegion(f"target ({p_tr.x:.1f}, {p_tr.y:.1f}) is {dist:.1f}px from the nearest candidate")
    gt_index = response.nearest_index(gt_box.cx, gt_box.cy)
    y = response.activations
    value = float(y.flat[gt_index] - y.flat[idx])
    return ObjectiveEval(value, _sparse_weights(y.shape, gt_index, idx), gt_index, idx)


class CleanReference:
    """Tracker run on the unperturbed frames; supplies the clean prediction each frame."""

    def __init__(self, state: trk.TrackerState):
        self.clean_state = state
        self.clean_box_t = state.prev_box
        self.clean_peak_index = None
        self.frames_seen = 0

    @property
    def prev_box(self) -> BBox:
        return self.clean_state.prev_box

    def advance(self, frame_t: np.ndarray) -> BBox:
        self.clean_state, box, resp = trk.track(self.clean_state, frame_t)
        self.clean_box_t = box
        self.clean_peak_index = int(np.argmax(resp.activations))
        self.frames_seen += 1
        return box


@dataclass
class FrameObjective:
    """An objective bound to one frame's search region.

    Calling :meth:`value_and_grad` with a region-shaped perturbation returns the
    margin value and its gradient with respect to that perturbation.
    """

    state: trk.TrackerState
    region: np.ndarray
    origin: Point
    kind: str                      # "ua" or "ta"
    gt_box: BBox
    target: Point | None = None
    last_eval: ObjectiveEval | None = field(default=None, repr=False)
    last_response: trk.ResponseMap | None = field(default=None, repr=False)
    evaluations: int = 0

    def evaluate(self, pert: np.ndarray | None = None) -> ObjectiveEval:
        region = self.region if pert is None else self.region + pert
        resp = trk.respond(self.state, region, self.origin)
        if self.kind == "ua":
            ev = f_ua(resp, self.gt_box)
        elif self.kind == "ta":
            ev = f_ta(resp, self.target, self.gt_box)
        else:
            raise ValueError(f"unknown objective kind {self.kind!r}")
        self.last_eval, self.last_response = ev, resp
        self.evaluations += 1
        return ev

    def value(self, pert: np.ndarray) -> float:
        return self.evaluate(pert).value

    def value_and_grad(self, pert: np.ndarray) -> tuple[float, np.ndarray]:
        ev = self.evaluate(pert)
        grad = trk.grad_activations(self.state, self.region + pert, ev.grad_weights, self.last_response)
        return ev.value, grad


def bind_objective(state: trk.TrackerState, frame_t: np.ndarray, region_box: BBox, kind: str,
                   gt_box: BBox, target: Point | None = None) -> FrameObjective:
    region = frames.crop(frame_t, region_box)
    x0, y0, _, _ = frames.region_bounds(region_box)
    return FrameObjective(state, region, Point(float(x0), float(y0)), kind, gt_box, target)
