"""Single-frame gradient attacks adapted to tracking and their frame schedules.

FGSM, BIM, MI-FGSM and a C&W-style margin + L2 descent all optimize a
:class:`~advtrack.objectives.FrameObjective` on the victim's search region.
Three schedules decide which frames are attacked:

``ba_e``
    every frame; ``iters_anchor`` iterations on round-opening frames and
    ``iters_between`` elsewhere (set both to 10 for the original protocol);
``ba_r1``
    each frame independently with probability ``r1_prob``;
``ba_r2``
    every ``r2_interval``-th tracked frame.

Unattacked frames under the BA-R schedules re-apply the last computed
whole-frame perturbation unchanged.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import frames
from . import tracker as trk
from .geometry import BBox, Point
from .objectives import bind_objective
from .rng import make_rng
from .runs import FRAME_ERRORS, FrameStep

METHODS = ("fgsm", "bim", "mifgsm", "cw")
SCHEDULES = ("ba_e", "ba_r1", "ba_r2")


@dataclass
class BasicAttackConfig:
    method: str = "bim"
    step: float | None = None          # defaults: 1.0 for fgsm, 0.3 otherwise
    iters_anchor: int = 10
    iters_between: int = 2
    momentum_decay: float = 1.0
    cw_penalty: float = 1e-2
    cw_lr: float = 20.0
    schedule: str = "ba_e"
    r1_prob: float = 0.1
    r2_interval: int = 10
    reset_interval: int = 30
    eps_max: float = 16.0
    early_exit: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.step is None:
            self.step = 1.0 if self.method == "fgsm" else 0.3
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.iters_anchor < 0 or self.iters_between < 0:
            raise ValueError("iteration counts must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FrameAttackResult:
    perturbation: np.ndarray           # region-shaped
    iterations_used: int
    final_objective: float
    succeeded: bool
    flagged: bool = False
    loss_trace: list = field(default_factory=list)


def _project(pert, region, eps_max, mask=None):
    pert = frames.clip_linf(pert, eps_max)
    pert = np.clip(region + pert, 0.0, 255.0) - region
    if mask is not None:
        pert = pert * mask
    return pert


def fgsm_step(region: np.ndarray, grad: np.ndarray, step: float = 1.0,
              eps_max: float = 16.0) -> np.ndarray:
    """One signed descent step from zero, clipped to the budget and pixel range."""
    return _project(-step * np.sign(grad), region, eps_max)


def iterative_attack(region: np.ndarray, objective, config: BasicAttackConfig,
                     iters: int | None = None, mask: np.ndarray | None = None) -> FrameAttackResult:
    """Minimize ``objective`` over a region-shaped perturbation starting from zero.

    ``objective.value_and_grad(pert)`` must return ``(value, gradient)``.
    Stops as soon as the value is negative unless ``config.early_exit`` is off.
    """
    iters = config.iters_anchor if iters is None else iters
    method = config.method
    pert = np.zeros_like(region)
    velocity = np.zeros_like(region)
    trace = []
    used = 0
    value = None
    for _ in range(iters):
        value, grad = objective.value_and_grad(pert)
        trace.append(value)
        if config.early_exit and value < 0:
            break
        if not np.all(np.isfinite(grad)):
            return FrameAttackResult(np.zeros_like(region), used, value, False, flagged=True, loss_trace=trace)
        if method in ("fgsm", "bim"):
            pert = pert - config.step * np.sign(grad)
        elif method == "mifgsm":
            l1 = np.abs(grad).sum()
            velocity = config.momentum_decay * velocity + (grad / l1 if l1 > 0 else grad)
            pert = pert - config.step * np.sign(velocity)
        else:  # cw: plain descent on f + c * ||E||^2
            pert = pert - config.cw_lr * (grad + 2.0 * config.cw_penalty * pert)
        pert = _project(pert, region, config.eps_max, mask)
        used += 1
        value = None
    if value is None:
        value = _value(objective, pert)
        trace.append(value)
    return FrameAttackResult(pert, used, value, value < 0, loss_trace=trace)


def _value(objective, pert) -> float:
    if hasattr(objective, "value"):
        return objective.value(pert)
    return objective.value_and_grad(pert)[0]


def anchor_frame(t: int, reset_interval: int = 30) -> bool:
    """Round-opening frames: 1-based frame numbers divisible by the interval."""
    return t % reset_interval == 0


def attacked_steps(config: BasicAttackConfig, num_frames: int) -> list[int]:
    """1-based tracked-frame counters (frame 2 is counter 1) that get attacked."""
    steps = range(1, num_frames)
    if config.schedule == "ba_e":
        return list(steps)
    if config.schedule == "ba_r2":
        return [k for k in steps if (k - 1) % config.r2_interval == 0]
    rng = make_rng(config.seed)
    draws = rng.random(num_frames - 1)
    return [k for k, u in zip(steps, draws) if u < config.r1_prob]


class BasicAttacker:
    """Online driver for a basic attack; see :func:`advtrack.runs.run_online`."""

    use_victim_box = True

    def __init__(self, config: BasicAttackConfig, kernel: trk.FeatureKernel, num_frames: int):
        self.config = config
        self.kernel = kernel
        self.schedule = set(attacked_steps(config, num_frames))
        self.state = None
        self.current = None

    def start(self, frame0, gt0: BBox, context_factor: float) -> trk.TrackerState:
        self.state = trk.init(frame0, gt0, self.kernel, context_factor)
        self.current = np.zeros_like(frame0)
        return self.state

    def iterations_for(self, t: int) -> int:
        if self.config.method == "fgsm":
            return 1
        if self.config.schedule == "ba_e":
            return self.config.iters_anchor if anchor_frame(t, self.config.reset_interval) \
                else self.config.iters_between
        return self.config.iters_anchor

    def step(self, t: int, frame_t, region_box: BBox, clean_box: BBox, target: Point | None) -> FrameStep:
        if (t - 1) not in self.schedule:
            return FrameStep(self.current, attacked=False)
        kind = "ta" if target is not None else "ua"
        obj = bind_objective(self.state, frame_t, region_box, kind, clean_box, target)
        mask = frames.inside_mask(frame_t.shape, region_box)[:, :, None].astype(float)
        iters = self.iterations_for(t)
        try:
            res = iterative_attack(obj.region, obj, self.config, iters=iters, mask=mask)
        except FRAME_ERRORS as exc:
            self.current = np.zeros_like(frame_t)
            return FrameStep(self.current, attacked=True, failed=type(exc).__name__,
                             anchor=iters == self.config.iters_anchor)
        self.current = frames.embed(frame_t.shape, region_box, res.perturbation)
        return FrameStep(self.current, iterations=res.iterations_used, objective=res.final_objective,
                         attacked=True, failed="NonFiniteGradient" if res.flagged else None,
                         anchor=anchor_frame(t, self.config.reset_interval),
                         loss_trace=res.loss_trace)
