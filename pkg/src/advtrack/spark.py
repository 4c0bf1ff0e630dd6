"""Online incremental attack with L2,1-regularized increments.

At every frame a small increment ``eps_t`` is optimized on top of the
perturbation carried over from earlier frames of the current round,

    minimize  f(X_t + sum(history) + eps_t) + lam * ||[history, eps_t]||_{2,1}

with signed gradient steps. The group norm treats every pixel-channel
position as one group spanning the round's increments, so whole positions
are driven to zero across time. Rounds restart every ``reset_interval``
frames, when the history is dropped and the fresh increment gets the larger
iteration budget.

Increments are stored on the whole-frame grid. Each frame the stored
history is restricted to the current search region, so the live
perturbation always equals the sum of the buffer.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from . import frames
from . import tracker as trk
from .basic import anchor_frame
from .geometry import BBox, Point
from .objectives import bind_objective
from .runs import FRAME_ERRORS, FrameStep

VARIANTS = ("standard", "no_template", "no_victim_box")
_KINK = 1e-12


@dataclass
class SparkConfig:
    step: float = 0.3
    lam: float = 1e-5
    reset_interval: int = 30
    iters_anchor: int = 10
    iters_between: int = 2
    eps_max: float = 16.0
    variant: str = "standard"
    early_exit: bool = True

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.reset_interval < 1:
            raise ValueError("reset_interval must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


class IncrementBuffer:
    """Ordered increments of the current round; their sum is the live perturbation.

    The sum and the sum of squares are kept as running totals. Restriction
    masks are recorded and only multiplied into individual increments when
    :attr:`increments` is read, so per-frame upkeep does not grow with the
    round length.
    """

    def __init__(self, max_len: int = 30):
        self.max_len = max_len
        self.anchor_frame = 0
        self._raw = []          # increments as pushed
        self._born = []         # number of masks recorded before each push
        self._masks = []
        self._total = None
        self._sq = None

    def __len__(self) -> int:
        return len(self._raw)

    def clear(self, anchor: int) -> None:
        self._raw, self._born, self._masks = [], [], []
        self._total = self._sq = None
        self.anchor_frame = anchor

    def push(self, eps: np.ndarray) -> None:
        if len(self._raw) >= self.max_len:
            raise OverflowError(f"buffer already holds {self.max_len} increments")
        eps = np.asarray(eps, dtype=np.float64)
        self._raw.append(eps)
        self._born.append(len(self._masks))
        if self._total is None:
            self._total, self._sq = eps.copy(), eps * eps
        else:
            self._total += eps
            self._sq += eps * eps

    @property
    def increments(self) -> list:
        out = []
        for eps, born in zip(self._raw, self._born):
            for m in self._masks[born:]:
                eps = eps * m
            out.append(eps)
        return out

    def total(self, shape=None) -> np.ndarray:
        if self._total is None:
            return np.zeros(shape)
        return self._total.copy()

    def sq_sum(self, shape=None) -> np.ndarray:
        if self._sq is None:
            return np.zeros(shape)
        return self._sq.copy()

    def restrict(self, mask: np.ndarray) -> None:
        """Zero every increment outside ``mask`` (0/1 valued, broadcastable)."""
        if self._total is None:
            return
        mask = np.asarray(mask, dtype=np.float64)
        self._masks.append(mask)
        self._total *= mask
        self._sq *= mask

    def gamma(self) -> np.ndarray:
        """The increments as columns of a (positions x time) matrix."""
        return np.stack([e.ravel() for e in self.increments], axis=1)


def l21_norm(buffer: IncrementBuffer) -> float:
    """Sum over pixel-channel positions of the L2 norm across the round's increments."""
    if not len(buffer):
        return 0.0
    return float(np.sqrt(buffer.sq_sum()).sum())


def _l21_grad(history_sq: np.ndarray, eps: np.ndarray) -> np.ndarray:
    norms = np.sqrt(history_sq + eps * eps)
    out = np.zeros_like(eps)
    np.divide(eps, norms, out=out, where=norms > _KINK)
    return out


def l21_subgradient(buffer: IncrementBuffer) -> np.ndarray:
    """Subgradient of :func:`l21_norm` with respect to the newest increment.

    Positions whose group norm vanishes get 0.
    """
    incs = buffer.increments
    newest = incs[-1]
    history_sq = np.sum([e * e for e in incs[:-1]], axis=0) if len(incs) > 1 else np.zeros_like(newest)
    return _l21_grad(history_sq, newest)


@dataclass
class SparkFrameResult:
    increment: np.ndarray           # whole-frame, post-clip
    live: np.ndarray                # whole-frame E_t
    iterations_used: int
    final_objective: float | None
    succeeded: bool
    failed: str | None = None
    loss_trace: list = field(default_factory=list)


def spark_frame(state: trk.TrackerState, frame_t: np.ndarray, region_box: BBox,
                buffer: IncrementBuffer, kind: str, config: SparkConfig, t: int,
                gt_box: BBox, target: Point | None = None) -> SparkFrameResult:
    """Optimize this frame's increment and push it into ``buffer``.

    ``t`` is the 1-based frame number; round-opening frames clear the buffer.
    A frame whose objective cannot be formed (no disjoint candidate, target
    out of reach, non-finite gradient) pushes a zero increment and reports
    the reason in ``failed``.
    """
    is_anchor = anchor_frame(t, config.reset_interval)
    if is_anchor:
        buffer.clear(t)
    in_frame = frames.inside_mask(frame_t.shape, region_box)[:, :, None].astype(float)
    frame_mask = frames.embed(frame_t.shape, region_box,
                              np.broadcast_to(in_frame, in_frame.shape[:2] + (frame_t.shape[2],)).copy())
    buffer.restrict(frame_mask)
    history = buffer.total(frame_t.shape)
    hist_region = frames.crop(history, region_box) * in_frame
    hist_sq_region = frames.crop(buffer.sq_sum(frame_t.shape), region_box) * in_frame

    iters = config.iters_anchor if is_anchor else config.iters_between
    try:
        obj = bind_objective(state, frame_t, region_box, kind, gt_box, target)
        eps = np.zeros_like(obj.region)
        trace, used, value = [], 0, None
        for _ in range(iters):
            value, grad = obj.value_and_grad(hist_region + eps)
            trace.append(value)
            if config.early_exit and value < 0:
                break
            if not np.all(np.isfinite(grad)):
                return _failed_frame(buffer, history, "NonFiniteGradient", used, value, trace)
            if config.lam:
                grad = grad + config.lam * _l21_grad(hist_sq_region, eps)
            eps = (eps - config.step * np.sign(grad)) * in_frame
            used += 1
            value = None
        if value is None:
            value = obj.value(hist_region + eps)
            trace.append(value)
    except FRAME_ERRORS as exc:
        return _failed_frame(buffer, history, type(exc).__name__)

    live_region = frames.clip_linf(hist_region + eps, config.eps_max)
    live_region = (np.clip(obj.region + live_region, 0.0, 255.0) - obj.region) * in_frame
    live = frames.embed(frame_t.shape, region_box, live_region)
    increment = live - history
    buffer.push(increment)
    return SparkFrameResult(increment, live, used, value, value < 0, loss_trace=trace)


def _failed_frame(buffer, history, reason, used=0, value=None, trace=()) -> SparkFrameResult:
    # a zero increment keeps one push per frame, so the sum and round length stay exact
    zero = np.zeros_like(history)
    buffer.push(zero)
    return SparkFrameResult(zero, history, used, value, False, failed=reason, loss_trace=list(trace))


def _otsu(values: np.ndarray) -> float:
    hist, edges = np.histogram(values, bins=256)
    mids = (edges[:-1] + edges[1:]) / 2
    w0 = np.cumsum(hist)
    w1 = w0[-1] - w0
    m0 = np.cumsum(hist * mids) / np.maximum(w0, 1)
    m1 = (np.sum(hist * mids) - np.cumsum(hist * mids)) / np.maximum(w1, 1)
    return float(mids[int(np.argmax(w0 * w1 * (m0 - m1) ** 2))])


def detect_center_object(frame: np.ndarray, window: int = 9, min_size: int = 16) -> BBox:
    """Stand-in object detector: the largest salient blob, ties going to the most central.

    Saliency is the local energy of the deviation from the frame's median
    color, so both brightness changes and texture stand out. An Otsu
    threshold picks candidate blobs; the winner's extent is then re-measured
    at the level halfway between background and blob energy, which undoes
    the spreading caused by the smoothing window. Falls back to a centered
    quarter-size box when nothing qualifies.
    """
    H, W, C = frame.shape
    dev = frame - np.median(frame.reshape(-1, C), axis=0)
    energy = ndimage.uniform_filter((dev * dev).sum(axis=2), size=window, mode="nearest")
    side = min(H, W) / 4
    fallback = BBox(W / 2, H / 2, side, side)
    if np.ptp(energy) <= 1e-9:
        return fallback
    labels, count = ndimage.label(energy > _otsu(energy))
    best, best_key = None, None
    for lab, sl in enumerate(ndimage.find_objects(labels), start=1):
        size = int((labels[sl] == lab).sum())
        if size < min_size:
            continue
        cy = (sl[0].start + sl[0].stop) / 2
        cx = (sl[1].start + sl[1].stop) / 2
        key = (-size, (cx - W / 2) ** 2 + (cy - H / 2) ** 2)
        if best_key is None or key < best_key:
            best, best_key = lab, key
    if best is None:
        return fallback
    blob = labels == best
    if blob.all():
        return fallback
    level = (np.median(energy[~blob]) + np.median(energy[blob])) / 2
    refined, _ = ndimage.label(energy > level)
    ids = np.unique(refined[blob & (refined > 0)])
    mask = np.isin(refined, ids) if ids.size else blob
    ys, xs = np.nonzero(mask)
    return BBox.from_corners(xs.min(), ys.min(), xs.max() + 1, ys.max() + 1)


class SparkAttacker:
    """Online driver for the incremental attack; see :func:`advtrack.runs.run_online`."""

    def __init__(self, config: SparkConfig, kernel: trk.FeatureKernel, kind: str,
                 audit: bool = False):
        self.config = config
        self.kernel = kernel
        self.kind = kind
        self.buffer = IncrementBuffer(max_len=config.reset_interval)
        self.state = None
        self.live = None
        self.audit = audit
        self.history = []          # per-frame (t, buffer length, |sum - live|_inf) when auditing

    @property
    def use_victim_box(self) -> bool:
        return self.config.variant != "no_victim_box"

    def start(self, frame0, gt0: BBox, context_factor: float) -> trk.TrackerState:
        box = gt0
        if self.config.variant == "no_template":
            box = detect_center_object(frame0)
        self.state = trk.init(frame0, box, self.kernel, context_factor)
        self.buffer.clear(0)
        self.live = np.zeros_like(frame0)
        return self.state

    def step(self, t: int, frame_t, region_box: BBox, clean_box: BBox, target: Point | None) -> FrameStep:
        res = spark_frame(self.state, frame_t, region_box, self.buffer, self.kind, self.config,
                          t, clean_box, target)
        self.live = res.live
        region_px = frames.region_bounds(region_box)
        inc_mean = float(np.abs(res.increment).sum()) / (region_px[2] * region_px[3] * frame_t.shape[2])
        if self.audit:
            summed = np.sum(self.buffer.increments, axis=0) if len(self.buffer) else np.zeros_like(self.live)
            self.history.append((t, len(self.buffer), float(np.abs(summed - self.live).max())))
        return FrameStep(self.live, iterations=res.iterations_used, objective=res.final_objective,
                         attacked=True, failed=res.failed, anchor=anchor_frame(t, self.config.reset_interval),
                         increment_mean_abs=inc_mean if res.failed is None else None,
                         buffer_len=len(self.buffer), loss_trace=res.loss_trace)
