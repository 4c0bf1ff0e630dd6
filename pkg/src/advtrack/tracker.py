"""Differentiable template-matching tracker.

The tracker scores every template-sized translation of a search region by
the normalized cross-correlation (NCC) between a fixed linear feature map of
the candidate patch and of the first-frame template. Activations therefore
lie in ``[-1, 1]``. Because both the feature map and NCC are simple, the
gradient of any weighted sum of activations with respect to region pixels
is available in closed form (:func:`grad_activations`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft as sfft
from scipy import ndimage, signal

from . import frames
from .errors import EmptyRegion, RegionTooSmall
from .geometry import BBox, Point

KERNEL_KINDS = ("identity", "box_blur_3", "box_blur_5", "center_surround")

# Patches whose centered squared norm falls below this (per element) are
# treated as constant: activation 0, zero gradient.
_FLAT_VAR_PER_ELEMENT = 1e-8
# Above this many nonzero weights the dense FFT gradient path is used.
_SPARSE_LIMIT = 8


@dataclass(frozen=True)
class FeatureKernel:
    """Fixed depthwise linear feature map applied to every channel."""

    kind: str = "identity"
    weights: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; choose from {KERNEL_KINDS}")
        if self.weights is None:
            object.__setattr__(self, "weights", _kernel_weights(self.kind))

    @property
    def radius(self) -> int:
        return self.weights.shape[0] // 2

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def apply(self, grid: np.ndarray) -> np.ndarray:
        if self.is_identity:
            return grid
        return ndimage.correlate(grid, self.weights[:, :, None], mode="constant", cval=0.0)

    def transpose(self, grid: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`apply` (zero boundary)."""
        if self.is_identity:
            return grid
        return ndimage.convolve(grid, self.weights[:, :, None], mode="constant", cval=0.0)


def _kernel_weights(kind: str) -> np.ndarray:
    if kind == "identity":
        return np.ones((1, 1))
    if kind == "box_blur_3":
        return np.full((3, 3), 1.0 / 9.0)
    if kind == "box_blur_5":
        return np.full((5, 5), 1.0 / 25.0)
    # zero-sum: center minus the mean of its 8 neighbours
    k = np.full((3, 3), -1.0 / 8.0)
    k[1, 1] = 1.0
    return k


@dataclass(frozen=True)
class TrackerState:
    template: np.ndarray           # feature-space template patch (h, w, C)
    t_hat: np.ndarray              # zero-mean unit-norm template
    t_norm: float                  # norm of the centered template
    template_box: BBox
    prev_box: BBox
    kernel: FeatureKernel
    context_factor: float = 2.0
    _fft_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def patch_size(self) -> tuple[int, int]:
        return self.template.shape[0], self.template.shape[1]

    def with_prev(self, box: BBox) -> "TrackerState":
        return replace(self, prev_box=box)


@dataclass
class ResponseMap:
    """Activations over translation offsets ``(dy, dx)`` of a search region."""

    activations: np.ndarray
    origin: Point
    box_w: float
    box_h: float
    # cached pieces used by the gradient
    _features: np.ndarray = field(default=None, repr=False)
    _norms: np.ndarray = field(default=None, repr=False)
    _means: np.ndarray = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.activations.shape

    @property
    def n(self) -> int:
        return self.activations.size

    def offset(self, index: int) -> tuple[int, int]:
        return divmod(int(index), self.activations.shape[1])

    def candidate_box(self, index: int) -> BBox:
        dy, dx = self.offset(index)
        return BBox(self.origin.x + dx + self.box_w / 2, self.origin.y + dy + self.box_h / 2,
                    self.box_w, self.box_h)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Candidate center coordinates as two ``(Nh, Nw)`` arrays ``(cx, cy)``."""
        nh, nw = self.activations.shape
        cx = self.origin.x + np.arange(nw) + self.box_w / 2
        cy = self.origin.y + np.arange(nh) + self.box_h / 2
        return np.broadcast_to(cx[None, :], (nh, nw)), np.broadcast_to(cy[:, None], (nh, nw))

    def nearest_index(self, x: float, y: float) -> int:
        """Index of the candidate whose center is nearest to ``(x, y)`` (clamped to the grid)."""
        nh, nw = self.activations.shape
        dx = min(max(int(math.floor(x - self.box_w / 2 - self.origin.x + 0.5)), 0), nw - 1)
        dy = min(max(int(math.floor(y - self.box_h / 2 - self.origin.y + 0.5)), 0), nh - 1)
        return dy * nw + dx


def _centered_unit(patch: np.ndarray) -> tuple[np.ndarray, float]:
    centered = patch - patch.mean()
    norm = float(np.sqrt(np.sum(centered * centered)))
    if norm <= math.sqrt(_FLAT_VAR_PER_ELEMENT * patch.size):
        raise EmptyRegion("template has no texture (constant patch)")
    return centered / norm, norm


def init(frame0: np.ndarray, gt0: BBox, kernel: FeatureKernel | None = None,
         context_factor: float = 2.0) -> TrackerState:
    """Crop the object template from the first frame."""
    kernel = kernel or FeatureKernel()
    frame0 = frames.as_frame(frame0)
    r = kernel.radius
    _, _, w, h = frames.region_bounds(gt0)
    if w < 1 or h < 1:
        raise EmptyRegion(f"template box {gt0} is empty")
    # features are computed on a margin-padded crop so the template matches
    # the in-frame features at the same location exactly
    padded = frames.crop(frame0, BBox(gt0.cx, gt0.cy, gt0.w + 2 * r, gt0.h + 2 * r))
    feat = kernel.apply(padded)
    template = feat[r:r + h, r:r + w].copy()
    t_hat, t_norm = _centered_unit(template)
    return TrackerState(template=template, t_hat=t_hat, t_norm=t_norm, template_box=gt0,
                        prev_box=gt0, kernel=kernel, context_factor=context_factor)


def region_box(state: TrackerState, around: BBox | None = None) -> BBox:
    """Square search-region box centered on ``around`` (default: previous prediction)."""
    around = around or state.prev_box
    side = float(int(math.floor(state.context_factor * max(state.template_box.w,
                                                           state.template_box.h) + 0.5)))
    return BBox(around.cx, around.cy, side, side)


def search_region(state: TrackerState, frame_t: np.ndarray,
                  around: BBox | None = None) -> tuple[np.ndarray, Point]:
    rbox = region_box(state, around)
    x0, y0, _, _ = frames.region_bounds(rbox)
    return frames.crop(frame_t, rbox), Point(float(x0), float(y0))


def _box_sums(a: np.ndarray, h: int, w: int) -> np.ndarray:
    """Sums of ``a`` (2-d) over every ``h x w`` window, 'valid' placement."""
    ii = np.zeros((a.shape[0] + 1, a.shape[1] + 1))
    np.cumsum(np.cumsum(a, axis=0), axis=1, out=ii[1:, 1:])
    return ii[h:, w:] - ii[:-h, w:] - ii[h:, :-w] + ii[:-h, :-w]


def _template_fft(state: TrackerState, shape: tuple[int, int]):
    fshape = (sfft.next_fast_len(shape[0], True), sfft.next_fast_len(shape[1], True))
    key = ("corr", fshape)
    cached = state._fft_cache.get(key)
    if cached is None:
        flipped = state.t_hat[::-1, ::-1, :]
        cached = sfft.rfft2(flipped, s=fshape, axes=(0, 1))
        state._fft_cache[key] = cached
    return fshape, cached


def respond(state: TrackerState, region: np.ndarray, origin: Point = Point(0.0, 0.0)) -> ResponseMap:
    """NCC activations of every template-sized candidate inside ``region``."""
    region = frames.as_frame(region)
    h, w = state.patch_size
    Hs, Ws, C = region.shape
    if Hs < h or Ws < w:
        raise RegionTooSmall(f"region {Hs}x{Ws} smaller than template {h}x{w}")
    if C != state.template.shape[2]:
        raise RegionTooSmall(f"region has {C} channels, template {state.template.shape[2]}")
    feat = state.kernel.apply(region)
    feat = feat - feat.mean()
    n = h * w * C

    fshape, t_fft = _template_fft(state, (Hs, Ws))
    spec = np.einsum("ijc,ijc->ij", sfft.rfft2(feat, s=fshape, axes=(0, 1)), t_fft)
    num = sfft.irfft2(spec, s=fshape)[h - 1:Hs, w - 1:Ws]

    # channel sums through matmul; reductions over a short last axis are slow
    ones = np.ones(C)
    s1 = _box_sums(feat @ ones, h, w)
    s2 = _box_sums((feat * feat) @ ones, h, w)
    means = s1 / n
    var = np.maximum(s2 - s1 * means, 0.0)
    flat = var <= _FLAT_VAR_PER_ELEMENT * n
    norms = np.sqrt(var)
    act = np.zeros_like(num)
    np.divide(num, norms, out=act, where=~flat)
    norms[flat] = 0.0
    np.clip(act, -1.0, 1.0, out=act)
    return ResponseMap(activations=act, origin=origin, box_w=state.template_box.w,
                       box_h=state.template_box.h, _features=feat, _norms=norms, _means=means)


def predict(response: ResponseMap) -> tuple[BBox, float]:
    """Highest-activation candidate; ties go to the first offset in row-major order."""
    idx = int(np.argmax(response.activations))
    return response.candidate_box(idx), float(response.activations.flat[idx])


def track(state: TrackerState, frame_t: np.ndarray) -> tuple[TrackerState, BBox, ResponseMap]:
    """One tracking step: search around the previous box, predict, update."""
    region, origin = search_region(state, frame_t)
    resp = respond(state, region, origin)
    box, _ = predict(resp)
    return state.with_prev(box), box, resp


def grad_activations(state: TrackerState, region: np.ndarray, weights: np.ndarray,
                     response: ResponseMap | None = None) -> np.ndarray:
    """Gradient of ``sum_i weights[i] * y_i`` with respect to region pixels.

    ``weights`` is shaped like the activation grid (or flat of the same size).
    ``response`` may be passed to reuse the forward pass on the same region.
    """
    region = frames.as_frame(region)
    if response is None or response._features is None:
        response = respond(state, region)
    weights = np.asarray(weights, dtype=np.float64).reshape(response.shape)
    feat, norms, y = response._features, response._norms, response.activations
    h, w = state.patch_size
    t_hat = state.t_hat
    live = norms > 0
    nz = np.flatnonzero((weights != 0) & live)

    grad_f = np.zeros_like(feat)
    if nz.size == 0:
        return grad_f
    if nz.size <= _SPARSE_LIMIT:
        nw = weights.shape[1]
        for idx in nz:
            dy, dx = divmod(int(idx), nw)
            wi, ni, yi = weights.flat[idx], norms.flat[idx], y.flat[idx]
            patch = feat[dy:dy + h, dx:dx + w]
            p_hat = (patch - response._means.flat[idx]) / ni
            grad_f[dy:dy + h, dx:dx + w] += (wi / ni) * (t_hat - yi * p_hat)
    else:
        a = np.zeros_like(weights)
        c = np.zeros_like(weights)
        np.divide(weights, norms, out=a, where=live)
        np.divide(weights * y, norms * norms, out=c, where=live)
        term1 = signal.fftconvolve(a[:, :, None], t_hat, mode="full", axes=(0, 1))
        # windows of size (h, w) containing each pixel: a 'full' box filter
        box_c = _full_box(c, h, w)
        box_cm = _full_box(c * response._means, h, w)
        grad_f = term1 - (feat * box_c[:, :, None] - box_cm[:, :, None])
    return state.kernel.transpose(grad_f)


def _full_box(a: np.ndarray, h: int, w: int) -> np.ndarray:
    """``out[q] = sum of a[i]`` over grid offsets i whose h x w window covers q."""
    padded = np.zeros((a.shape[0] + 2 * (h - 1), a.shape[1] + 2 * (w - 1)))
    padded[h - 1:h - 1 + a.shape[0], w - 1:w - 1 + a.shape[1]] = a
    return _box_sums(padded, h, w)
