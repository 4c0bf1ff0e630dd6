"""Central finite-difference checks of the analytic gradients.

Each trial draws a random textured search region, a kernel and an
objective, freezes the candidate pair the objective selects at the base
point, and compares the analytic directional derivative with a central
difference along random directions. The L2,1 trials do the same for the
group-norm subgradient on a random increment buffer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tracker as trk
from .geometry import BBox, Point
from .objectives import f_ta, f_ua
from .rng import derive_seed, make_rng
from .spark import IncrementBuffer, l21_norm, l21_subgradient

TOLERANCE = 1e-4


@dataclass
class Trial:
    name: str
    kernel: str
    rel_err: float


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-12)


def _directional(f, x, grad, rng, directions: int, h: float) -> float:
    worst = 0.0
    for _ in range(directions):
        d = rng.standard_normal(x.shape)
        d /= np.linalg.norm(d)
        numeric = (f(x + h * d) - f(x - h * d)) / (2 * h)
        worst = max(worst, _rel(float(np.sum(grad * d)), numeric))
    return worst


def objective_trial(seed: int, kind: str, kernel: str, directions: int = 3, h: float = 1e-3) -> Trial:
    """One random (region, objective, kernel) check; returns the worst relative error."""
    rng = make_rng(seed)
    tw = th = 8
    side = 24
    frame = rng.uniform(20.0, 235.0, size=(side + 8, side + 8, 3))
    box = BBox(side / 2 + 4, side / 2 + 4, tw, th)
    state = trk.init(frame, box, trk.FeatureKernel(kernel), side / tw)
    region = frame[4:4 + side, 4:4 + side] + rng.normal(0.0, 3.0, size=(side, side, 3))
    origin = Point(4.0, 4.0)
    gt = BBox(box.cx, box.cy, tw, th)
    resp = trk.respond(state, region, origin)
    if kind == "ua":
        ev = f_ua(resp, gt)
    else:
        corner = Point(origin.x + tw / 2 + rng.integers(0, 4), origin.y + th / 2 + rng.integers(0, 4))
        ev = f_ta(resp, corner, gt)
    weights = ev.grad_weights

    def margin(x):
        return float(np.sum(weights * trk.respond(state, x, origin).activations))

    grad = trk.grad_activations(state, region, weights)
    return Trial(f"f_{kind}", kernel, _directional(margin, region, grad, rng, directions, h))


def l21_trial(seed: int, directions: int = 3, h: float = 1e-6) -> Trial:
    rng = make_rng(seed)
    shape = (6, 6, 3)
    history = [rng.normal(0.0, 1.0, shape) for _ in range(int(rng.integers(0, 4)))]
    newest = rng.normal(0.0, 1.0, shape)

    def norm_with(eps):
        buf = IncrementBuffer()
        for e in history + [eps]:
            buf.push(e)
        return l21_norm(buf)

    buf = IncrementBuffer()
    for e in history + [newest]:
        buf.push(e)
    grad = l21_subgradient(buf)
    return Trial("l21", "-", _directional(norm_with, newest, grad, rng, directions, h))


def run(trials: int = 24, seed: int = 0) -> list[Trial]:
    """``trials`` objective checks cycling through kernels and both objectives, plus L2,1 checks."""
    out = []
    for i in range(trials):
        kernel = trk.KERNEL_KINDS[i % len(trk.KERNEL_KINDS)]
        kind = ("ua", "ta")[(i // len(trk.KERNEL_KINDS)) % 2]
        out.append(objective_trial(derive_seed(seed, "gradcheck", i), kind, kernel))
    for i in range(max(4, trials // 4)):
        out.append(l21_trial(derive_seed(seed, "l21", i)))
    return out


def summarize(results: list[Trial]) -> dict:
    """Worst relative error per checked quantity."""
    worst = {}
    for r in results:
        worst[r.name] = max(worst.get(r.name, 0.0), r.rel_err)
    return worst
