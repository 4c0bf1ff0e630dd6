"""Deterministic synthetic videos: a textured object random-walking over a background.

Frames are integer-valued (so they survive a PPM round trip) and every
random draw comes from a Philox stream keyed by the scene seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from . import frames
from .errors import ConfigInvalid
from .geometry import BBox, Point
from .rng import derive_seed, make_rng

TEXTURES = ("checker", "noise", "gradient")
BACKGROUNDS = ("flat", "noise", "drift")


@dataclass
class SceneConfig:
    frame_h: int = 160
    frame_w: int = 160
    object_w: int = 32
    object_h: int = 32
    num_frames: int = 100
    motion_step_max: int = 4
    texture_kind: str = "noise"
    background_kind: str = "flat"
    noise_sigma: float = 2.0
    object_contrast: float = 1.65
    background_contrast: float = 12.0
    object_offset: float = 8.0
    texture_scale: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.texture_kind not in TEXTURES:
            raise ConfigInvalid(f"texture_kind must be one of {TEXTURES}")
        if self.background_kind not in BACKGROUNDS:
            raise ConfigInvalid(f"background_kind must be one of {BACKGROUNDS}")
        if self.num_frames < 2:
            raise ConfigInvalid("num_frames must be >= 2")
        if min(self.object_w, self.object_h) < 1:
            raise ConfigInvalid("object must be at least 1x1")
        if self.frame_w < 3 * self.object_w or self.frame_h < 3 * self.object_h:
            raise ConfigInvalid("frame must leave an object-sized margin on each side of the object")
        if self.motion_step_max < 0 or self.noise_sigma < 0:
            raise ConfigInvalid("motion_step_max and noise_sigma must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Video:
    frames: list
    gt: list
    config: SceneConfig | None = None
    targets: list | None = field(default=None)

    def __len__(self) -> int:
        return len(self.frames)


def _smooth_noise(rng, shape, sigma, std):
    """Zero-mean noise with standard deviation ``std``; ``sigma`` = 0 leaves it white."""
    field_ = rng.standard_normal(shape)
    if sigma > 0:
        field_ = ndimage.gaussian_filter(field_, sigma=(sigma, sigma, 0), mode="wrap")
    field_ -= field_.mean(axis=(0, 1))
    s = field_.std()
    return field_ * (std / s if s > 0 else 0.0)


def _texture(cfg: SceneConfig, rng, bg_level: float) -> np.ndarray:
    h, w = cfg.object_h, cfg.object_w
    # brightness offset of magnitude in [offset/2, offset] keeps every object visible
    offset = rng.uniform(0.5, 1.0) * cfg.object_offset * rng.choice([-1.0, 1.0])
    base = bg_level + offset
    if cfg.texture_kind == "checker":
        cell = max(2, min(h, w) // 4)
        yy, xx = np.mgrid[0:h, 0:w]
        board = ((yy // cell + xx // cell) % 2) * 2.0 - 1.0
        tex = np.repeat(board[:, :, None], 3, axis=2) * cfg.object_contrast
    elif cfg.texture_kind == "noise":
        tex = _smooth_noise(rng, (h, w, 3), cfg.texture_scale, cfg.object_contrast)
    else:
        yy, xx = np.mgrid[0:h, 0:w]
        angle = rng.uniform(0, 2 * np.pi)
        ramp = (np.cos(angle) * (xx - w / 2) + np.sin(angle) * (yy - h / 2)) / (max(h, w) / 2)
        ripple = np.sin(2 * np.pi * (xx + yy) / max(4, min(h, w) / 2))
        tex = np.repeat((ramp + 0.5 * ripple)[:, :, None], 3, axis=2) * cfg.object_contrast
    return base + tex


def _background(cfg: SceneConfig, rng) -> tuple:
    H, W = cfg.frame_h, cfg.frame_w
    level = rng.uniform(90, 160)
    base = np.full(3, level)
    if cfg.background_kind == "flat":
        return np.broadcast_to(base, (H, W, 3)).copy(), None, (0, 0), level
    if cfg.background_kind == "noise":
        return base + _smooth_noise(rng, (H, W, 3), 2.0, cfg.background_contrast), None, (0, 0), level
    canvas = base + _smooth_noise(rng, (2 * H, 2 * W, 3), 3.0, cfg.background_contrast)
    velocity = tuple(int(v) for v in rng.choice([-1, 1], size=2))
    return canvas, canvas, velocity, level


def _reflect(pos: int, lo: int, hi: int) -> int:
    span = hi - lo
    if span <= 0:
        return lo
    k = (pos - lo) % (2 * span)
    return lo + (k if k <= span else 2 * span - k)


def generate(config: SceneConfig) -> Video:
    """Render a video; identical configs give bit-identical videos."""
    config.validate()
    rng = make_rng(config.seed)
    H, W = config.frame_h, config.frame_w
    h, w = config.object_h, config.object_w
    bg, canvas, vel, level = _background(config, rng)
    tex = _texture(config, rng, level)

    # object top-left corner, kept at least one object size from the borders at start
    x_lo, x_hi = 0, W - w
    y_lo, y_hi = 0, H - h
    x = int(rng.integers(w, W - 2 * w + 1))
    y = int(rng.integers(h, H - 2 * h + 1))
    m = config.motion_step_max

    out_frames, gts = [], []
    for t in range(config.num_frames):
        if t > 0 and m > 0:
            dx, dy = (int(v) for v in rng.integers(-m, m + 1, size=2))
            x = _reflect(x + dx, x_lo, x_hi)
            y = _reflect(y + dy, y_lo, y_hi)
        if canvas is not None:
            ox = (t * vel[0]) // 2 % W
            oy = (t * vel[1]) // 2 % H
            frame = canvas[oy:oy + H, ox:ox + W].copy()
        else:
            frame = bg.copy()
        frame[y:y + h, x:x + w] = tex
        if config.noise_sigma > 0:
            frame += rng.normal(0.0, config.noise_sigma, size=frame.shape)
        out_frames.append(np.clip(np.floor(frame + 0.5), 0.0, 255.0))
        gts.append(BBox(x + w / 2, y + h / 2, float(w), float(h)))
    return Video(out_frames, gts, config)


def target_trajectory(start: Point, T: int, seed: int, frame_w: float = 160.0,
                      frame_h: float = 160.0, margin: float = 16.0,
                      step_min: float = 1.0, step_max: float = 10.0) -> list[Point]:
    """Random targeted trajectory.

    Each step moves ``U[step_min, step_max]`` per axis with an independent
    random sign. A step that would leave ``[margin, size - margin]`` is
    reflected by flipping its sign, so step magnitudes are never altered.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = make_rng(seed)
    pts = [start]
    x, y = start.x, start.y
    for _ in range(T - 1):
        mag = rng.uniform(step_min, step_max, size=2)
        sign = rng.choice([-1.0, 1.0], size=2)
        x = _bounce(x, sign[0] * mag[0], margin, frame_w - margin)
        y = _bounce(y, sign[1] * mag[1], margin, frame_h - margin)
        pts.append(Point(float(x), float(y)))
    return pts


def _bounce(v: float, step: float, lo: float, hi: float) -> float:
    if not lo <= v + step <= hi:
        step = -step
    return v + step


def suite_video(index: int, base: SceneConfig | None = None, master_seed: int = 0) -> Video:
    """Video ``index`` of the suite keyed by ``master_seed``, with its target trajectory."""
    base = base or SceneConfig()
    cfg = SceneConfig(**{**base.to_dict(), "seed": derive_seed(master_seed, "scene", index)})
    v = generate(cfg)
    g0 = v.gt[0]
    v.targets = target_trajectory(Point(g0.cx, g0.cy), cfg.num_frames,
                                  derive_seed(master_seed, "trajectory", index),
                                  cfg.frame_w, cfg.frame_h, cfg.object_w / 2)
    return v


def make_suite(count: int = 20, base: SceneConfig | None = None, master_seed: int = 0) -> list[Video]:
    """``count`` videos from ``base`` with per-video seeds and target trajectories."""
    return [suite_video(i, base, master_seed) for i in range(count)]


def save_suite(videos: list[Video], path, master_seed: int | None = None) -> None:
    """Write ``<path>/video_XXX/frame_XXXX.ppm`` plus ``<path>/manifest.json``."""
    os.makedirs(path, exist_ok=True)
    manifest = {"master_seed": master_seed, "videos": []}
    for i, v in enumerate(videos):
        vdir = os.path.join(path, f"video_{i:03d}")
        os.makedirs(vdir, exist_ok=True)
        for t, f in enumerate(v.frames):
            frames.save_ppm(os.path.join(vdir, f"frame_{t + 1:04d}.ppm"), f)
        manifest["videos"].append({
            "dir": f"video_{i:03d}",
            "config": v.config.to_dict() if v.config else None,
            "seed": v.config.seed if v.config else None,
            "gt": [b.to_list() for b in v.gt],
            "trajectory": [[p.x, p.y] for p in v.targets] if v.targets else None,
        })
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def load_suite(path) -> list[Video]:
    with open(os.path.join(path, "manifest.json")) as fh:
        manifest = json.load(fh)
    videos = []
    for entry in manifest["videos"]:
        vdir = os.path.join(path, entry["dir"])
        n = len(entry["gt"])
        fr = [frames.load_ppm(os.path.join(vdir, f"frame_{t + 1:04d}.ppm")) for t in range(n)]
        cfg = SceneConfig(**entry["config"]) if entry.get("config") else None
        targets = [Point(*p) for p in entry["trajectory"]] if entry.get("trajectory") else None
        videos.append(Video(fr, [BBox(*b) for b in entry["gt"]], cfg, targets))
    return videos
