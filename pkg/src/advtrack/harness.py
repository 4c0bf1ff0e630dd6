"""Experiment grids: cells, execution, persistence and the result table.

A *cell* is one (video, attack, objective, attacker kernel, victim kernel)
combination; the clean tracker gets one cell per (video, victim kernel).
Cells are independent, so they run in any order on any number of workers.
Every cell writes ``<out>/<cell-id>/metrics.json`` when it finishes and is
skipped on a rerun if that file exists. The table is always rebuilt from
those files in sorted cell order, which makes it independent of scheduling.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import traceback
from dataclasses import asdict, dataclass, field
from multiprocessing import get_context

import numpy as np

from . import frames
from . import tracker as trk
from .basic import BasicAttackConfig, BasicAttacker
from .errors import ConfigInvalid
from .metrics import precision, run_metrics
from .rng import derive_seed
from .runs import run_online
from .scenes import SceneConfig, suite_video
from .spark import SparkAttacker, SparkConfig

METHODS = ("spark", "basic")
OBJECTIVES = ("ua", "ta")
MAP_MODES = ("region", "frame")
CLEAN = "clean"

COLUMNS = ["attack", "objective", "attacker_kernel", "victim_kernel", "videos", "failed",
           "org_prec", "precision", "prec_drop", "succ_rate", "map", "mean_iter"]


@dataclass
class AttackSpec:
    name: str
    method: str = "spark"
    params: dict = field(default_factory=dict)
    objectives: list | None = None         # None: the experiment's objectives
    kernel_pairs: list | None = None       # None: the experiment's kernel pairs

    def build_config(self, seed: int):
        if self.method == "spark":
            return SparkConfig(**self.params)
        return BasicAttackConfig(**{**self.params, "seed": seed})


@dataclass
class ExperimentConfig:
    attacks: list = field(default_factory=list)
    objectives: list = field(default_factory=lambda: ["ua", "ta"])
    kernel_pairs: list = field(default_factory=lambda: [["identity", "identity"]])
    count: int = 20
    scene: SceneConfig = field(default_factory=SceneConfig)
    master_seed: int = 0
    context_factor: float = 3.0
    map_mode: str = "region"
    out: str = "out"
    workers: int = 1
    dump_perturbations: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        try:
            d["scene"] = SceneConfig(**d.get("scene", {}))
            d["attacks"] = [AttackSpec(**a) for a in d.get("attacks", [])]
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from None
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        self.scene.validate()
        if self.count < 1:
            raise ConfigInvalid("count must be >= 1")
        if not self.objectives or set(self.objectives) - set(OBJECTIVES):
            raise ConfigInvalid(f"objectives must be a nonempty subset of {OBJECTIVES}")
        if self.map_mode not in MAP_MODES:
            raise ConfigInvalid(f"map_mode must be one of {MAP_MODES}")
        if self.workers < 1:
            raise ConfigInvalid("workers must be >= 1")
        seen = {}
        for a in self.attacks:
            if a.method not in METHODS:
                raise ConfigInvalid(f"attack {a.name!r}: method must be one of {METHODS}")
            if "__" in a.name or "/" in a.name or a.name == CLEAN:
                raise ConfigInvalid(f"attack name {a.name!r} is reserved or contains '__' or '/'")
            key = (a.method, json.dumps(a.params, sort_keys=True))
            if seen.setdefault(a.name, key) != key:
                raise ConfigInvalid(f"attack {a.name!r} is defined twice with different settings")
            try:
                a.build_config(0)
            except (TypeError, ValueError) as exc:
                raise ConfigInvalid(f"attack {a.name!r}: {exc}") from None
            for obj in a.objectives or []:
                if obj not in OBJECTIVES:
                    raise ConfigInvalid(f"attack {a.name!r}: unknown objective {obj!r}")
        for ak, vk in self.all_pairs():
            for k in (ak, vk):
                if k not in trk.KERNEL_KINDS:
                    raise ConfigInvalid(f"unknown kernel {k!r}")

    def all_pairs(self) -> list:
        pairs = [tuple(p) for p in self.kernel_pairs]
        for a in self.attacks:
            pairs += [tuple(p) for p in a.kernel_pairs or []]
        return pairs

    def spec(self, name: str) -> AttackSpec:
        return next(a for a in self.attacks if a.name == name)


@dataclass(frozen=True, order=True)
class Cell:
    attack: str
    objective: str
    attacker_kernel: str
    victim_kernel: str
    video: int

    @property
    def id(self) -> str:
        return f"{self.attack}__{self.objective}__{self.attacker_kernel}-{self.victim_kernel}__v{self.video:03d}"

    def seed(self, master_seed: int) -> int:
        return derive_seed(master_seed, self.video, self.attack, self.objective,
                           self.attacker_kernel, self.victim_kernel)


def cells(config: ExperimentConfig) -> list[Cell]:
    """Every cell of the grid, clean cells included, in canonical order."""
    out = set()
    victims = set()
    for a in config.attacks:
        for obj in a.objectives or config.objectives:
            for ak, vk in a.kernel_pairs or config.kernel_pairs:
                victims.add(vk)
                out.update(Cell(a.name, obj, ak, vk, i) for i in range(config.count))
    victims.update(vk for _, vk in config.kernel_pairs)
    for vk in victims:
        out.update(Cell(CLEAN, "none", vk, vk, i) for i in range(config.count))
    return sorted(out)


# --- execution -----------------------------------------------------------

_VIDEO_CACHE: dict = {}


def _video(config: ExperimentConfig, index: int):
    key = (json.dumps(config.scene.to_dict(), sort_keys=True), config.master_seed, index)
    if key not in _VIDEO_CACHE:
        _VIDEO_CACHE.clear()
        _VIDEO_CACHE[key] = suite_video(index, config.scene, config.master_seed)
    return _VIDEO_CACHE[key]


def _clean_cell(config: ExperimentConfig, cell: Cell) -> dict:
    v = _video(config, cell.video)
    state = trk.init(v.frames[0], v.gt[0], trk.FeatureKernel(cell.victim_kernel), config.context_factor)
    preds = [v.gt[0]]
    for f in v.frames[1:]:
        state, box, _ = trk.track(state, f)
        preds.append(box)
    return {"precision": precision(preds, v.gt), "preds": [b.to_list() for b in preds]}


def _attack_cell(config: ExperimentConfig, cell: Cell, cell_dir: str) -> dict:
    v = _video(config, cell.video)
    spec = config.spec(cell.attack)
    seed = cell.seed(config.master_seed)
    attack_cfg = spec.build_config(seed)
    ak = trk.FeatureKernel(cell.attacker_kernel)
    if spec.method == "spark":
        attacker = SparkAttacker(attack_cfg, ak, cell.objective)
    else:
        attacker = BasicAttacker(attack_cfg, ak, len(v.frames))
    on_frame = _dumper(cell_dir) if config.dump_perturbations else None
    run = run_online(v, attacker, cell.objective, trk.FeatureKernel(cell.victim_kernel),
                     v.targets if cell.objective == "ta" else None, config.context_factor,
                     cell.attack, cell.video, seed, on_frame=on_frame)
    m = run_metrics(run, 0.0)
    return {
        "precision": m.precision,
        "succ_rate": m.succ_rate,
        "map": m.map,
        "map_frame": m.map_frame,
        "mean_iterations": m.mean_iterations,
        "attack_config": attack_cfg.to_dict(),
        "run": run.to_dict(),
    }


def _dumper(cell_dir: str):
    pert_dir = os.path.join(cell_dir, "perturbations")
    frame_dir = os.path.join(cell_dir, "frames")
    os.makedirs(pert_dir, exist_ok=True)
    os.makedirs(frame_dir, exist_ok=True)

    def dump(t, adv, pert):
        frames.save_grid(os.path.join(pert_dir, f"frame_{t:04d}.grid"), pert)
        frames.save_ppm(os.path.join(pert_dir, f"frame_{t:04d}.ppm"), frames.visualize_perturbation(pert))
        frames.save_ppm(os.path.join(frame_dir, f"frame_{t:04d}.ppm"), adv)
    return dump


def run_cell(config: ExperimentConfig, cell: Cell) -> dict:
    """Execute one cell and persist its ``metrics.json``; failures are recorded, not raised."""
    cell_dir = os.path.join(config.out, cell.id)
    os.makedirs(cell_dir, exist_ok=True)
    result = {"cell": asdict(cell), "id": cell.id, "seed": cell.seed(config.master_seed), "error": None}
    try:
        if cell.attack == CLEAN:
            result.update(_clean_cell(config, cell))
        else:
            result.update(_attack_cell(config, cell, cell_dir))
    except Exception as exc:  # a broken cell must not take the grid down
        result["error"] = f"{type(exc).__name__}: {exc}"
        result["traceback"] = traceback.format_exc()
    _write_json(os.path.join(cell_dir, "metrics.json"), result)
    return result


def _write_json(path: str, obj) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(_finite(obj), fh, sort_keys=True, separators=(",", ":"))
    os.replace(tmp, path)


def _finite(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.generic):
        return _finite(obj.item())
    return obj


def _run_cell_job(args):
    config, cell = args
    run_cell(config, cell)
    return cell.id


def run_suite(config: ExperimentConfig, progress=None) -> "ResultTable":
    """Run every missing cell of the grid, then build and write the result table."""
    config.validate()
    os.makedirs(config.out, exist_ok=True)
    _write_json(os.path.join(config.out, "config.json"), config.to_dict())
    todo = [c for c in cells(config) if not os.path.exists(os.path.join(config.out, c.id, "metrics.json"))]
    # grouped by video so each process regenerates a video once
    todo.sort(key=lambda c: (c.video, c))
    if config.workers > 1 and len(todo) > 1:
        with get_context("spawn").Pool(config.workers) as pool:
            for cid in pool.imap_unordered(_run_cell_job, [(config, c) for c in todo]):
                if progress:
                    progress(cid)
    else:
        for c in todo:
            run_cell(config, c)
            if progress:
                progress(c.id)
    table = reduce_results(config)
    table.write(config.out)
    return table


# --- reduce --------------------------------------------------------------

def load_cell(out: str, cell: Cell) -> dict | None:
    path = os.path.join(out, cell.id, "metrics.json")
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        return json.load(fh)


@dataclass
class ResultTable:
    rows: list
    transfer: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in COLUMNS])
        return buf.getvalue()

    def transfer_csv(self, attack: str, objective: str) -> str:
        m = self.transfer[f"{attack}/{objective}"]
        kernels = m["kernels"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["victim \\ attacker"] + kernels)
        for vk in kernels:
            w.writerow([vk] + [_fmt(m["prec_drop"][vk].get(ak)) for ak in kernels])
        return buf.getvalue()

    def write(self, out: str) -> None:
        with open(os.path.join(out, "results.csv"), "w") as fh:
            fh.write(self.to_csv())
        for key in self.transfer:
            attack, objective = key.split("/")
            with open(os.path.join(out, f"transfer_{attack}_{objective}.csv"), "w") as fh:
                fh.write(self.transfer_csv(attack, objective))
        _write_json(os.path.join(out, "summary.json"), {"rows": self.rows, "transfer": self.transfer})

    def row(self, attack: str, objective: str, attacker_kernel: str = "identity",
            victim_kernel: str | None = None) -> dict:
        victim_kernel = victim_kernel or attacker_kernel
        for r in self.rows:
            if (r["attack"], r["objective"], r["attacker_kernel"], r["victim_kernel"]) == \
                    (attack, objective, attacker_kernel, victim_kernel):
                return r
        raise KeyError((attack, objective, attacker_kernel, victim_kernel))

    @classmethod
    def read_csv(cls, path) -> list[dict]:
        with open(path) as fh:
            return list(csv.DictReader(fh))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def _mean(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def reduce_results(config: ExperimentConfig) -> ResultTable:
    """Aggregate stored cells into suite-level rows (single-threaded, canonical order).

    Rates and MAP are per-video values averaged over the videos of a row;
    the precision drop of a video is measured against the clean tracker
    with the victim's kernel on the same video. Cells that failed or have
    not run are counted in ``failed`` and left out of the averages.
    """
    groups: dict = {}
    for c in cells(config):
        groups.setdefault((c.attack, c.objective, c.attacker_kernel, c.victim_kernel), []).append(c)

    clean = {}
    rows = []
    for (attack, objective, ak, vk), members in sorted(groups.items(), key=lambda kv: kv[0][0] != CLEAN):
        loaded = [(c, load_cell(config.out, c)) for c in members]
        ok = [(c, r) for c, r in loaded if r is not None and r.get("error") is None]
        failed = len(members) - len(ok)
        row = {"attack": attack, "objective": objective, "attacker_kernel": ak, "victim_kernel": vk,
               "videos": len(ok), "failed": failed}
        if attack == CLEAN:
            for c, r in ok:
                clean[(vk, c.video)] = r["precision"]
            org = _mean([r["precision"] for _, r in ok])
            row.update(org_prec=org, precision=org, prec_drop=None, succ_rate=None, map=None, mean_iter=None)
        else:
            map_key = "map" if config.map_mode == "region" else "map_frame"
            drops = [clean[(vk, c.video)] - r["precision"] for c, r in ok if (vk, c.video) in clean]
            row.update(
                org_prec=_mean([clean.get((vk, c.video)) for c, _ in ok]),
                precision=_mean([r["precision"] for _, r in ok]),
                prec_drop=_mean(drops),
                succ_rate=_mean([r["succ_rate"] for _, r in ok]) if objective == "ta" else None,
                map=_mean([r[map_key] for _, r in ok]),
                mean_iter=_mean([r["mean_iterations"] for _, r in ok]),
            )
        rows.append(row)

    rows.sort(key=lambda r: (r["attack"] != CLEAN, r["attack"], r["objective"],
                             r["attacker_kernel"], r["victim_kernel"]))
    return ResultTable(rows, _transfer(rows))


def _transfer(rows: list) -> dict:
    """Prec. drop matrices (victims as rows) for every attack/objective run on several kernel pairs."""
    out = {}
    by_key: dict = {}
    for r in rows:
        if r["attack"] != CLEAN:
            by_key.setdefault(f"{r['attack']}/{r['objective']}", []).append(r)
    for key, rs in sorted(by_key.items()):
        if len(rs) < 2:
            continue
        kernels = sorted({r["attacker_kernel"] for r in rs} | {r["victim_kernel"] for r in rs},
                         key=trk.KERNEL_KINDS.index)
        matrix = {vk: {} for vk in kernels}
        for r in rs:
            matrix[r["victim_kernel"]][r["attacker_kernel"]] = r["prec_drop"]
        out[key] = {"kernels": kernels, "prec_drop": matrix}
    return out


def cell_runs(config: ExperimentConfig, attack: str, objective: str,
              attacker_kernel: str = "identity", victim_kernel: str | None = None) -> list[dict]:
    """Stored per-frame run records of one row, in video order (failed cells skipped)."""
    victim_kernel = victim_kernel or attacker_kernel
    runs = []
    for i in range(config.count):
        r = load_cell(config.out, Cell(attack, objective, attacker_kernel, victim_kernel, i))
        if r is not None and r.get("error") is None:
            runs.append(r["run"])
    return runs


def acceptance_config(out: str | None = None) -> ExperimentConfig:
    """The packaged grid behind the acceptance suite (20 default videos)."""
    path = os.path.join(os.path.dirname(__file__), "data", "acceptance.json")
    cfg = ExperimentConfig.load(path)
    if out is not None:
        cfg.out = out
    return cfg
