"""Command line: ``advtrack {gen,run,report,gradcheck}``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import gradcheck, harness, plots
from .errors import AdvTrackError
from .scenes import make_suite, save_suite


def _load_config(args, default=harness.ExperimentConfig) -> harness.ExperimentConfig:
    if args.config:
        cfg = harness.ExperimentConfig.load(args.config)
    else:
        cfg = default()
    if getattr(args, "seed", None) is not None:
        cfg.master_seed = args.seed
    if getattr(args, "out", None):
        cfg.out = args.out
    if getattr(args, "workers", None):
        cfg.workers = args.workers
    if getattr(args, "dump_perturbations", False):
        cfg.dump_perturbations = True
    cfg.validate()
    return cfg


def cmd_gen(args) -> int:
    cfg = _load_config(args)
    videos = make_suite(cfg.count, cfg.scene, cfg.master_seed)
    save_suite(videos, cfg.out, cfg.master_seed)
    print(f"wrote {len(videos)} videos to {cfg.out}")
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args, harness.acceptance_config)
    done = [0]
    start = time.time()

    def progress(cell_id):
        done[0] += 1
        if not args.quiet:
            print(f"[{done[0]} done, {time.time() - start:.0f}s] {cell_id}", flush=True)

    table = harness.run_suite(cfg, progress)
    print(table.to_csv(), end="")
    return 1 if any(r["failed"] for r in table.rows) else 0


def cmd_report(args) -> int:
    out = args.out or "out"
    path = args.config or os.path.join(out, "config.json")
    with open(path) as fh:
        cfg = harness.ExperimentConfig.from_dict(json.load(fh))
    cfg.out = out
    table = harness.reduce_results(cfg)
    table.write(out)
    print(table.to_csv(), end="")
    for key in table.transfer:
        attack, objective = key.split("/")
        print(f"\nprecision drop, {attack} {objective} (rows: victim kernel)")
        print(table.transfer_csv(attack, objective), end="")
    if args.plots:
        written = report_plots(cfg, args.plot_videos)
        print(f"\nwrote {written} plot files under {out}")
    return 0


def report_plots(cfg: harness.ExperimentConfig, videos: int = 1) -> int:
    """Series CSVs and SVG plots for the first ``videos`` videos of every attack row."""
    written = 0
    for c in harness.cells(cfg):
        if c.attack == harness.CLEAN or c.video >= videos:
            continue
        r = harness.load_cell(cfg.out, c)
        if r is None or r.get("error"):
            continue
        cell_dir = os.path.join(cfg.out, c.id)
        series = os.path.join(cell_dir, "series.csv")
        plots.write_series_csv(r["run"], series)
        traces = plots.select_loss_frames(r["run"])
        written += len(plots.plot_run(series, cell_dir, traces if any(traces.values()) else None)) + 1
    return written


def cmd_gradcheck(args) -> int:
    start = time.time()
    results = gradcheck.run(args.trials, args.seed or 0)
    worst = gradcheck.summarize(results)
    for name, err in sorted(worst.items()):
        print(f"{name:6s} max rel err {err:.3e}")
    print(f"{len(results)} trials in {time.time() - start:.1f}s")
    ok = all(e < gradcheck.TOLERANCE for e in worst.values())
    print("PASS" if ok else f"FAIL (tolerance {gradcheck.TOLERANCE:g})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="advtrack", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default=None):
        sp.add_argument("--config", help="experiment config (JSON)")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--out", default=out_default, help="output directory")

    g = sub.add_parser("gen", help="write a scene suite as PPM frames plus manifest.json")
    common(g, "suite")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="execute an experiment config (default: the acceptance grid)")
    common(r)
    r.add_argument("--workers", type=int, help="worker processes")
    r.add_argument("--dump-perturbations", action="store_true",
                   help="save per-frame perturbations (.grid + heatmap PPM) and adversarial frames")
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="rebuild tables (and plots) from a stored run")
    common(rep)
    rep.add_argument("--plots", action="store_true", help="also write series CSVs and SVG plots")
    rep.add_argument("--plot-videos", type=int, default=1, help="videos per row to plot")
    rep.set_defaults(func=cmd_report)

    gc = sub.add_parser("gradcheck", help="finite-difference checks of the analytic gradients")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--trials", type=int, default=24)
    gc.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (AdvTrackError, OSError, json.JSONDecodeError) as exc:
        print(f"advtrack {args.command}: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("interrupted; finished cells are kept and will be skipped on rerun", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
