"""Per-frame plots of one targeted SPARK run.

    python3 demos/plot_run.py [out_dir]

Writes ``series.csv`` (one row per frame) and three SVGs drawn from it:
distance to the target point, mean absolute perturbation, and the
objective per iteration around the round-opening frames.
"""

import os
import sys

from advtrack import plots, scenes
from advtrack import tracker as trk
from advtrack.runs import run_online
from advtrack.spark import SparkAttacker, SparkConfig

out = sys.argv[1] if len(sys.argv) > 1 else "out/plot_demo"
os.makedirs(out, exist_ok=True)

video = scenes.suite_video(3)
kernel = trk.FeatureKernel()
run = run_online(video, SparkAttacker(SparkConfig(), kernel, "ta"), "ta", kernel, video.targets, 3.0)

series = os.path.join(out, "series.csv")
plots.write_series_csv(run, series)
for path in plots.plot_run(series, out, plots.select_loss_frames(run)):
    print("wrote", path)
