"""Attack one synthetic video with SPARK and with per-frame BIM, then compare.

    python3 demos/quickstart.py

Prints clean precision, then for each attack the targeted success rate,
the mean absolute perturbation inside the search region and the average
number of gradient iterations per frame. A single video is a noisy sample;
the suite averages come from `advtrack run`.
"""

from advtrack import scenes
from advtrack import tracker as trk
from advtrack.basic import BasicAttackConfig, BasicAttacker
from advtrack.metrics import precision, run_metrics
from advtrack.runs import run_online
from advtrack.spark import SparkAttacker, SparkConfig

CONTEXT = 3.0

video = scenes.suite_video(0)
kernel = trk.FeatureKernel("identity")

state = trk.init(video.frames[0], video.gt[0], kernel, CONTEXT)
preds = [video.gt[0]]
for frame in video.frames[1:]:
    state, box, _ = trk.track(state, frame)
    preds.append(box)
print(f"clean precision: {precision(preds, video.gt):.3f}")

attackers = {
    "SPARK": SparkAttacker(SparkConfig(), kernel, "ta"),
    "BA-E (BIM)": BasicAttacker(BasicAttackConfig(method="bim", schedule="ba_e"), kernel, len(video)),
}
for name, attacker in attackers.items():
    run = run_online(video, attacker, "ta", kernel, video.targets, CONTEXT, name=name)
    m = run_metrics(run, 0.0)
    print(f"{name:11s} success {m.succ_rate:.3f}  MAP {m.map:.3f}  iterations/frame {m.mean_iterations:.2f}")
