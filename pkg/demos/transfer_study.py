"""A small transfer matrix: SPARK crafted on one feature kernel, tested on another.

    python3 demos/transfer_study.py [out_dir]

Runs untargeted SPARK on 4 short videos for every (attacker, victim) pair
of three kernels and prints the precision-drop matrix with victims as
rows. Finished cells are cached in ``out_dir``, so a rerun only reduces.
"""

import sys

from advtrack import harness, scenes

KERNELS = ["identity", "box_blur_3", "center_surround"]

config = harness.ExperimentConfig(
    attacks=[harness.AttackSpec("SPARK", "spark", {}, objectives=["ua"],
                                kernel_pairs=[[a, v] for a in KERNELS for v in KERNELS])],
    objectives=["ua"],
    count=4,
    scene=scenes.SceneConfig(num_frames=60),
    out=sys.argv[1] if len(sys.argv) > 1 else "out/transfer_demo",
)

table = harness.run_suite(config, progress=lambda cid: print("done", cid, flush=True))
print()
print("precision drop (rows: victim kernel, columns: attacker kernel)")
print(table.transfer_csv("SPARK", "ua"), end="")
