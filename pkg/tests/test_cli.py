import json
import os
import subprocess
import sys

from advtrack import cli, harness

SMALL = {
    "count": 2, "objectives": ["ua"],
    "scene": {"frame_h": 96, "frame_w": 96, "object_w": 16, "object_h": 16, "num_frames": 14},
    "attacks": [{"name": "SPARK", "method": "spark", "params": {}}],
}


def write_config(tmp_path, d=SMALL):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(d))
    return str(p)


def tree_bytes(root):
    out = {}
    for d, _, files in os.walk(root):
        for f in files:
            p = os.path.join(d, f)
            out[os.path.relpath(p, root)] = open(p, "rb").read()
    return out


def test_gen_twice_identical(tmp_path):
    cfg = write_config(tmp_path)
    assert cli.main(["gen", "--config", cfg, "--seed", "7", "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["gen", "--config", cfg, "--seed", "7", "--out", str(tmp_path / "b")]) == 0
    a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
    assert a == b and "manifest.json" in a and len(a) == 1 + 2 * 14


def test_run_then_report_roundtrip(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = str(tmp_path / "out")
    assert cli.main(["run", "--config", cfg, "--out", out, "--quiet"]) == 0
    printed = capsys.readouterr().out
    in_process = harness.reduce_results(harness.ExperimentConfig.from_dict({**SMALL, "out": out}))
    assert printed == in_process.to_csv()
    assert cli.main(["report", "--out", out, "--plots"]) == 0
    report = capsys.readouterr().out
    assert report.startswith(in_process.to_csv())
    cell = harness.Cell("SPARK", "ua", "identity", "identity", 0).id
    assert os.path.exists(os.path.join(out, cell, "distance.svg"))
    assert os.path.exists(os.path.join(out, cell, "series.csv"))


def test_gradcheck_command(capsys):
    assert cli.main(["gradcheck", "--trials", "8"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_usage_errors_exit_nonzero(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"count": 0}')
    assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    r = subprocess.run([sys.executable, "-m", "advtrack", "frobnicate"], capture_output=True)
    assert r.returncode != 0 and b"invalid choice" in r.stderr


def test_console_entry_point_runs(tmp_path):
    r = subprocess.run([sys.executable, "-m", "advtrack", "gradcheck", "--trials", "4"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "l21" in r.stdout
