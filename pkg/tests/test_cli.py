import csv
import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from cvborn import cli
from cvborn.cli import fit_log_slope, list_presets, main, read_preset, summary_path, write_atomic
from cvborn.config import parse_config

VACUUM = """\
command: sample
modes: 2
cutoff: 4
seed: 99
output: {out}
sample:
  shots: 10
"""

TRAIN = """\
command: train
modes: 1
cutoff: 10
seed: 5
output: {out}
circuit:
  - {{gate: Displacement, modes: [0], weight: 0}}
train:
  shots: 40
  iterations: 4
  learning_rate: 0.05
  target_weights: [0.6]
  baseline_repeats: 5
"""


def write_config(tmp_path, template, name="run"):
    path = tmp_path / f"{name}.yaml"
    path.write_text(template.format(out=tmp_path / f"{name}.csv"))
    return path


def drop_column(text, name):
    rows = list(csv.reader(text.splitlines()))
    keep = [i for i, h in enumerate(rows[0]) if h != name]
    return [[r[i] for i in keep] for r in rows]


def test_sample_is_byte_identical(tmp_path):
    outputs = []
    for name in ("a", "b"):
        cfg = write_config(tmp_path, VACUUM, name)
        assert main(["sample", str(cfg)]) == 0
        outputs.append((tmp_path / f"{name}.csv").read_bytes())
    assert outputs[0] == outputs[1]
    lines = outputs[0].decode().splitlines()
    assert lines[0] == "x0,x1"
    assert len(lines) == 11
    summary = json.loads(summary_path(tmp_path / "a.csv").read_text())
    assert summary["shots"] == 10 and summary["modes"] == 2
    assert summary["truncation_leakage"] == pytest.approx(0.0, abs=1e-14)


def test_seed_override_changes_samples(tmp_path):
    cfg = write_config(tmp_path, VACUUM)
    assert main(["sample", str(cfg)]) == 0
    first = (tmp_path / "run.csv").read_text()
    other = tmp_path / "other.csv"
    assert main(["sample", str(cfg), "--seed", "100", "-o", str(other)]) == 0
    assert other.read_text() != first


def test_train_is_deterministic_apart_from_wall_time(tmp_path):
    tables = []
    for name in ("a", "b"):
        cfg = write_config(tmp_path, TRAIN, name)
        assert main(["train", str(cfg)]) == 0
        text = (tmp_path / f"{name}.csv").read_text()
        assert text.splitlines()[0] == "iteration,loss,w0,wall_time_s"
        tables.append(drop_column(text, "wall_time_s"))
    assert tables[0] == tables[1]
    assert len(tables[0]) == 1 + 5
    summary = json.loads(summary_path(tmp_path / "a.csv").read_text())
    assert summary["target_weights"] == [0.6]
    assert summary["baseline_repeats"] == 5
    assert math.isfinite(summary["min_loss"])


def test_bad_config_exits_one(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(VACUUM.replace("cutoff: 4", "cutoff: 0").format(out=tmp_path / "x.csv"))
    assert main(["sample", str(cfg)]) == 1
    err = capsys.readouterr().err
    assert "line 3" in err and "cutoff" in err
    assert not (tmp_path / "x.csv").exists()


def test_missing_file_and_command_mismatch(tmp_path):
    assert main(["sample", str(tmp_path / "absent.yaml")]) == 1
    cfg = write_config(tmp_path, VACUUM)
    assert main(["train", str(cfg)]) == 1
    assert main(["run", str(cfg)]) == 0


def test_simulation_error_exits_two(tmp_path, capsys):
    text = VACUUM + "circuit:\n  - {{gate: Displacement, modes: [0], r: 2.0}}\n"
    cfg = write_config(tmp_path, text)
    assert main(["sample", str(cfg)]) == 2
    assert "leakage" in capsys.readouterr().err


def test_presets_are_valid(capsys):
    names = list_presets()
    assert {"sample_vacuum", "sample_2mode", "train_2mode", "train_3mode", "train_4mode", "benchmark"} <= set(names)
    for name in names:
        parse_config(read_preset(name))
    assert main(["presets"]) == 0
    assert capsys.readouterr().out.split() == names
    assert main(["presets", "sample_vacuum"]) == 0
    assert "command: sample" in capsys.readouterr().out
    assert main(["presets", "nonexistent"]) == 1


def test_preset_run(tmp_path):
    out = tmp_path / "vac.csv"
    assert main(["sample", "--preset", "sample_vacuum", "-o", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 101


def test_write_atomic_leaves_no_temp_files(tmp_path):
    target = tmp_path / "sub" / "f.txt"
    write_atomic(target, "one\n")
    write_atomic(target, "two\n")
    assert target.read_text() == "two\n"
    assert os.listdir(target.parent) == ["f.txt"]


def test_write_atomic_keeps_old_file_on_failure(tmp_path, monkeypatch):
    target = tmp_path / "f.txt"
    write_atomic(target, "old\n")

    def boom(*args):
        raise OSError("disk full")

    monkeypatch.setattr(cli.os, "replace", boom)
    with pytest.raises(OSError):
        write_atomic(target, "new\n")
    assert target.read_text() == "old\n"
    assert os.listdir(tmp_path) == ["f.txt"]


def test_fit_log_slope():
    modes = np.arange(2, 7)
    slope, r2 = fit_log_slope(modes, 3.0 * np.exp(1.3 * modes))
    assert slope == pytest.approx(1.3, abs=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_benchmark_small(tmp_path):
    cfg = tmp_path / "bench.yaml"
    cfg.write_text(
        f"command: benchmark\ncutoff: 4\noutput: {tmp_path / 'b.csv'}\n"
        "benchmark: {min_modes: 1, max_modes: 2, shots: 5, iterations: 2, warmup: 1}\n"
    )
    assert main(["benchmark", str(cfg)]) == 0
    rows = (tmp_path / "b.csv").read_text().splitlines()
    assert rows[0] == "modes,mean_seconds,std_seconds"
    assert [r.split(",")[0] for r in rows[1:]] == ["1", "2"]
    summary = json.loads(summary_path(tmp_path / "b.csv").read_text())
    assert "slope" in summary and "r_squared" in summary


def test_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "many")
    cfg = write_config(tmp_path, VACUUM)
    assert main(["sample", str(cfg)]) == 1


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path, VACUUM)
    proc = subprocess.run([sys.executable, "-m", "cvborn", "sample", str(cfg)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "run.csv").exists()


def test_single_mode_benchmark_is_quick(tmp_path):
    cfg = tmp_path / "bench1.yaml"
    cfg.write_text(
        f"command: benchmark\ncutoff: 7\noutput: {tmp_path / 'b1.csv'}\n"
        "benchmark: {min_modes: 1, max_modes: 1, shots: 100}\n"
    )
    start = time.monotonic()
    assert main(["benchmark", str(cfg)]) == 0
    assert time.monotonic() - start < 10
