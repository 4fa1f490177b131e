import json
import os
import subprocess
import sys

import pytest

from lifelong2d.cli import main
from lifelong2d.taskworld import load_suite

TINY = """
[suite]
n_tasks = 2
demos_per_task = 3
[encoders]
d_v = 8
d_l = 8
[policy]
window = 3
hidden = 8
modes = 2
[train]
epochs = 1
eval_every = 0
[memory]
per_task = 2
[adapt]
mode = selective
quiz_episodes = 2
retrieve_frac = 0.5
adapt_epochs = 1
[eval]
episodes = 2
max_episode_len = 40
[run]
seeds = 1
"""


@pytest.fixture()
def tiny_ini(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY + f"out_dir = {tmp_path / 'runs'}\n", encoding="utf-8")
    return str(path)


def test_gen_suite_roundtrip(tmp_path):
    out = str(tmp_path / "suite.json")
    assert main(["gen-suite", "--family", "spatial", "--n-tasks", "3",
                 "--seed", "7", "--out", out]) == 0
    tasks = load_suite(out)
    assert len(tasks) == 3
    out2 = str(tmp_path / "suite2.json")
    main(["gen-suite", "--family", "spatial", "--n-tasks", "3",
          "--seed", "7", "--out", out2])
    with open(out, "rb") as a, open(out2, "rb") as b:
        assert a.read() == b.read()


def test_gen_suite_bad_family_is_config_error(tmp_path):
    code = main(["gen-suite", "--family", "underwater", "--n-tasks", "3",
                 "--seed", "7", "--out", str(tmp_path / "x.json")])
    assert code == 2


def test_collect_writes_jsonl(tmp_path):
    suite = str(tmp_path / "suite.json")
    main(["gen-suite", "--family", "spatial", "--n-tasks", "2",
          "--seed", "7", "--out", suite])
    out = str(tmp_path / "demos.jsonl")
    assert main(["collect", "--suite", suite, "--task", "0", "--n", "2",
                 "--seed", "3", "--out", out]) == 0
    with open(out, encoding="utf-8") as fh:
        lines = fh.readlines()
    assert len(lines) == 2
    demo = json.loads(lines[0])
    assert demo["eval_task_id"] == 0
    assert len(demo["actions"]) == len(demo["obs"])


def test_collect_bad_task_index(tmp_path):
    suite = str(tmp_path / "suite.json")
    main(["gen-suite", "--family", "spatial", "--n-tasks", "2",
          "--seed", "7", "--out", suite])
    assert main(["collect", "--suite", suite, "--task", "9",
                 "--out", str(tmp_path / "d.jsonl")]) == 2
    assert main(["collect", "--suite", suite, "--task", "0", "--lang-mode",
                 "bert", "--out", str(tmp_path / "d.jsonl")]) == 2


def test_run_and_report(tiny_ini, tmp_path, capsys):
    assert main(["run", "--config", tiny_ini]) == 0
    runs = os.path.join(os.path.dirname(tiny_ini), "runs")
    (run_dir,) = [os.path.join(runs, d) for d in os.listdir(runs)]
    assert os.path.exists(os.path.join(run_dir, "record.json"))
    assert os.path.exists(os.path.join(run_dir, "config.json"))
    assert os.path.exists(os.path.join(run_dir, "seed1", "summary.csv"))
    capsys.readouterr()
    assert main(["report", run_dir]) == 0
    out = capsys.readouterr().out
    assert "success rate" in out and "seed 1" in out


def test_train_disables_adaptation(tiny_ini):
    assert main(["train", "--config", tiny_ini]) == 0
    runs = os.path.join(os.path.dirname(tiny_ini), "runs")
    (run_dir,) = [os.path.join(runs, d) for d in os.listdir(runs)]
    with open(os.path.join(run_dir, "record.json"), encoding="utf-8") as fh:
        record = json.load(fh)
    assert record["method"] == "naive"
    assert record["seed_records"][0]["adapted_rates"] is None


def test_adapt_test_on_finished_seed_dir(tiny_ini, capsys):
    main(["train", "--config", tiny_ini])
    runs = os.path.join(os.path.dirname(tiny_ini), "runs")
    (run_dir,) = [os.path.join(runs, d) for d in os.listdir(runs)]
    seed_dir = os.path.join(run_dir, "seed1")
    capsys.readouterr()
    code = main(["adapt-test", "--config", tiny_ini, "--seed-dir", seed_dir,
                 "--task", "1", "--seed", "1"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["eval_task_id"] == 1
    assert 0.0 <= report["adapted_rate"] <= 1.0
    # adaptation switched off is a configuration error for this subcommand
    assert main(["adapt-test", "--config", tiny_ini, "--set", "adapt.mode=none",
                 "--seed-dir", seed_dir, "--task", "0", "--seed", "1"]) == 2
    assert main(["adapt-test", "--config", tiny_ini, "--seed-dir", seed_dir,
                 "--task", "9", "--seed", "1"]) == 2


def test_compare_cli(tiny_ini, tmp_path, capsys):
    main(["run", "--config", tiny_ini])
    main(["run", "--config", tiny_ini, "--set", "strategy.kind=er"])
    runs = os.path.join(os.path.dirname(tiny_ini), "runs")
    records = [os.path.join(runs, d, "record.json") for d in sorted(os.listdir(runs))]
    assert len(records) == 2
    capsys.readouterr()
    prefix = str(tmp_path / "cmp")
    assert main(["compare", *records, "--out-prefix", prefix]) == 0
    table = capsys.readouterr().out
    assert "er-wla" in table and "naive-wla" in table
    assert os.path.exists(prefix + ".csv")
    assert os.path.exists(prefix + ".txt")
    with open(prefix + ".csv", encoding="utf-8") as fh:
        assert fh.readline().startswith("method,label,")


def test_config_errors_exit_2(tmp_path):
    assert main(["run", "--config", "/nonexistent/conf.ini"]) == 2
    assert main(["run", "--set", "train.bogus=1"]) == 2
    assert main(["run", "--set", "no-equals-sign"]) == 2


def test_cell_failure_exits_3(tmp_path):
    ini = tmp_path / "packnet.ini"
    ini.write_text(
        TINY + f"out_dir = {tmp_path / 'runs'}\n"
        "[strategy]\nkind = packnet\npacknet_prune_frac = 0\n"
        "packnet_posttrain_epochs = 0\n",
        encoding="utf-8",
    )
    # prune fraction 0: task 0 claims every weight, task 1 finds no capacity
    assert main(["run", "--config", str(ini), "--set", "adapt.mode=none"]) == 3
    runs = os.path.join(str(tmp_path), "runs")
    (run_dir,) = [os.path.join(runs, d) for d in os.listdir(runs)]
    with open(os.path.join(run_dir, "record.json"), encoding="utf-8") as fh:
        record = json.load(fh)
    assert record["failures"] == 1
    assert record["seed_records"][0]["exhausted_at"] == 1


def test_console_entry_point(tmp_path):
    out = str(tmp_path / "suite.json")
    proc = subprocess.run(
        [sys.executable, "-m", "lifelong2d.cli", "gen-suite", "--family",
         "object", "--n-tasks", "2", "--seed", "3", "--out", out],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert len(load_suite(out)) == 2
    proc = subprocess.run(
        [sys.executable, "-m", "lifelong2d.cli", "gen-suite", "--family",
         "bogus", "--n-tasks", "2", "--seed", "3", "--out", out],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2
    assert "error:" in proc.stderr
