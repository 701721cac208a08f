import json
from pathlib import Path


from csi_rendezvous.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
FAST = ["--set", "n_robots=4", "--set", "n_iterations=8", "--set", "bounds=[0.0, 0.0, 20.0, 20.0]"]


def run(tmp, *args):
    return main([*args, "--out", str(tmp)])


def test_run_writes_outputs(tmp_path, capsys):
    assert run(tmp_path, "run", "--config", str(CONFIGS / "desk.toml"), "--seed", "7", "--strategy", "active", *FAST) == 0
    for name in ("ticks.csv", "events.jsonl", "summary.json", "timing.json"):
        assert (tmp_path / name).exists()
    line = capsys.readouterr().out.strip()
    assert line.startswith("strategy=active seed=7 ate_trans=") and "err_final=" in line and "rendezvous=" in line
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["seed"] == 7 and "version" in summary


def test_run_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(out, "run", "--seed", "3", *FAST) == 0
    for name in ("ticks.csv", "events.jsonl", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_strategies_differ(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "run", "--seed", "3", "--strategy", "active", "--set", "n_iterations=20", "--set", "n_robots=4", "--set", "bounds=[0.0, 0.0, 20.0, 20.0]") == 0
    assert run(b, "run", "--seed", "3", "--strategy", "random", "--set", "n_iterations=20", "--set", "n_robots=4", "--set", "bounds=[0.0, 0.0, 20.0, 20.0]") == 0
    assert (a / "events.jsonl").read_bytes() != (b / "events.jsonl").read_bytes()
    first_a = (a / "ticks.csv").read_text().splitlines()[:5]
    first_b = (b / "ticks.csv").read_text().splitlines()[:5]
    assert first_a == first_b


def test_bad_config_is_line_precise(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("n_robots = 4\n[rendezvous]\nkappa = -1\n")
    assert run(tmp_path, "run", "--config", str(cfg)) == 2
    assert f"{cfg}:3:" in capsys.readouterr().err


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("CSI_RENDEZVOUS_OUT", str(tmp_path / "envout"))
    assert main(["run", *FAST]) == 0
    assert (tmp_path / "envout" / "summary.json").exists()


def test_compare_outputs(tmp_path, capsys):
    assert run(tmp_path, "compare", "--repeats", "2", "--workers", "2", *FAST) == 0
    rows = (tmp_path / "compare_ticks.csv").read_text().splitlines()
    assert rows[0] == "tick,active_err_mean,active_err_std,random_err_mean,random_err_std"
    assert len(rows) - 1 == 8
    summary = json.loads((tmp_path / "compare_summary.json").read_text())
    assert {"err_ratio_random_over_active", "ate_reduction_pct_mean", "version"} <= set(summary)
    assert run(tmp_path, "compare", "--repeats", "1", *FAST) == 2


def test_outlier_eval_outputs(tmp_path):
    args = ["outlier-eval", "--config", str(CONFIGS / "outliers.toml"), "--repeats", "1", "--set", "n_iterations=30"]
    assert run(tmp_path, *args) == 0
    lines = (tmp_path / "outlier_edges.csv").read_text().splitlines()
    assert lines[0] == "seed,edge_id,is_outlier_truth,theta_dev_deg,phi_dev_deg,weight"
    summary = json.loads((tmp_path / "outlier_summary.json").read_text())
    assert "reduction_pct_mean" in summary
    assert run(tmp_path, "outlier-eval", "--repeats", "1", *FAST) == 2


def test_dump_profile(tmp_path, capsys):
    assert run(tmp_path, "dump-profile", "--rx", "10,10,30", "--tx", "13,14", "--noiseless") == 0
    peaks = json.loads((tmp_path / "peaks.json").read_text())
    # bearing of (3, 4) is 53.13 deg in the world, 23.13 deg relative to the 30 deg start heading
    assert abs(peaks["peaks"][0]["theta_deg"] - 23.13) <= 0.1
    assert (tmp_path / "profile.csv").read_text().startswith("theta_deg,phi_deg,value")
    assert run(tmp_path, "dump-profile", "--rx", "10,10", "--tx", "13,14") == 2


def test_unwritable_output_exits_1(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run(blocker, "run", *FAST) == 1
