import json
import subprocess


def run(cli, *args, cwd=None):
    return subprocess.run([cli, *args], cwd=cwd, capture_output=True, text=True)


SMALL = "[learner]\nhidden = 16\nbatch_size = 8\nbuffer_capacity = 200\n"


def test_pit_bot_vs_random(cli):
    r = run(cli, "pit", "--red", "bot", "--blue", "random", "--episodes", "32", "--scenario", "3m")
    assert r.returncode == 0
    line = next(l for l in r.stdout.splitlines() if l.startswith("red_wins"))
    assert int(line.split()[1]) >= 30


def test_usage_errors_exit_2(cli, tmp_path):
    assert run(cli, "train", "--mode", "mixed").returncode == 2
    assert run(cli, "train", "--no-such-flag").returncode == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[train]\nstepz = 5\n")
    r = run(cli, "train", "--config", str(bad), "--out", str(tmp_path / "o"))
    assert r.returncode == 2
    assert "stepz" in r.stderr


def test_paired_artifacts(cli, tmp_path):
    cfg = tmp_path / "small.ini"
    cfg.write_text(SMALL)
    out = tmp_path / "paired"
    r = run(cli, "train", "--scenario", "3m", "--mode", "paired", "--algo", "qmix", "--algo-b",
            "iql", "--steps", "1500", "--test-interval", "500", "--test-episodes", "4",
            "--seeds", "3", "--out", str(out), "--config", str(cfg), "--quiet")
    assert r.returncode == 0, r.stderr
    assert len(list(out.glob("metrics_seed*.csv"))) == 3
    assert len(list(out.glob("*.ckpt"))) == 6
    assert (out / "aggregate.json").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"] == [0, 1, 2]
    assert "[learner]" in manifest["config"]


def test_seeded_runs_are_byte_identical(cli, tmp_path):
    cfg = tmp_path / "small.ini"
    cfg.write_text(SMALL)
    outs = []
    for name, jobs in (("a", "1"), ("b", "2")):
        out = tmp_path / name
        r = run(cli, "train", "--algo", "iql", "--steps", "1200", "--test-interval", "400",
                "--test-episodes", "4", "--seeds", "1", "--seed-base", "7", "--jobs", jobs,
                "--out", str(out), "--config", str(cfg), "--quiet")
        assert r.returncode == 0, r.stderr
        outs.append((out / "metrics_seed7.csv").read_bytes())
    assert outs[0] == outs[1]


def test_rerun_from_resolved_config(cli, tmp_path):
    cfg = tmp_path / "small.ini"
    cfg.write_text(SMALL)
    first = tmp_path / "first"
    r = run(cli, "train", "--algo", "vdn", "--steps", "800", "--test-interval", "400",
            "--test-episodes", "2", "--seeds", "1", "--seed-base", "3", "--out", str(first),
            "--config", str(cfg), "--quiet")
    assert r.returncode == 0, r.stderr
    second = tmp_path / "second"
    r = run(cli, "train", "--config", str(first / "config.ini"), "--out", str(second), "--quiet")
    assert r.returncode == 0, r.stderr
    assert (first / "metrics_seed3.csv").read_bytes() == (second / "metrics_seed3.csv").read_bytes()


def test_analyze_and_replay(cli, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    r = run(cli, "analyze", "--metrics-dir", str(empty), "--out", str(tmp_path / "a0"))
    assert r.returncode == 1
    assert "NoInputFiles" in r.stderr

    replay = tmp_path / "pit.jsonl"
    r = run(cli, "pit", "--red", "bot", "--blue", "random", "--episodes", "2",
            "--replay-out", str(replay))
    assert r.returncode == 0
    r = run(cli, "replay", str(replay), "--verify")
    assert r.returncode == 0
    assert "mismatches 0" in r.stdout
    r = run(cli, "analyze", "--replays", str(replay), "--out", str(tmp_path / "a1"))
    assert r.returncode == 0
    assert (tmp_path / "a1" / "diversity_pit.json").exists()


def test_checkpoint_scenario_mismatch(cli, tmp_path):
    cfg = tmp_path / "small.ini"
    cfg.write_text(SMALL)
    out = tmp_path / "run"
    r = run(cli, "train", "--algo", "iql", "--steps", "300", "--test-interval", "300",
            "--test-episodes", "2", "--seeds", "1", "--out", str(out), "--config", str(cfg),
            "--quiet")
    assert r.returncode == 0, r.stderr
    r = run(cli, "pit", "--red", str(out / "iql_red_seed0.ckpt"), "--blue", "bot",
            "--scenario", "8m")
    assert r.returncode == 1
    assert "CheckpointScenarioMismatch" in r.stderr


def test_identical_checkpoints_draw_on_symmetric_zero_jitter(cli, tmp_path):
    cfg = tmp_path / "small.ini"
    cfg.write_text(SMALL)
    out = tmp_path / "run"
    assert run(cli, "train", "--algo", "qmix", "--steps", "300", "--test-interval", "300",
               "--test-episodes", "2", "--seeds", "1", "--out", str(out), "--config", str(cfg),
               "--quiet").returncode == 0
    scen = tmp_path / "3m_still.ini"
    scen.write_text("[scenario]\nbase = 3m\nspawn_spread = 0\n")
    ckpt = str(out / "qmix_red_seed0.ckpt")
    r = run(cli, "pit", "--red", ckpt, "--blue", ckpt, "--scenario", str(scen))
    assert r.returncode == 0, r.stderr
    assert "red_wins 0 draws 32 blue_wins 0" in r.stdout


def test_scenarios_listing(cli):
    r = run(cli, "scenarios")
    assert r.returncode == 0
    assert "MMM2" in r.stdout
    r = run(cli, "scenarios", "--show", "2s3z")
    assert "[red]" in r.stdout
