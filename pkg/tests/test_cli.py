import json
import subprocess
import sys

import pytest

from predtrack import motio
from predtrack.cli import main
from predtrack.metrics import parse_key_values


def sh(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    data = d / "data"
    data.mkdir()
    cfg = d / "scene.yaml"
    cfg.write_text("scene:\n  n_agents: 5\n  n_frames: 60\n  p_miss: 0.1\n  jitter: 0.05\n"
                   "predictor:\n  hidden_dim: 4\n  attention_dim: 2\n")
    for seed in (1, 2):
        assert sh("simulate", "--config", cfg, "--seed", seed,
                  "--out-gt", data / f"gt{seed}.txt", "--out-det", d / f"det{seed}.txt") == 0
    for hz in ("short", "long"):
        assert sh("train", "--config", cfg, "--data", data, "--horizon", hz, "--out", d / f"{hz}.json",
                  "--epochs", 2, "--lr", 3e-3, "--stride", 4, "--seed", 0) == 0
    return d


def test_simulate_reproducible_and_summary(workdir, capsys):
    out = workdir / "again.txt"
    assert sh("simulate", "--config", workdir / "scene.yaml", "--seed", 1,
              "--out-gt", out, "--out-det", workdir / "again_det.txt") == 0
    assert out.read_bytes() == (workdir / "data" / "gt1.txt").read_bytes()
    assert (workdir / "again_det.txt").read_bytes() == (workdir / "det1.txt").read_bytes()
    assert "agents=" in capsys.readouterr().out


def test_simulate_all_missed(tmp_path):
    assert sh("simulate", "--set", "scene.p_miss=1.0", "--out-gt", tmp_path / "g.txt",
              "--out-det", tmp_path / "d.txt") == 0
    assert (tmp_path / "d.txt").read_text() == ""
    assert (tmp_path / "g.txt").read_text()


def test_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("scene:\n  p_miss: 7\n")
    assert sh("simulate", "--config", bad, "--out-gt", tmp_path / "g", "--out-det", tmp_path / "d") == 2
    assert sh("simulate", "--config", tmp_path / "missing.yaml", "--out-gt", tmp_path / "g",
              "--out-det", tmp_path / "d") == 2


def test_config_from_environment(tmp_path, monkeypatch):
    cfg = tmp_path / "env.yaml"
    cfg.write_text("scene:\n  n_frames: 7\n  n_agents: 2\n  spawn_spread: 0\n")
    monkeypatch.setenv(motio.CONFIG_ENV, str(cfg))
    assert sh("simulate", "--out-gt", tmp_path / "g.txt", "--out-det", tmp_path / "d.txt") == 0
    assert max(r.frame for r in motio.read_mot(tmp_path / "g.txt")) <= 7


def test_train_outputs(workdir):
    ckpt = json.loads((workdir / "long.json").read_text())
    assert ckpt["meta"]["horizon"] == "long" and ckpt["meta"]["config"]["hidden_dim"] == 4
    curve = (workdir / "long.loss.txt").read_text().splitlines()
    assert len(curve) == 3
    assert float(curve[-1].split()[1]) < float(curve[0].split()[1])


def test_train_zero_epochs_copies_init(workdir, tmp_path):
    args = ("train", "--config", workdir / "scene.yaml", "--data", workdir / "data", "--horizon", "short",
            "--epochs", 0, "--seed", 3)
    assert sh(*args, "--out", tmp_path / "a.json") == 0
    assert sh(*args, "--out", tmp_path / "b.json") == 0
    a = json.loads((tmp_path / "a.json").read_text())
    assert a["params"] == json.loads((tmp_path / "b.json").read_text())["params"]
    from predtrack.predictor import PredictorConfig, init_params
    init = init_params(PredictorConfig(hidden_dim=4, attention_dim=2), seed=3)
    assert a["params"]["enc.Wx"]["values"] == init["enc.Wx"].ravel().tolist()


def test_fine_tune_continues(workdir, tmp_path):
    out = tmp_path / "ft.json"
    assert sh("train", "--data", workdir / "data", "--horizon", "short", "--out", out, "--epochs", 1,
              "--lr", 1e-3, "--stride", 4, "--fine-tune", workdir / "short.json") == 0
    before = json.loads((workdir / "short.json").read_text())
    after = json.loads(out.read_text())
    assert after["meta"]["config"] == before["meta"]["config"]
    assert after["params"] != before["params"]
    assert sh("train", "--data", workdir / "data", "--horizon", "long", "--out", out, "--epochs", 1,
              "--fine-tune", workdir / "short.json") == 2


def test_train_flags_nonconvergence(workdir, tmp_path):
    # an absurd learning rate blows the loss up
    rc = sh("train", "--config", workdir / "scene.yaml", "--data", workdir / "data", "--horizon", "short",
            "--out", tmp_path / "x.json", "--epochs", 1, "--lr", 50, "--stride", 4)
    assert rc == 3


def test_train_missing_data(tmp_path):
    assert sh("train", "--data", tmp_path / "nope", "--horizon", "short", "--out", tmp_path / "x.json") == 2
    (tmp_path / "empty").mkdir()
    assert sh("train", "--data", tmp_path / "empty", "--horizon", "short", "--out", tmp_path / "x.json") == 2


def test_track_evaluate(workdir, capsys):
    res = workdir / "res.txt"
    args = ("track", "--det", workdir / "det1.txt", "--short", workdir / "short.json",
            "--long", workdir / "long.json", "--out", res)
    assert sh(*args) == 0
    first = res.read_bytes()
    assert sh(*args) == 0
    assert res.read_bytes() == first
    capsys.readouterr()
    assert sh("evaluate", "--gt", workdir / "data" / "gt1.txt", "--res", res, "--format", "kv") == 0
    kv = parse_key_values(capsys.readouterr().out)
    assert {"mota", "motp", "ids", "frag", "mt", "ml"} <= kv.keys()
    assert sh("track", *args[1:], "--mode", "T1") == 0


def test_track_perfect_detections_no_switches(workdir, tmp_path, capsys):
    gt = workdir / "data" / "gt2.txt"
    det = tmp_path / "det.txt"
    det.write_text(motio.write_mot([motio.MotRecord(r.frame, -1, r.bb_left, r.bb_top, r.bb_width, r.bb_height)
                                    for r in motio.read_mot(gt)]))
    assert sh("track", "--det", det, "--short", workdir / "short.json", "--long", workdir / "long.json",
              "--out", tmp_path / "res.txt", "--set", "tracker.mode=T1") == 0
    capsys.readouterr()
    assert sh("evaluate", "--gt", gt, "--res", tmp_path / "res.txt", "--format", "kv") == 0
    assert parse_key_values(capsys.readouterr().out)["ids"] == 0


def test_track_missing_checkpoint(workdir, tmp_path, capsys):
    rc = sh("track", "--det", workdir / "det1.txt", "--short", tmp_path / "none.json",
            "--long", workdir / "long.json", "--out", tmp_path / "r.txt")
    assert rc == 2
    assert "checkpoint not found" in capsys.readouterr().err
    assert sh("track", "--det", workdir / "det1.txt", "--short", workdir / "long.json",
              "--long", workdir / "long.json", "--out", tmp_path / "r.txt") == 2


def test_evaluate_self_and_errors(workdir, tmp_path, capsys):
    gt = workdir / "data" / "gt1.txt"
    assert sh("evaluate", "--gt", gt, "--res", gt, "--format", "kv") == 0
    assert parse_key_values(capsys.readouterr().out)["mota"] == 1.0
    assert sh("evaluate", "--gt", gt, "--res", gt) == 0
    assert "MOTA" in capsys.readouterr().out
    longer = tmp_path / "longer.txt"
    longer.write_text(gt.read_text() + "999,1,0,0,1,1,1,-1,-1,-1\n")
    assert sh("evaluate", "--gt", gt, "--res", longer) == 2
    broken = tmp_path / "broken.txt"
    broken.write_text("1,1,0,0,1,1,1,-1,-1,-1\n1,x,0,0,1,1,1,-1,-1,-1\n")
    assert sh("evaluate", "--gt", gt, "--res", broken) == 2
    assert "line 2" in capsys.readouterr().err


def test_predict(workdir, tmp_path):
    out = tmp_path / "pred.txt"
    assert sh("predict", "--ckpt", workdir / "long.json", "--tracks", workdir / "data" / "gt1.txt",
              "--out", out) == 0
    recs = motio.read_mot(out)
    ids = {r.id for r in motio.read_mot(workdir / "data" / "gt1.txt")}
    assert {r.id for r in recs} == ids
    assert len(recs) == 10 * len(ids)


def test_ablate_report(workdir, tmp_path, capsys, monkeypatch):
    from predtrack import cli
    from predtrack.simulator import SceneConfig
    monkeypatch.setattr(cli, "standard_benchmark", lambda: [SceneConfig(seed=3, n_agents=3, n_frames=30)])
    out = tmp_path / "abl.json"
    assert sh("ablate", "--short", workdir / "short.json", "--long", workdir / "long.json", "--out", out) == 0
    table = capsys.readouterr().out
    assert all(m in table for m in ("T1", "T2", "T3", "T4"))
    assert set(json.loads(out.read_text())) == {"T1", "T2", "T3", "T4"}
    # one easy scene cannot show a five point gain
    rc = sh("ablate", "--short", workdir / "short.json", "--long", workdir / "long.json", "--assert-ordering")
    assert rc == 3
    assert sh("ablate", "--suite", "other", "--short", workdir / "short.json", "--long", workdir / "long.json") == 2


def test_usage_errors():
    assert subprocess.run([sys.executable, "-m", "predtrack.cli", "track", "--bogus"],
                          capture_output=True).returncode == 1
    assert subprocess.run([sys.executable, "-m", "predtrack.cli"], capture_output=True).returncode == 1
    helptext = subprocess.run([sys.executable, "-m", "predtrack.cli", "track", "--help"],
                              capture_output=True, text=True)
    assert helptext.returncode == 0
    for flag in ("--det", "--short", "--long", "--out", "--mode", "--seed", "--config", "--set"):
        assert flag in helptext.stdout
