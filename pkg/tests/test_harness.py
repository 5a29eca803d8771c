import csv

import numpy as np
import pytest

from incident_impact import cli
from incident_impact.bench import BenchCase, complexity_bench, time_forward
from incident_impact.checkpoint import CheckpointError, MAGIC, check_schema, load_checkpoint, read_header
from incident_impact.harness import (
    SPLITS,
    TrainConfig,
    ablate,
    evaluate,
    resume,
    score_report,
    split_indices,
    train,
)
from incident_impact.io import read_network
from incident_impact.metrics import COLUMNS

FAST = TrainConfig(hidden=8, epochs=2, dropout=0.1)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("ws")
    (root / "gen.txt").write_text("n_sensors = 24\nn_roads = 4\ndays = 14\nincident_count = 20\nseed = 9\n")
    (root / "train.txt").write_text(FAST.to_text())
    assert cli.main(["generate", "--config", str(root / "gen.txt"), "--out", str(root / "raw")]) == 0
    assert cli.main(["label", "--data", str(root / "raw"), "--out", str(root / "data")]) == 0
    assert cli.main(["train", "--data", str(root / "data"), "--config", str(root / "train.txt"),
                     "--out", str(root / "run")]) == 0
    return root


def test_train_writes_checkpoint_log_and_config(workspace):
    run = workspace / "run"
    with open(run / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["omega"]) for r in rows] == [1.0, 0.5]
    assert {"loss1", "loss2", "loss3", "val_dur_mae"} <= set(rows[0])
    assert TrainConfig.from_file(run / "config.txt") == FAST
    head = (run / "model.ckpt").read_bytes()[:200]
    assert head.startswith(MAGIC) and b"version 1" in head


def test_split_is_seeded_and_disjoint():
    a, b = split_indices(200, 0), split_indices(200, 0)
    assert all(np.array_equal(a[k], b[k]) for k in SPLITS)
    assert [len(a[k]) for k in SPLITS] == [140, 30, 30]
    assert len(np.unique(np.concatenate(list(a.values())))) == 200
    assert not np.array_equal(split_indices(200, 1)["test"], a["test"])


def test_checkpoint_round_trip_is_exact(workspace):
    ck = load_checkpoint(workspace / "run" / "model.ckpt")
    header = read_header(workspace / "run" / "model.ckpt")
    assert header["config"]["hidden"] == 8 and header["state"]["epoch"] == 2
    again = load_checkpoint(workspace / "run" / "model.ckpt")
    X = np.random.default_rng(0).normal(50, 10, size=(2, 24, 9, 2))
    assert np.array_equal(ck.estimator.predict(X), again.estimator.predict(X))


def test_checkpoint_rejects_foreign_files(tmp_path, workspace):
    (tmp_path / "junk.ckpt").write_bytes(b"hello")
    with pytest.raises(CheckpointError, match="not a checkpoint"):
        load_checkpoint(tmp_path / "junk.ckpt")
    blob = (workspace / "run" / "model.ckpt").read_bytes().replace(b"version 1\n", b"version 9\n", 1)
    (tmp_path / "future.ckpt").write_bytes(blob)
    with pytest.raises(CheckpointError, match="version 9"):
        load_checkpoint(tmp_path / "future.ckpt")


def test_schema_mismatch_is_refused(workspace):
    header = read_header(workspace / "run" / "model.ckpt")
    net = read_network(workspace / "data")
    check_schema(header, net, 6, 3)
    with pytest.raises(CheckpointError, match="schema"):
        check_schema(header, net, 5, 3)


def test_evaluate_is_deterministic_with_baseline(workspace):
    a = evaluate(workspace / "run" / "model.ckpt", "test")
    b = evaluate(workspace / "run" / "model.ckpt", "test")
    assert a == b
    assert [r["model"] for r in a] == ["model", "train-mean"]
    assert list(a[0])[2:] == list(COLUMNS)


def test_mean_predictor_on_training_labels(workspace):
    rows = evaluate(workspace / "run" / "model.ckpt", "train")
    from incident_impact.harness import Dataset

    data = Dataset.load(workspace / "data", FAST)
    y = data.part("train")[1][:, 0]
    assert rows[1]["dur_mae"] == pytest.approx(np.abs(y - y.mean()).mean(), abs=1e-9)


def test_resume_matches_uninterrupted_run(workspace, tmp_path):
    long = train(TrainConfig(**{**FAST.__dict__, "epochs": 4}), workspace / "data", tmp_path / "long")
    resume(workspace / "run" / "model.ckpt", 2, out_path=tmp_path / "resumed.ckpt")
    short = load_checkpoint(tmp_path / "resumed.ckpt")
    assert short.epoch == 4
    for k, p in long.estimator.params_.items():
        assert np.array_equal(p.data, short.estimator.params_[k].data)


def test_score_report(workspace, tmp_path):
    ck = load_checkpoint(workspace / "run" / "model.ckpt")
    iid = ck.header["extra"]["splits"]["test"][0]
    rows = score_report(workspace / "run" / "model.ckpt", iid)
    assert len(rows) == 24
    assert all(np.isfinite(r["score"]) and r["score"] >= 0 for r in rows)
    assert set(rows[0]) == {"sensor_id", "road_id", "milepost", "score", "mean_speed"}
    assert cli.main(["score-report", "--ckpt", str(workspace / "run" / "model.ckpt"),
                     "--incident", iid, "--out", str(tmp_path)]) == 0
    assert (tmp_path / f"scores_{iid}.png").stat().st_size > 0


def test_ablate_emits_one_row_per_variant(workspace, tmp_path):
    cfg = TrainConfig(**{**FAST.__dict__, "epochs": 1})
    rows = ablate(cfg, workspace / "data", tmp_path)
    assert [r["variant"] for r in rows] == ["Full", "No-STrans", "No-TTrans", "No-Road", "No-Score"]
    with open(tmp_path / "ablation.csv") as fh:
        header = next(csv.reader(fh))
    assert header[:7] == ["variant", *COLUMNS]
    with open(tmp_path / "history_No-Score.csv") as fh:
        assert all(float(r["loss2"]) == 0.0 == float(r["loss3"]) for r in csv.DictReader(fh))


def test_cli_eval_and_errors(workspace, capsys):
    assert cli.main(["eval", "--ckpt", str(workspace / "run" / "model.ckpt"), "--split", "val"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "model,split," + ",".join(COLUMNS)
    assert cli.main(["eval", "--ckpt", str(workspace / "nope.ckpt")]) == 2
    assert "error:" in capsys.readouterr().err
    assert cli.main(["score-report", "--ckpt", str(workspace / "run" / "model.ckpt"), "--incident", "missing"]) == 2
    with pytest.raises(SystemExit):
        cli.main(["eval", "--ckpt", "x", "--split", "bogus"])


def test_bench_small(tmp_path, capsys):
    t = time_forward(BenchCase(40, 4), "dual", reps=3)
    assert t.shape == (3,) and np.all(t > 0)
    rows = complexity_bench([20, 40], reps=2, n_roads=4)
    assert [(r["variant"], r["n_sensors"]) for r in rows] == [("dual", 20), ("dual", 40), ("vanilla", 20), ("vanilla", 40)]
    assert np.isnan(rows[0]["growth"]) and rows[1]["growth"] > 0
    assert cli.main(["bench", "--sizes", "20", "40", "--reps", "2", "--roads", "4", "--variant", "vanilla",
                     "--out", str(tmp_path)]) == 0
    assert (tmp_path / "bench.png").exists() and (tmp_path / "bench.csv").exists()
    with pytest.raises(ValueError):
        time_forward(BenchCase(10, 2), "sparse", reps=1)
