import json

import pytest

from steerid.cli import run

SMALL = ["--train-min", "30", "--test-min", "10", "--segment-min", "5"]


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("fleet")
    assert run(["synth", "--out", str(d), "--seed", "1", "--minutes", "60", "--drivers", "3"]) == 0
    return d


def snapshot(d):
    return {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_unknown_subcommand(capsys):
    assert run(["fly"]) == 1
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("w", ["3.55", "11", "2", "abc"])
def test_window_validation(data, tmp_path, w):
    assert run(["train", "--data", str(data), "--out", str(tmp_path), "--seed", "0", "--window-s", w]) == 1


def test_seed_required(data, tmp_path):
    assert run(["train", "--data", str(data), "--out", str(tmp_path)]) == 1


def test_out_must_differ_from_data(data):
    before = snapshot(data)
    assert run(["stationarity", "--data", str(data), "--out", str(data)]) == 1
    assert snapshot(data) == before


def test_missing_data_is_data_error(tmp_path, capsys):
    assert run(["ingest", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: format:")


def test_insufficient_data_is_data_error(data, tmp_path):
    assert run(["train", "--data", str(data), "--out", str(tmp_path), "--seed", "0", "--window-s", "3.5"]) == 2


def test_ingest_and_stationarity(data, tmp_path):
    before = snapshot(data)
    assert run(["ingest", "--data", str(data), "--out", str(tmp_path / "i")]) == 0
    assert run(["stationarity", "--data", str(tmp_path / "i"), "--out", str(tmp_path / "s")]) == 0
    assert snapshot(data) == before
    rep = json.loads((tmp_path / "s/stationarity.json").read_text())
    assert rep["fleet"]["n_trips"] > 0
    man = json.loads((tmp_path / "s/run_manifest.json").read_text())
    assert man["subcommand"] == "stationarity" and "numpy" in man["versions"]


def test_train_evaluate_consistent(data, tmp_path):
    args = ["--data", str(data), "--seed", "4", "--window-s", "3.5", "--hidden", "4", "--steps", "5",
            "--lr", "1e-3", *SMALL]
    assert run(["train", "--out", str(tmp_path / "t"), *args]) == 0
    assert run(["evaluate", "--data", str(data), "--model", str(tmp_path / "t"), "--out", str(tmp_path / "e")]) == 0
    train = json.loads((tmp_path / "t/metrics.json").read_text())
    ev = json.loads((tmp_path / "e/metrics.json").read_text())
    assert ev["final_vote_accuracy"] == train["test"]["final_vote_accuracy"]
    assert train["split_disjoint"]
    for name in ["model.bin", "model.bin.json", "split.json", "train_config.json", "run_manifest.json"]:
        assert (tmp_path / "t" / name).exists()
    for name in ["accuracy_curve.csv", "confusion.csv", "confusion.json"]:
        assert (tmp_path / "e" / name).exists()


def test_sweep_default_grid_has_sixteen_rows(data, tmp_path):
    assert run(["sweep", "--data", str(data), "--out", str(tmp_path), "--seed", "0", "--reps", "1",
                "--hidden", "2", "--steps", "1", *SMALL]) == 0
    rows = (tmp_path / "sweep.csv").read_text().strip().splitlines()
    assert len(rows) == 17
    assert [json.loads((tmp_path / "sweep.json").read_text())["rows"][k]["window_s"] for k in (0, 15)] == [2.5, 10.0]


def test_baseline(data, tmp_path):
    assert run(["baseline", "--data", str(data), "--out", str(tmp_path), "--seed", "0", "--trees", "3",
                "--window-s", "4", *SMALL]) == 0
    m = json.loads((tmp_path / "metrics.json").read_text())
    assert 0 <= m["segment_accuracy"] <= 1 and (tmp_path / "forest.bin").exists()


def test_synth_config_file(tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("n_drivers = 2\nminutes_per_driver = 6\n# comment\npreset = hard\n")
    assert run(["synth", "--out", str(tmp_path / "o"), "--seed", "0", "--config", str(cfg)]) == 0
    prof = json.loads((tmp_path / "o/profiles.json").read_text())
    assert len(prof["profiles"]) == 2 and prof["config"]["preset"] == "hard"
    cfg.write_text("bogus = 1\n")
    assert run(["synth", "--out", str(tmp_path / "p"), "--seed", "0", "--config", str(cfg)]) == 1
