import csv
import hashlib
import subprocess
import sys

import numpy as np
import pytest

from covihawkes.cli import main
from covihawkes.ingest import load_bundle_dir

SMALL = ["--lag", "7", "--delta", "3", "--hidden", "4", "--iterations", "30"]


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _digest(folder):
    h = hashlib.sha256()
    for p in sorted(folder.iterdir()):
        h.update(p.name.encode() + p.read_bytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    out = tmp_path_factory.mktemp("world")
    assert main(["synth", "--out", str(out), "--districts", "3", "--days", "600", "--lag", "7", "--seed", "2"]) == 0
    return out


@pytest.fixture(scope="module")
def models(world, tmp_path_factory):
    out = tmp_path_factory.mktemp("models")
    assert main(["train", "--data", str(world), "--regions-level", "district", "--out", str(out), *SMALL]) == 0
    return out


def test_train_one_model_per_district(models):
    assert sorted(p.name for p in models.glob("*.model.json")) == [f"D0{k}.model.json" for k in (1, 2, 3)]
    summary = _rows(models / "train_summary.csv")
    assert [r["region_id"] for r in summary] == ["D01", "D02", "D03"]
    assert all(int(r["iterations"]) <= 30 for r in summary)


def test_train_nation_only(world, tmp_path):
    assert main(["train", "--data", str(world), "--region", "IN", "--out", str(tmp_path), *SMALL]) == 0
    assert [p.name for p in tmp_path.glob("*.model.json")] == ["IN.model.json"]


def test_default_selection_is_nation(world, tmp_path):
    assert main(["train", "--data", str(world), "--out", str(tmp_path), *SMALL[:-1], "3"]) == 0
    assert [p.name for p in tmp_path.glob("*.model.json")] == ["IN.model.json"]


def test_missing_input_file_exits_2(world, tmp_path, capsys):
    code = main(["train", "--data", str(world), "--cases", str(tmp_path / "nope.csv"), "--out", str(tmp_path)])
    assert code == 2
    assert "nope.csv" in capsys.readouterr().err


def test_unknown_region_exits_2(world, tmp_path):
    assert main(["train", "--data", str(world), "--region", "ZZ", "--out", str(tmp_path), *SMALL]) == 2


def test_bad_flag_exits_2(world, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--data", str(world), "--out", str(tmp_path), "--lag", "seven"])
    assert exc.value.code == 2


def test_validate_replay_seam(world, tmp_path):
    args = ["validate", "--data", str(world), "--region", "D01", "--out", str(tmp_path), "--replay-actuals", *SMALL]
    assert main(args) == 0
    rows = _rows(tmp_path / "validation_D01.csv")
    summary = {r["window"]: r for r in rows if r["interval_index"] == "summary"}
    assert sorted(summary, key=int) == ["7", "14", "28"]
    assert all(float(r["mape"]) == 0.0 for r in summary.values())
    counts = {w: sum(1 for r in rows if r["window"] == w and r["interval_index"] != "summary") for w in summary}
    assert counts == {"7": 12, "14": 11, "28": 9}


def test_validate_span_shorter_than_window(world, tmp_path):
    args = ["validate", "--data", str(world), "--out", str(tmp_path), "--windows", "28", "--span", "14"]
    assert main(args) == 2


def test_scenario_single_preset(world, models, tmp_path):
    args = ["scenario", "--data", str(world), "--models", str(models), "--region", "D01", "--preset", "none",
            "--horizon", "120", "--out", str(tmp_path)]
    assert main(args) == 0
    rows = _rows(tmp_path / "forecast_D01_none.csv")
    assert len(rows) == 120
    assert list(rows[0]) == ["date", "scenario", "lambda_tilde", "predicted_count", "cumulative_predicted"]
    cum = np.array([float(r["cumulative_predicted"]) for r in rows])
    assert np.all(np.diff(cum) >= 0)
    assert len(_rows(tmp_path / "plot_D01_none.csv")) == 120


def test_scenario_all_presets(world, models, tmp_path):
    args = ["scenario", "--data", str(world), "--model", str(models / "D02.model.json"), "--preset", "all",
            "--horizon", "30", "--out", str(tmp_path)]
    assert main(args) == 0
    assert len(list(tmp_path.glob("forecast_D02_*.csv"))) == 4


def test_scenario_custom_interval(world, models, tmp_path):
    args = ["scenario", "--data", str(world), "--models", str(models), "--region", "D03",
            "--custom-interval", "2020-06-01", "2020-06-21", "--horizon", "10", "--out", str(tmp_path)]
    assert main(args) == 0
    assert (tmp_path / "forecast_D03_custom_2020-06-01_2020-06-21.csv").is_file()


def test_scenario_interval_outside_data(world, models, tmp_path):
    args = ["scenario", "--data", str(world), "--models", str(models), "--region", "D03",
            "--custom-interval", "2019-01-01", "2019-01-07", "--out", str(tmp_path)]
    assert main(args) == 2


def test_sampled_scenario_reproducible(world, models, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / str(k)
        args = ["scenario", "--data", str(world), "--models", str(models), "--region", "D01", "--preset", "strict",
                "--mode", "sample", "--seed", "7", "--horizon", "60", "--out", str(out)]
        assert main(args) == 0
        outs.append((out / "forecast_D01_strict.csv").read_bytes())
    assert outs[0] == outs[1]
    counts = [float(r["predicted_count"]) for r in _rows(tmp_path / "0" / "forecast_D01_strict.csv")]
    assert all(c == int(c) for c in counts)


def test_synth_round_trip_and_seed(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["synth", "--out", str(out), "--districts", "2", "--days", "120", "--seed", "11"]) == 0
    assert _digest(a) == _digest(b)
    bundle = load_bundle_dir(a)
    assert sorted(bundle.records) == ["D01", "D02", "IN", "ST01"]
    assert bundle.records["IN"].n_days == 120


def test_synth_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("COVIHAWKES_SEED", "11")
    assert main(["synth", "--out", str(tmp_path / "env"), "--districts", "2", "--days", "120"]) == 0
    monkeypatch.delenv("COVIHAWKES_SEED")
    assert main(["synth", "--out", str(tmp_path / "flag"), "--districts", "2", "--days", "120", "--seed", "11"]) == 0
    assert _digest(tmp_path / "env") == _digest(tmp_path / "flag")


def test_synth_zero_base_rate(tmp_path):
    args = ["synth", "--out", str(tmp_path), "--districts", "1", "--days", "90", "--mu", "0", "--weights", "0.5,0.5"]
    assert main(args) == 0
    assert not load_bundle_dir(tmp_path).records["D01"].cases.any()


def test_synth_rejects_bad_weights(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--weights", "0.5,0.6"]) == 2
    assert main(["synth", "--out", str(tmp_path), "--weights", "a,b"]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "covihawkes", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "scenario" in proc.stdout
