import json
import subprocess
import sys

import numpy as np
import pytest

from pvqml.cli import RunConfig, main
from pvqml.data import fit_scaler, synth_generate
from pvqml.errors import ConfigurationError
from pvqml.models import build_model
from pvqml.serialize import save_model


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    frame = synth_generate(12, seed=0)
    frame.to_csv(d / "clean.csv")
    return d / "clean.csv", frame


def run(*argv):
    return main([str(a) for a in argv])


class TestExitCodes:
    def test_missing_file_is_io(self, tmp_path):
        assert run("preprocess", "--input", tmp_path / "nope.csv", "--output", tmp_path / "o.csv") == 2

    def test_usage_error_is_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--model", "transformer"])
        assert exc.value.code == 2

    def test_parse_error_is_3(self, tmp_path):
        (tmp_path / "bad.csv").write_text("timestamp,Ta,Tm,I3,I15,P\n2012-01-01T00:00,1,2,3,4,x\n")
        assert run("preprocess", "--input", tmp_path / "bad.csv", "--output", tmp_path / "o.csv") == 3

    def test_unknown_circuit_is_usage(self):
        with pytest.raises(SystemExit) as exc:
            main(["analyze", "fim", "--circuit", "ghz"])
        assert exc.value.code == 2

    def test_unfillable_gap_is_runtime(self, tmp_path, capsys):
        (tmp_path / "g.csv").write_text("timestamp,Ta,Tm,I3,I15,P\n2012-01-01T00:00,,2,3,4,5\n2012-01-01T01:00,1,2,3,4,5\n")
        assert run("preprocess", "--input", tmp_path / "g.csv", "--output", tmp_path / "o.csv") == 1
        assert "2012-01-01T00:00:00" in capsys.readouterr().err

    def test_installed_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "pvqml.cli", "--version"], capture_output=True, text=True)
        assert out.returncode == 0 and "pvqml" in out.stdout


class TestPreprocess:
    def test_clean_input_reports_zero_fills(self, data, tmp_path):
        path, frame = data
        assert run("preprocess", "--input", path, "--output", tmp_path / "c.csv", "--report", tmp_path / "r.json") == 0
        rep = json.loads((tmp_path / "r.json").read_text())
        assert rep["day_mean_fills"] == 0 and rep["interpolated_cells"] == 0 and rep["rows_out"] == len(frame)

    def test_excluded_day_reported(self, tmp_path):
        f = synth_generate(4, seed=1, start="2013-12-29")
        f.to_csv(tmp_path / "raw.csv")
        assert run("preprocess", "--input", tmp_path / "raw.csv", "--output", tmp_path / "c.csv",
                   "--report", tmp_path / "r.json") == 0
        assert json.loads((tmp_path / "r.json").read_text())["dropped_excluded_dates"] == 24
        assert "2013-12-31" not in (tmp_path / "c.csv").read_text()


class TestConfig:
    def test_parse_and_defaults(self):
        rc = RunConfig.parse("model = hqlstm\n# comment\nlearning_rate = 0.01\nqubits = 4\n")
        assert rc.model == "hqlstm" and rc.learning_rate == 0.01
        assert rc.train_config().lr == 0.01 and rc.model_dims()["qubits"] == 4

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigurationError):
            RunConfig.parse("modle = mlp\n")
        (tmp_path / "c.cfg").write_text("bogus = 1\n")
        assert run("train", "--config", tmp_path / "c.cfg", "--data", "x.csv") == 3

    def test_dump_roundtrip(self):
        rc = RunConfig.parse("model = lstm\nepochs = 3\n")
        assert RunConfig.parse(rc.dump()) == rc


class TestTrain:
    def test_five_folds(self, data, tmp_path):
        path, _ = data
        assert run("train", "--model", "mlp", "--data", path, "--folds", 5, "--epochs", 1, "--out", tmp_path) == 0
        assert sorted(p.name for p in tmp_path.glob("fold*.model.json")) == [f"fold{i}.model.json" for i in range(5)]
        doc = json.loads((tmp_path / "metrics.json").read_text())
        assert doc["total_params"] == 3987 and len(doc["folds"]) == 5 and not doc["partial"]
        assert (tmp_path / "folds.json").exists() and (tmp_path / "fold0.history.csv").exists()

    def test_hqnn_descriptor(self, data, tmp_path):
        path, _ = data
        assert run("train", "--model", "hqnn", "--data", path, "--folds", 1, "--epochs", 1, "--out", tmp_path) == 0
        doc = json.loads((tmp_path / "model.json").read_text())
        assert doc["descriptor"]["total_params"] == 2266

    def test_fraction(self, data, tmp_path):
        path, _ = data
        assert run("train", "--model", "mlp", "--data", path, "--fraction", 0.25, "--epochs", 1, "--out", tmp_path) == 0
        doc = json.loads((tmp_path / "metrics.json").read_text())
        assert doc["fraction"] == 0.25 and (tmp_path / "reduced.csv").exists()

    def test_seed_env_determinism(self, data, tmp_path, monkeypatch):
        path, _ = data
        monkeypatch.setenv("PVQML_SEED", "5")
        for name in ("a", "b"):
            assert run("train", "--model", "mlp", "--data", path, "--folds", 1, "--epochs", 2, "--out", tmp_path / name) == 0
        a, b = ((tmp_path / n / "model.json").read_text() for n in ("a", "b"))
        assert a == b and "seed = 5" in (tmp_path / "a" / "config.txt").read_text()


class TestForecast:
    def _model(self, tmp_path, kind, frame):
        save_model(tmp_path / "m.json", build_model(kind, seed=1), fit_scaler(frame))
        return tmp_path / "m.json"

    def test_hqseq2seq_137(self, data, tmp_path):
        _, frame = data
        hist = type(frame)(frame.timestamps[:124], frame.values[:124])
        hist.to_csv(tmp_path / "h.csv")
        m = self._model(tmp_path, "hqseq2seq", frame)
        assert run("forecast", "--model-file", m, "--history", tmp_path / "h.csv", "--horizon", 137,
                   "--out", tmp_path / "f.csv") == 0
        lines = (tmp_path / "f.csv").read_text().splitlines()
        assert lines[0] == "timestamp,P" and len(lines) == 138
        assert lines[1].startswith(np.datetime_as_string(frame.timestamps[124], unit="m"))

    def test_hqlstm_one_row_and_horizon_guard(self, data, tmp_path):
        path, frame = data
        m = self._model(tmp_path, "hqlstm", frame)
        assert run("forecast", "--model-file", m, "--history", path, "--out", tmp_path / "f.csv") == 0
        assert len((tmp_path / "f.csv").read_text().splitlines()) == 2
        assert run("forecast", "--model-file", m, "--history", path, "--horizon", 5, "--out", tmp_path / "g.csv") == 2

    def test_corrupt_model_file(self, data, tmp_path, capsys):
        path, _ = data
        doc = json.loads(self._model(tmp_path, "mlp", data[1]).read_text())
        doc["version"] = 7
        (tmp_path / "bad.json").write_text(json.dumps(doc))
        assert run("forecast", "--model-file", tmp_path / "bad.json", "--history", path, "--out", tmp_path / "f.csv") == 3
        assert "version" in capsys.readouterr().err


class TestEvaluateAnalyze:
    def test_evaluate_six_metrics(self, data, tmp_path):
        path, frame = data
        save_model(tmp_path / "m.json", build_model("hqlstm", seed=0), fit_scaler(frame))
        assert run("evaluate", "--model-file", tmp_path / "m.json", "--data", path, "--out", tmp_path / "e.json") == 0
        doc = json.loads((tmp_path / "e.json").read_text())
        assert set(doc["metrics"]) >= {"mae", "mse", "rmse", "mape", "vaf", "r2"}

    def test_fim_rank_curve(self, tmp_path):
        assert run("analyze", "fim", "--circuit", "vvrq", "--qubits", 3, "--depths", "1..3", "--theta-draws", 2,
                   "--x-draws", 10, "--out", tmp_path) == 0
        lines = (tmp_path / "rank_curve.csv").read_text().splitlines()
        assert lines[0] == "depth,rank" and len(lines) == 4
        assert (tmp_path / "eigenvalues_d2.csv").exists()

    def test_fourier_summary(self, tmp_path):
        assert run("analyze", "fourier", "--circuit", "qdi", "--theta-draws", 5, "--out", tmp_path) == 0
        doc = json.loads((tmp_path / "summary.json").read_text())
        assert doc["n_components"] == 161 and doc["nonzero_fraction"] > 0.9

    def test_synth(self, tmp_path):
        assert run("synth", "--days", 3, "--out", tmp_path / "s.csv") == 0
        assert len((tmp_path / "s.csv").read_text().splitlines()) == 73
