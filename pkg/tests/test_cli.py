"""
CLI de ponta a ponta via app.main (sem subprocessos).
"""
import json

import numpy as np
import pytest

from app import main
from config.settings import settings
from tools.dataset_io import artifact, read_json, read_spd_dataset, write_json

SMALL = ["--n-classes", "3", "--per-class", "10", "--dim", "6", "--block-dim", "3"]


def _error(capsys) -> dict:
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith('{"error"')]
    assert lines, "sem JSON de erro no stderr"
    return json.loads(lines[-1])["error"]


@pytest.fixture
def spd_train(tmp_path):
    out = tmp_path / "train"
    assert main(["synth", "--out", str(out), "--seed", "1", *SMALL]) == 0
    return out / "manifest.json"


@pytest.fixture
def spd_test(tmp_path):
    out = tmp_path / "test"
    assert main(["synth", "--out", str(out), "--seed", "2", *SMALL]) == 0
    return out / "manifest.json"


class TestSynth:

    def test_deterministic(self, tmp_path):
        for name in ("a", "b"):
            assert main(["synth", "--out", str(tmp_path / name), "--seed", "5", *SMALL]) == 0
        assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()
        for f in sorted((tmp_path / "a" / "samples").iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / "samples" / f.name).read_bytes()

    def test_zero_noise_gives_class_centers(self, tmp_path):
        assert main(["synth", "--out", str(tmp_path / "ds"), "--noise", "0", *SMALL]) == 0
        samples = read_spd_dataset(tmp_path / "ds").samples
        for s in samples:
            first = next(x for x in samples if x.label == s.label)
            np.testing.assert_array_equal(s.matrix, first.matrix)

    def test_manifest_carries_run_config(self, spd_train):
        manifest = read_json(spd_train)
        assert manifest["format_version"] == settings.FORMAT_VERSION
        assert manifest["run_config"]["per_class"] == 10
        assert manifest["count"] == 30

    def test_config_file_with_flag_override(self, tmp_path):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"n-classes": 2, "per_class": 2, "dim": 3, "block_dim": 2}))
        out = tmp_path / "ds"
        assert main(["synth", "--config", str(config), "--per-class", "3", "--out", str(out)]) == 0
        manifest = read_json(out / "manifest.json")
        assert manifest["count"] == 6
        assert manifest["run_config"]["per_class"] == 3
        assert manifest["run_config"]["dim"] == 3

    def test_trials(self, tmp_path):
        out = tmp_path / "trials"
        assert main(["synth", "--kind", "trials", "--per-class", "2", "--n-classes", "2", "--out", str(out)]) == 0
        manifest = read_json(out / "manifest.json")
        assert manifest["kind"] == "trial-dataset"
        assert manifest["count"] == 4


class TestFitTransformEval:

    def test_full_dimension_fit_has_zero_objective(self, spd_train, capsys):
        assert main(["fit", "--data", str(spd_train), "--target-dim", "6", "--k-neighbors", "3"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["kind"] == "dplm-model"
        assert out["objective"] == 0.0
        assert out["status"] == "converged"

    def test_end_to_end(self, tmp_path, spd_train, spd_test, capsys):
        model = tmp_path / "dplm.json"
        common = ["--target-dim", "3", "--k-neighbors", "3", "--max-outer-iterations", "30"]
        assert main(["fit", "--data", str(spd_train), "--out", str(model), *common]) == 0
        assert main(["transform", "--model", str(model), "--data", str(spd_train), "--out", str(tmp_path / "rtrain")]) == 0
        assert main(["transform", "--model", str(model), "--data", str(spd_test), "--out", str(tmp_path / "rtest")]) == 0
        assert read_spd_dataset(tmp_path / "rtest").dim == 3

        clf = tmp_path / "clf.json"
        assert main(["train", "--data", str(tmp_path / "rtrain"), "--out", str(clf)]) == 0
        capsys.readouterr()
        assert main(["eval", "--model", str(clf), "--data", str(tmp_path / "rtest")]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["kind"] == "evaluation"
        assert report["dim"] == 3
        assert report["kappa"] >= 0.9
        assert "run_config" in report

    def test_fgmdm(self, tmp_path, spd_train, spd_test, capsys):
        clf = tmp_path / "clf.json"
        assert main(["train", "--data", str(spd_train), "--classifier", "fgmdm", "--out", str(clf)]) == 0
        assert read_json(clf)["model"]["kind"] == "fgmdm"
        capsys.readouterr()
        assert main(["eval", "--model", str(clf), "--data", str(spd_test)]) == 0
        assert json.loads(capsys.readouterr().out)["classifier"] == "fgmdm"

    def test_one_sample_per_class(self, tmp_path, capsys):
        data = tmp_path / "ds"
        assert main(["synth", "--out", str(data), "--n-classes", "3", "--per-class", "1", "--dim", "4"]) == 0
        clf = tmp_path / "clf.json"
        assert main(["train", "--data", str(data), "--out", str(clf)]) == 0
        capsys.readouterr()
        assert main(["eval", "--model", str(clf), "--data", str(data)]) == 0
        assert json.loads(capsys.readouterr().out)["kappa"] == 1.0


class TestExitCodes:

    def test_missing_file(self, tmp_path, capsys):
        assert main(["fit", "--data", str(tmp_path / "nope" / "manifest.json")]) == 3
        err = _error(capsys)
        assert err["type"] == "DataFileNotFoundError"
        assert err["exit_code"] == 3

    def test_invalid_parameter(self, tmp_path, capsys):
        assert main(["synth", "--out", str(tmp_path / "x"), "--dim", "4", "--block-dim", "9"]) == 2
        assert _error(capsys)["type"] == "ConfigurationError"

    def test_unknown_metric(self, tmp_path, capsys):
        assert main(["synth", "--out", str(tmp_path / "x"), "--metric", "euclid"]) == 2

    def test_unknown_config_key(self, tmp_path, capsys):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"learning_rate": 0.1}))
        assert main(["synth", "--config", str(config), "--out", str(tmp_path / "x")]) == 2
        assert "learning_rate" in _error(capsys)["message"]

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["synth", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "x")]) == 3

    def test_usage_error(self):
        assert main(["fit"]) == 2
        assert main(["no-such-command"]) == 2

    def test_target_dim_above_dimension(self, spd_train, capsys):
        assert main(["fit", "--data", str(spd_train), "--target-dim", "7"]) == 2

    def test_model_missing_fields(self, tmp_path, spd_train, capsys):
        model = tmp_path / "broken.json"
        write_json(model, artifact("dplm-model", {"model": {"kind": "dplm"}}))
        args = ["transform", "--model", str(model), "--data", str(spd_train), "--out", str(tmp_path / "out")]
        assert main(args) == 3
        err = _error(capsys)
        assert err["type"] == "DataFormatError"
        assert err["exit_code"] == 3

    def test_artifact_without_model(self, tmp_path, spd_train, capsys):
        clf = tmp_path / "clf.json"
        write_json(clf, artifact("classifier", {"dim": 6}))
        assert main(["eval", "--model", str(clf), "--data", str(spd_train)]) == 3
        assert _error(capsys)["type"] == "DataFormatError"

    def test_classifier_with_wrong_shape(self, tmp_path, spd_train, capsys):
        clf = tmp_path / "clf.json"
        write_json(clf, artifact("classifier", {"model": {"kind": "mdm", "classes": [0], "class_means": "x"}}))
        assert main(["eval", "--model", str(clf), "--data", str(spd_train)]) == 3
        assert _error(capsys)["type"] == "DataFormatError"

    @pytest.mark.parametrize("raw", [{"per_class": "many"}, {"dim": True}, {"bands": "8:30"}])
    def test_config_field_with_wrong_type(self, tmp_path, capsys, raw):
        config = tmp_path / "run.json"
        config.write_text(json.dumps(raw))
        assert main(["synth", "--config", str(config), "--out", str(tmp_path / "x")]) == 2
        err = _error(capsys)
        assert err["type"] == "ConfigurationError"
        assert next(iter(raw)) in err["message"]


class TestBench:

    BENCH = ["bench", "--sizes", "20", "--bench-dims", "4", "--k-neighbors", "2",
             "--bench-classes", "2", "--repetitions", "1"]

    def test_single_point(self, tmp_path):
        out = tmp_path / "bench.csv"
        assert main([*self.BENCH, "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "N,n,m,K,seconds_per_iteration"
        assert len(lines) == 2
        assert lines[1].startswith("20,4,2,2,")

    def test_csv_has_provenance_sidecar(self, tmp_path):
        out = tmp_path / "bench.csv"
        assert main([*self.BENCH, "--target-dim", "3", "--out", str(out)]) == 0
        sidecar = read_json(f"{out}.json")
        assert sidecar["kind"] == "bench"
        assert sidecar["format_version"] == settings.FORMAT_VERSION
        assert sidecar["run_config"]["sizes"] == [20]
        assert sidecar["csv"] == str(out)
        assert [(r["N"], r["n"], r["m"], r["K"]) for r in sidecar["rows"]] == [(20, 4, 3, 2)]

    def test_stdout_is_artifact(self, capsys):
        assert main(self.BENCH) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["format_version"] == settings.FORMAT_VERSION
        assert report["run_config"]["bench_dims"] == [4]
        assert report["columns"] == ["N", "n", "m", "K", "seconds_per_iteration"]
        assert len(report["rows"]) == 1

    def test_too_few_samples(self, capsys):
        assert main(["bench", "--sizes", "5", "--bench-dims", "4", "--k-neighbors", "3"]) == 2


class TestPreprocAndSession:

    @pytest.fixture
    def trial_sets(self, tmp_path):
        common = ["--kind", "trials", "--n-classes", "2", "--per-class", "6"]
        assert main(["synth", "--out", str(tmp_path / "ttrain"), "--seed", "1", *common]) == 0
        assert main(["synth", "--out", str(tmp_path / "ttest"), "--seed", "2", *common]) == 0
        return tmp_path / "ttrain", tmp_path / "ttest"

    def test_preproc_select(self, trial_sets, capsys):
        train, _ = trial_sets
        args = ["preproc-select", "--data", str(train), "--window-starts", "3.0", "--window-lengths", "1.0", "2.0",
                "--bands", "10:20", "8:30", "--folds", "3", "--top-k", "2"]
        assert main(args) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["kind"] == "preproc-selection"
        assert report["n_cases"] == 4
        assert len(report["ranking"]) == 4

    def test_bad_band_flag(self, trial_sets):
        train, _ = trial_sets
        assert main(["preproc-select", "--data", str(train), "--bands", "10-20"]) == 2

    def test_session_with_fixed_preset(self, trial_sets, capsys):
        train, test = trial_sets
        args = ["session", "--train", str(train), "--test", str(test), "--preset", "fixed",
                "--target-dim", "2", "--k-neighbors", "3", "--max-outer-iterations", "10"]
        assert main(args) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["kind"] == "session-report"
        assert report["preproc"]["band_low"] == 8.0
        assert report["performance"]["final_dim"] == 2
        steps = {s["step"]: s["status"] for s in report["steps"]}
        assert steps["preproc_selection"] == "skipped"
        assert steps["dplm"] == "success"

    def test_session_falls_back_when_folds_do_not_fit(self, trial_sets, capsys):
        train, test = trial_sets
        args = ["session", "--train", str(train), "--test", str(test), "--folds", "10",
                "--no-reduce", "--window-starts", "3.0", "--window-lengths", "2.0", "--bands", "8:30"]
        assert main(args) == 0
        report = json.loads(capsys.readouterr().out)
        steps = {s["step"]: s["status"] for s in report["steps"]}
        assert steps["preproc_selection"] == "fallback"
        assert steps["dplm"] == "skipped"
        assert report["performance"]["final_dim"] == 4

    def test_session_reuses_preproc_report(self, tmp_path, trial_sets, capsys):
        train, test = trial_sets
        selection = tmp_path / "preproc.json"
        args = ["preproc-select", "--data", str(train), "--window-starts", "3.0", "--window-lengths", "2.0",
                "--bands", "10:20", "--folds", "3", "--top-k", "1", "--out", str(selection)]
        assert main(args) == 0
        chosen = read_json(selection)["spec"]

        args = ["session", "--train", str(train), "--test", str(test), "--preproc", str(selection), "--no-reduce"]
        assert main(args) == 0
        report = json.loads(capsys.readouterr().out)
        step = next(s for s in report["steps"] if s["step"] == "preproc_selection")
        assert step == {"step": "preproc_selection", "status": "skipped", "reason": "provided"}
        assert report["preproc"] == chosen
        assert "preproc_selection" not in report

    def test_session_rejects_wrong_preproc_artifact(self, tmp_path, trial_sets, capsys):
        train, test = trial_sets
        other = tmp_path / "other.json"
        write_json(other, artifact("classifier", {"model": {}}, {}))
        args = ["session", "--train", str(train), "--test", str(test), "--preproc", str(other)]
        assert main(args) == 3
        assert _error(capsys)["type"] == "DataFormatError"


@pytest.mark.slow
class TestBlockFixture:

    def test_reduce_train_eval_reaches_kappa(self, tmp_path, capsys):
        block = ["--n-classes", "4", "--per-class", "30", "--dim", "10", "--block-dim", "4"]
        for name, seed in (("train", "1"), ("test", "2")):
            assert main(["synth", "--out", str(tmp_path / name), "--seed", seed, *block]) == 0

        model = tmp_path / "dplm.json"
        assert main(["fit", "--data", str(tmp_path / "train"), "--target-dim", "4", "--k-neighbors", "5",
                     "--out", str(model)]) == 0
        for name in ("train", "test"):
            assert main(["transform", "--model", str(model), "--data", str(tmp_path / name),
                         "--out", str(tmp_path / f"r{name}")]) == 0
        assert read_spd_dataset(tmp_path / "rtest").dim == 4

        clf = tmp_path / "clf.json"
        assert main(["train", "--data", str(tmp_path / "rtrain"), "--out", str(clf)]) == 0
        capsys.readouterr()
        assert main(["eval", "--model", str(clf), "--data", str(tmp_path / "rtest")]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["dim"] == 4
        assert report["kappa"] >= 0.9
