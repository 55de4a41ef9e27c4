"""End-to-end CLI tests: generators, sample-file round trips,
determinism of the run pipeline, metrics, and exit codes."""

import json
import os

import numpy as np
import pytest

from l1ball.cli import (
    compute_selection_metrics,
    load_config,
    main,
    read_samples,
    run_experiment,
    summarize_bundle,
    write_samples,
)
from l1ball.datagen import (
    generate_mixture,
    generate_regression,
    load_frames,
    load_matrix,
    save_frames,
)
from l1ball.sampler import SampleRecord

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


class TestGenerators:
    def test_mixture_mean_near_analytic(self, tmp_path):
        # weights (0.3, 0.3, 0.4) on means (0, 4, 6): mean 3.6, and the
        # mixture sd is below 2.7, so a 5-sigma band at n=1000 is +-0.43
        generate_mixture(
            tmp_path, n=1000, weights=[0.3, 0.3, 0.4], mus=[0, 4, 6], sigma2s=1.0, seed=0
        )
        y = load_matrix(tmp_path / "y.csv").ravel()
        assert abs(y.mean() - 3.6) < 0.45

    def test_regression_table_setting(self, tmp_path):
        truth = generate_regression(tmp_path, n=50, p=300, c0=10, signal=5.0, seed=1)
        X = load_matrix(tmp_path / "X.csv")
        assert X.shape == (50, 300)
        assert np.count_nonzero(truth["theta0"]) == 10

    def test_correlated_design_lag1(self, tmp_path):
        generate_regression(
            tmp_path, n=4000, p=10, c0=2, signal=1.0, design="correlated", seed=2
        )
        X = load_matrix(tmp_path / "X.csv")
        lag1 = [np.corrcoef(X[:, j], X[:, j + 1])[0, 1] for j in range(9)]
        assert abs(np.mean(lag1) - 0.5) < 0.05

    def test_frame_stack_round_trip(self, tmp_path):
        frames = np.random.default_rng(0).standard_normal((3, 4, 5))
        path = tmp_path / "frames.bin"
        save_frames(path, frames)
        np.testing.assert_array_equal(load_frames(path), frames)


class TestSampleFiles:
    def test_exact_zero_round_trip(self, tmp_path):
        recs = [
            SampleRecord(
                theta=np.array([0.0, 1.25, 0.0, -3.5e-17]),
                r=2.0,
                extras={},
                log_posterior=-12.5,
                accept_stat=0.9,
            )
        ]
        path = tmp_path / "samples_chain0.csv"
        write_samples(path, recs)
        back = read_samples(path)[0]
        np.testing.assert_array_equal(back.theta, recs[0].theta)
        assert back.theta[0] == 0.0 and back.theta[2] == 0.0
        assert back.r == 2.0 and back.log_posterior == -12.5


class TestRunPipeline:
    def _config(self, tmp_path, name="regression_small.json"):
        config = load_config(os.path.join(CONFIG_DIR, name))
        config["output_dir"] = str(tmp_path / "bundle")
        return config

    def test_bundled_regression_smoke(self, tmp_path):
        bundle = run_experiment(self._config(tmp_path))
        assert os.path.exists(bundle["summary"])
        assert os.path.exists(bundle["diagnostics"])
        with open(bundle["summary"]) as fh:
            doc = json.load(fh)
        assert len(doc["frechet_mean"]) == 20
        # generous signal: the dominant coordinates should be recovered
        assert os.path.exists(bundle["metrics"])

    def test_rerun_bitwise_identical(self, tmp_path):
        c1 = self._config(tmp_path)
        c1["output_dir"] = str(tmp_path / "a")
        c2 = self._config(tmp_path)
        c2["output_dir"] = str(tmp_path / "b")
        b1 = run_experiment(c1)
        b2 = run_experiment(c2)
        for p1, p2 in zip(b1["samples"], b2["samples"]):
            with open(p1, "rb") as f1, open(p2, "rb") as f2:
                assert f1.read() == f2.read()

    def test_theory_constraint_rejected(self, tmp_path):
        config = self._config(tmp_path)
        config["prior"] = {"theory": {"b1": 1.0, "b2": 0.5, "b3": 0.9}}
        config_path = tmp_path / "bad.json"
        with open(config_path, "w") as fh:
            json.dump(config, fh)
        assert main(["run", str(config_path)]) == 2

    def test_summarize_renders_figures(self, tmp_path):
        config = self._config(tmp_path)
        run_experiment(config)
        assert main(["summarize", config["output_dir"]]) == 0
        assert os.path.exists(os.path.join(config["output_dir"], "cardinality_pmf.png"))
        assert os.path.exists(os.path.join(config["output_dir"], "zero_prob_map.png"))

    def test_metrics_command(self, tmp_path):
        config = self._config(tmp_path)
        bundle = run_experiment(config)
        code = main(["metrics", config["output_dir"], bundle["data_dir"]])
        assert code == 0
        assert os.path.exists(os.path.join(config["output_dir"], "metrics.csv"))


class TestExitCodes:
    def test_missing_config(self):
        assert main(["run", "/nonexistent/config.json"]) == 2

    def test_malformed_config(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["run", str(path)]) == 2

    def test_missing_required_key(self, tmp_path):
        path = tmp_path / "partial.json"
        path.write_text(json.dumps({"model": "regression"}))
        assert main(["run", str(path)]) == 2

    def test_unknown_generator_kind(self, tmp_path):
        path = tmp_path / "gen.json"
        path.write_text(json.dumps({"kind": "nope", "output_dir": str(tmp_path)}))
        assert main(["generate", str(path)]) == 2


class TestSelectionMetrics:
    def test_perfect_recovery(self):
        doc = {"frechet_mean": [1.0, -2.0, 0.0, 0.0]}
        truth = {"support": [0, 1]}
        assert compute_selection_metrics(doc, truth) == (0.0, 0.0)

    def test_all_zero_estimate(self):
        doc = {"frechet_mean": [0.0, 0.0, 0.0]}
        truth = {"support": [0, 1]}
        fpr, fnr = compute_selection_metrics(doc, truth)
        assert fpr == 0.0 and fnr == 1.0

    def test_hand_count(self):
        # est support {0, 2, 3}; truth {0, 1}; true zeros {2, 3, 4}
        doc = {"frechet_mean": [0.5, 0.0, 1.0, -1.0, 0.0]}
        truth = {"support": [0, 1]}
        fpr, fnr = compute_selection_metrics(doc, truth)
        assert fpr == pytest.approx(2 / 3)
        assert fnr == pytest.approx(1 / 2)
