import json

import numpy as np
import pytest

from histfun.cli import main
from histfun.estimator import load_fit_json


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = run(
        [
            "simulate", "--scenario", 1, "--N", 16, "--grid-points", 33,
            "--sigma", 0.25, "--seed", 7, "--out", out,
        ]
    )
    assert code == 0
    return out


@pytest.fixture(scope="module")
def fit_dir(sim_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    code = run(
        [
            "fit", "--in-x", sim_dir / "x.csv", "--in-y", sim_dir / "y.csv",
            "--M", 4, "--lam", 0.3, "--omega", 1e-4, "--out", out,
        ]
    )
    assert code == 0
    return out


class TestSimulate:
    def test_artifacts_exist(self, sim_dir):
        for name in ("x.csv", "y.csv", "truth.json"):
            assert (sim_dir / name).exists()

    def test_byte_reproducible(self, sim_dir, tmp_path):
        code = run(
            [
                "simulate", "--scenario", 1, "--N", 16, "--grid-points", 33,
                "--sigma", 0.25, "--seed", 7, "--out", tmp_path,
            ]
        )
        assert code == 0
        for name in ("x.csv", "y.csv", "truth.json"):
            assert (tmp_path / name).read_bytes() == (sim_dir / name).read_bytes()

    def test_truth_contents(self, sim_dir):
        truth = json.loads((sim_dir / "truth.json").read_text())
        assert truth["scenario"]["id"] == 1
        assert truth["scenario"]["delta_true"] == 0.5
        assert truth["N"] == 16


class TestFit:
    def test_artifacts_and_quantization(self, fit_dir):
        payload = load_fit_json(fit_dir / "fit.json")
        step = payload["T"] / payload["M"]
        ratio = payload["delta_hat"] / step
        assert abs(ratio - round(ratio)) <= 1e-12
        assert (fit_dir / "beta_grid.csv").exists()

    def test_beta_grid_header(self, fit_dir):
        first = (fit_dir / "beta_grid.csv").read_text().splitlines()[0]
        assert first == "s,t,value"


class TestTune:
    def test_tune_writes_records(self, sim_dir, tmp_path):
        code = run(
            [
                "tune", "--in-x", sim_dir / "x.csv", "--in-y", sim_dir / "y.csv",
                "--M", 4, "--lambda-grid", "0.05,0.3,1.0",
                "--omega-grid", "1e-4", "--out", tmp_path,
            ]
        )
        assert code == 0
        lines = (tmp_path / "tuning.csv").read_text().splitlines()
        assert lines[0].startswith("lambda,omega_h")
        assert len(lines) == 4  # header + three candidates
        payload = load_fit_json(tmp_path / "fit.json")
        assert payload["lambda"] in (0.05, 0.3, 1.0)


class TestBootstrap:
    def test_ci_artifacts(self, sim_dir, fit_dir, tmp_path):
        code = run(
            [
                "bootstrap", "--in-x", sim_dir / "x.csv",
                "--in-y", sim_dir / "y.csv", "--fit", fit_dir / "fit.json",
                "--B", 8, "--seed", 3, "--out", tmp_path,
            ]
        )
        assert code == 0
        ci = json.loads((tmp_path / "ci.json").read_text())
        assert ci["lower"] <= ci["upper"]
        assert ci["B"] == 8
        deltas = np.loadtxt(tmp_path / "deltas.csv", ndmin=1)
        assert deltas.size <= 8

    def test_seeded_reproducibility(self, sim_dir, fit_dir, tmp_path):
        outs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            code = run(
                [
                    "bootstrap", "--in-x", sim_dir / "x.csv",
                    "--in-y", sim_dir / "y.csv", "--fit", fit_dir / "fit.json",
                    "--B", 8, "--seed", 3, "--out", out,
                ]
            )
            assert code == 0
            outs.append(out)
        assert (outs[0] / "ci.json").read_bytes() == (outs[1] / "ci.json").read_bytes()
        assert (
            outs[0] / "deltas.csv"
        ).read_bytes() == (outs[1] / "deltas.csv").read_bytes()


class TestReport:
    def test_metrics_csv(self, sim_dir, fit_dir, tmp_path):
        code = run(
            [
                "report", "--truth", sim_dir / "truth.json",
                "--fits", fit_dir / "fit.json", fit_dir / "fit.json",
                "--out", tmp_path,
            ]
        )
        assert code == 0
        lines = (tmp_path / "metrics.csv").read_text().splitlines()
        assert lines[0].startswith("n,delta_true")
        fields = lines[1].split(",")
        assert fields[0] == "2"


class TestErrors:
    def test_malformed_csv_gives_json_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("0,0.5,1\n")  # grid row only, no curves
        code = run(
            [
                "fit", "--in-x", bad, "--in-y", bad,
                "--M", 3, "--out", tmp_path / "out",
            ]
        )
        assert code == 1
        err = capsys.readouterr().err
        payload = json.loads(err.strip().splitlines()[-1])
        assert payload["error"] == "DataError"
        assert payload["message"]

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit):
            run(["frobnicate"])
