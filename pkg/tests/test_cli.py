import json

import numpy as np
import pytest

from mare_forge.base_process import fit_arma, latent_gaussian_series
from mare_forge.cli import main
from mare_forge.conditional_fit import fit_conditional_models
from mare_forge.dataio import load_csv, save_csv
from mare_forge.fixtures import make_fixture


@pytest.fixture(scope="module")
def fixture_csv(tmp_path_factory):
    p = tmp_path_factory.mktemp("data") / "ar1.csv"
    rc = main(["make-fixture", "--kind", "ar1-error", "--n", "400", "--seed", "13", "--out", str(p)])
    assert rc == 0
    return p


def run_cli(fixture_csv, out_dir, *extra):
    args = [
        "run",
        "--input", str(fixture_csv),
        "--output-dir", str(out_dir),
        "--target-mape", "12",
        "--scenarios", "4",
        "--seed", "5",
        "--mode", "iid",
    ]
    return main(args + list(extra))


class TestMakeFixture:
    def test_ar1_lag1_autocorrelation(self, fixture_csv):
        s = load_csv(fixture_csv)
        e = s.errors()
        e = e - e.mean()
        rho1 = float(np.sum(e[1:] * e[:-1]) / np.sum(e**2))
        assert 0.65 <= rho1 <= 0.88

    def test_ar1_lag1_autocorrelation_large(self):
        s = make_fixture("ar1-error", 2000, seed=13)
        e = s.errors() - s.errors().mean()
        rho1 = float(np.sum(e[1:] * e[:-1]) / np.sum(e**2))
        assert 0.72 <= rho1 <= 0.85

    def test_iid_fixture_gives_empty_arma(self, tmp_path):
        s = make_fixture("iid-error", 1200, seed=3)
        model = fit_conditional_models(s, 0.05)
        arma = fit_arma(latent_gaussian_series(s, model), max_order=(2, 2))
        assert (arma.p, arma.q) == (0, 0)

    def test_n_validation(self):
        with pytest.raises(ValueError):
            make_fixture("iid-error", 50, seed=1)


class TestRun:
    def test_artifacts_and_log(self, fixture_csv, tmp_path):
        out = tmp_path / "run1"
        assert run_cli(fixture_csv, out) == 0
        for name in (
            "fitted_model.json",
            "target_function.json",
            "adjusted_params.json",
            "scenarios.csv",
            "provenance.json",
            "scores.json",
            "run.log",
        ):
            assert (out / name).exists(), name
        log = (out / "run.log").read_text()
        for key in ("r_mhat=", "p_sid=", "r_tilde_max=", "max_feasible_mape=", "seed=", "a="):
            assert key in log
        header = (out / "scenarios.csv").read_text().splitlines()[0]
        assert header.split(",") == ["datetime", "x", "scenario_1", "scenario_2", "scenario_3", "scenario_4"]

    def test_determinism(self, fixture_csv, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run_cli(fixture_csv, out1) == 0
        assert run_cli(fixture_csv, out2) == 0
        assert (out1 / "scenarios.csv").read_bytes() == (out2 / "scenarios.csv").read_bytes()

    def test_infeasible_target_exit_code(self, fixture_csv, tmp_path, capsys):
        out = tmp_path / "bad"
        rc = run_cli(fixture_csv, out, "--target-mape", "5000")
        assert rc == 2
        err = capsys.readouterr().err
        assert "infeasible" in err
        assert "max feasible MAPE" in err
        assert "error=infeasible_target" in (out / "run.log").read_text()

    def test_config_file_with_flag_override(self, fixture_csv, tmp_path):
        out = tmp_path / "cfg"
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps({
            "input_csv": str(fixture_csv),
            "output_dir": str(out),
            "target_mape": 8.0,
            "scenarios": 2,
            "seed": 9,
        }))
        assert main(["run", "--config", str(cfg), "--scenarios", "3"]) == 0
        header = (out / "scenarios.csv").read_text().splitlines()[0]
        assert header.count("scenario_") == 3  # flag beat the config file

    def test_unknown_config_key(self, fixture_csv, tmp_path, capsys):
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps({"input_csv": str(fixture_csv), "bogus": 1}))
        assert main(["run", "--config", str(cfg)]) == 1
        assert "unknown config keys" in capsys.readouterr().err

    def test_missing_required(self, capsys):
        assert main(["run", "--target-mape", "10"]) == 1
        assert "missing required" in capsys.readouterr().err

    def test_role_inversion_matches_swapped_columns(self, fixture_csv, tmp_path):
        # swapping the roles must equal running on a column-swapped file
        s = load_csv(fixture_csv)
        swapped = tmp_path / "swapped.csv"
        from conftest import series_from_values

        sw = series_from_values(s.y, s.x, cap=s.cap)
        save_csv(sw, swapped)

        out1, out2 = tmp_path / "inv", tmp_path / "sw"
        rc1 = main([
            "run", "--input", str(fixture_csv), "--output-dir", str(out1),
            "--target-mape", "10", "--scenarios", "2", "--seed", "3",
            "--mode", "iid", "--roles", "actuals-to-forecasts", "--cap", str(s.cap),
        ])
        rc2 = main([
            "run", "--input", str(swapped), "--output-dir", str(out2),
            "--target-mape", "10", "--scenarios", "2", "--seed", "3",
            "--mode", "iid", "--cap", str(s.cap),
        ])
        assert rc1 == 0 and rc2 == 0
        assert (out1 / "scenarios.csv").read_bytes() == (out2 / "scenarios.csv").read_bytes()

    def test_sid_window(self, fixture_csv, tmp_path):
        out = tmp_path / "sid"
        s = load_csv(fixture_csv)
        rc = run_cli(
            fixture_csv, out,
            "--sid-start", s.timestamps[0].isoformat(),
            "--sid-end", s.timestamps[47].isoformat(),
        )
        assert rc == 0
        rows = (out / "scenarios.csv").read_text().splitlines()
        assert len(rows) == 49  # header + 48 SID rows

    def test_data_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("datetime,forecasts,actuals\n2021-01-01T00:00:00,1.0,-3.0\n")
        rc = main([
            "run", "--input", str(bad), "--output-dir", str(tmp_path / "o"),
            "--target-mape", "10",
        ])
        assert rc == 1
        assert "error" in capsys.readouterr().err

    def test_external_sid_csv(self, fixture_csv, tmp_path):
        s = load_csv(fixture_csv)
        sid_file = tmp_path / "sid.csv"
        lines = ["datetime,x"]
        lines += [f"{t.isoformat()},{float(v)!r}" for t, v in zip(s.timestamps[:24], s.x[:24])]
        sid_file.write_text("\n".join(lines) + "\n")
        out = tmp_path / "ext"
        rc = run_cli(fixture_csv, out, "--sid-csv", str(sid_file))
        assert rc == 0
        rows = (out / "scenarios.csv").read_text().splitlines()
        assert len(rows) == 25

    def test_score_flags(self, fixture_csv, tmp_path):
        out = tmp_path / "scored"
        rc = run_cli(fixture_csv, out, "--score-lags", "5", "--score-weights", "2,0,1")
        assert rc == 0
        doc = json.loads((out / "scores.json").read_text())
        assert doc["p_lags"] == 5
        assert doc["weights"] == [2.0, 0.0, 1.0]
        assert doc["composite"] == pytest.approx(
            2.0 * doc["s_mare"] + 1.0 * doc["s_second_difference"]
        )

    def test_threads_env_does_not_change_output(self, fixture_csv, tmp_path, monkeypatch):
        out1, out2 = tmp_path / "t1", tmp_path / "t2"
        monkeypatch.delenv("MARE_FORGE_THREADS", raising=False)
        assert run_cli(fixture_csv, out1) == 0
        monkeypatch.setenv("MARE_FORGE_THREADS", "4")
        assert run_cli(fixture_csv, out2) == 0
        assert (out1 / "scenarios.csv").read_bytes() == (out2 / "scenarios.csv").read_bytes()
