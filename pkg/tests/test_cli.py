"""CLI contract: artifacts, determinism, exit codes, overrides."""
import csv
import json

import pytest

from cvbias.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, _resolve_threads, main


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=1))
    return path


def ar_doc(rho=0.9, reps=40, seed=11, T=20, intercept=True, **experiment):
    return {
        "dgp": {
            "mean_kind": {"kind": "ar1", "rho": rho},
            "errors": {"kind": "iid_gaussian", "sigma2": 1.0},
            "burn_in": 200,
        },
        "models": [{"id": "ar1c", "columns": [0], "intercept": intercept}],
        "schemes": [{"kind": "loo"}],
        "experiment": {"reps": reps, "seed": seed, "T": T, **experiment},
    }


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestSimulate:
    def test_rho_zero_mu_column_is_zero(self, tmp_path):
        cfg = write_config(tmp_path, ar_doc(rho=0.0))
        out = tmp_path / "path.csv"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        rows = read_csv(out)
        assert all(float(r["mu_true"]) == 0.0 for r in rows)

    def test_same_seed_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, ar_doc())
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["simulate", "--config", str(cfg), "--out", str(out1)])
        main(["simulate", "--config", str(cfg), "--out", str(out2)])
        assert out1.read_bytes() == out2.read_bytes()

    def test_seed_override_changes_output(self, tmp_path):
        cfg = write_config(tmp_path, ar_doc())
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["simulate", "--config", str(cfg), "--out", str(out1)])
        main(["simulate", "--config", str(cfg), "--out", str(out2), "--seed", "99"])
        assert out1.read_bytes() != out2.read_bytes()

    def test_row_count_and_lag_columns(self, tmp_path):
        doc = ar_doc(T=10)
        doc["dgp"]["burn_in"] = 100
        doc["experiment"]["max_lag"] = 4
        cfg = write_config(tmp_path, doc)
        out = tmp_path / "p.csv"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        rows = read_csv(out)
        assert len(rows) == 10
        assert set(rows[0]) == {"index", "y", "mu_true", "eps_true",
                                "lag_1", "lag_2", "lag_3", "lag_4"}

    def test_var_path_columns(self, tmp_path):
        doc = ar_doc()
        doc["dgp"]["mean_kind"] = {"kind": "var_p", "A": [[[0.5, 0.1], [0.0, 0.3]]]}
        doc["models"] = []
        doc["experiment"]["max_lag"] = 1
        cfg = write_config(tmp_path, doc)
        out = tmp_path / "v.csv"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        rows = read_csv(out)
        assert set(rows[0]) == {"index", "y_1", "y_2", "mu_true_1", "mu_true_2",
                                "eps_true_1", "eps_true_2", "lag_1_s1", "lag_1_s2"}

    def test_manifest_sits_beside_output(self, tmp_path):
        cfg = write_config(tmp_path, ar_doc())
        out = tmp_path / "p.csv"
        main(["simulate", "--config", str(cfg), "--out", str(out)])
        manifest = json.loads((tmp_path / "p.csv.manifest.json").read_text())
        assert manifest["master_seed"] == 11
        assert manifest["config_hash"]

    def test_manifest_config_round_trips(self, tmp_path):
        from cvbias.config import RunConfig, load_config

        cfg_path = write_config(tmp_path, ar_doc())
        out = tmp_path / "p.csv"
        main(["simulate", "--config", str(cfg_path), "--out", str(out)])
        manifest = json.loads((tmp_path / "p.csv.manifest.json").read_text())
        echoed = RunConfig.from_dict(manifest["resolved_config"])
        assert echoed == load_config(cfg_path)


class TestExitCodes:
    def test_invalid_json_is_config_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o.csv")]) == EXIT_CONFIG

    def test_unknown_key_is_config_error(self, tmp_path):
        doc = ar_doc()
        doc["experiment"]["repz"] = 3
        cfg = write_config(tmp_path, doc)
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == EXIT_CONFIG

    def test_nonstationary_dgp_is_config_error(self, tmp_path):
        cfg = write_config(tmp_path, ar_doc(rho=1.0))
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == EXIT_CONFIG

    def test_singular_fit_is_numerical_error(self, tmp_path):
        doc = ar_doc(reps=3)
        doc["dgp"]["errors"]["zero_noise"] = True  # all-zero lag columns
        cfg = write_config(tmp_path, doc)
        code = main(["decompose", "--config", str(cfg), "--out", str(tmp_path / "d")])
        assert code == EXIT_NUMERICAL

    def test_empty_sweep_grid_is_config_error(self, tmp_path):
        cfg = write_config(tmp_path, ar_doc())
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s")]) == EXIT_CONFIG

    def test_reliability_trip_wire_exit_code(self, tmp_path, monkeypatch):
        import cvbias.cli
        from cvbias import ReliabilityError
        from cvbias.cli import EXIT_RELIABILITY

        def exploding(config, threads=1):
            raise ReliabilityError("too many failures")

        monkeypatch.setattr(cvbias.cli, "run_mc", exploding)
        cfg = write_config(tmp_path, ar_doc())
        assert main(["bias", "--config", str(cfg), "--out", str(tmp_path / "b")]) == EXIT_RELIABILITY


class TestDecompose:
    def test_rows_and_identity_column(self, tmp_path):
        doc = ar_doc(reps=5)
        doc["schemes"].append({"kind": "h_block", "h": 2})
        cfg = write_config(tmp_path, doc)
        out = tmp_path / "dec"
        assert main(["decompose", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        rows = read_csv(out / "decompose.csv")
        assert len(rows) == 5 * 2
        assert all(float(r["identity_rel_gap"]) < 1e-10 for r in rows)
        terms = rows[0]
        total = (float(terms["term_eps2"]) + float(terms["term_mu_eps"])
                 - float(terms["term_muhat_eps"]) + float(terms["term_ase"]))
        assert abs(float(terms["cv_mse"]) - total) < 1e-10 * float(terms["cv_mse"])


class TestBias:
    def test_artifacts_exist_and_parse(self, tmp_path):
        cfg = write_config(tmp_path, ar_doc(reps=60))
        out = tmp_path / "bias"
        assert main(["bias", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        for name in ("bias_by_index.csv", "bias_pooled.csv", "mase.csv",
                     "bias_variance.csv", "summary.json", "summary.txt"):
            assert (out / name).exists(), name
        by_index = read_csv(out / "bias_by_index.csv")
        assert len(by_index) == 20
        pooled = read_csv(out / "bias_pooled.csv")
        assert {r["subset"] for r in pooled} == {"all", "excl_last"}
        assert "zero-band" in (out / "summary.txt").read_text()

    def test_reps_override(self, tmp_path):
        cfg = write_config(tmp_path, ar_doc(reps=60))
        out = tmp_path / "bias"
        main(["bias", "--config", str(cfg), "--out", str(out), "--reps", "30"])
        rows = read_csv(out / "bias_pooled.csv")
        assert all(int(r["n"]) == 30 for r in rows)

    def test_thread_count_invisible_in_csv(self, tmp_path):
        cfg = write_config(tmp_path, ar_doc(reps=80))
        out1, out2 = tmp_path / "t1", tmp_path / "t2"
        main(["bias", "--config", str(cfg), "--out", str(out1), "--threads", "1"])
        main(["bias", "--config", str(cfg), "--out", str(out2), "--threads", "2"])
        for name in ("bias_by_index.csv", "bias_pooled.csv", "mase.csv", "bias_variance.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


class TestSelect:
    def test_frequencies_sum_to_one(self, tmp_path):
        doc = ar_doc(reps=50, T=30)
        doc["models"] = [
            {"id": "ar1c", "columns": [0], "intercept": True},
            {"id": "ar2c", "columns": [0, 1], "intercept": True},
        ]
        doc["schemes"] = [{"kind": "loo"}, {"kind": "h_block"}]
        cfg = write_config(tmp_path, doc)
        out = tmp_path / "sel"
        assert main(["select", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        rows = read_csv(out / "selection_freq.csv")
        by_scheme = {}
        for r in rows:
            by_scheme.setdefault(r["scheme"], 0.0)
            by_scheme[r["scheme"]] += float(r["frequency"])
        assert all(abs(total - 1.0) <= 1e-12 for total in by_scheme.values())
        agreement = read_csv(out / "agreement.csv")
        assert len(agreement) == 2

    def test_requires_two_models(self, tmp_path):
        cfg = write_config(tmp_path, ar_doc(reps=20))
        assert main(["select", "--config", str(cfg), "--out", str(tmp_path / "s")]) == EXIT_CONFIG


class TestSweep:
    def test_T_sweep_rows(self, tmp_path):
        doc = ar_doc(reps=40)
        del doc["experiment"]["T"]
        doc["experiment"]["T_grid"] = [15, 25]
        cfg = write_config(tmp_path, doc)
        out = tmp_path / "sw"
        assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        rows = read_csv(out / "sweep.csv")
        t_rows = [r for r in rows if r["sweep"] == "T" and r["statistic"] == "bias_pooled"]
        assert [r["value"] for r in t_rows] == ["15", "25"]
        assert all(float(r["abs_estimate"]) == abs(float(r["estimate"])) for r in rows)

    def test_rho_sweep_rows(self, tmp_path):
        doc = ar_doc(reps=40)
        doc["experiment"]["rho_grid"] = [0.0, 0.5]
        cfg = write_config(tmp_path, doc)
        out = tmp_path / "sw"
        assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        rows = read_csv(out / "sweep.csv")
        rho_rows = [r for r in rows if r["sweep"] == "rho" and r["statistic"] == "bias_pooled"]
        assert [r["value"] for r in rho_rows] == ["0", "0.5"]
        assert all(float(r["se"]) > 0 for r in rho_rows)


class TestThreadResolution:
    def test_env_default(self, monkeypatch):
        class Args:
            threads = None

        monkeypatch.setenv("CVBIAS_THREADS", "4")
        assert _resolve_threads(Args()) == 4
        monkeypatch.delenv("CVBIAS_THREADS")
        assert _resolve_threads(Args()) == 1

    def test_flag_beats_env(self, monkeypatch):
        class Args:
            threads = 2

        monkeypatch.setenv("CVBIAS_THREADS", "4")
        assert _resolve_threads(Args()) == 2

    def test_bad_env_rejected(self, monkeypatch):
        from cvbias import ConfigError

        class Args:
            threads = None

        monkeypatch.setenv("CVBIAS_THREADS", "lots")
        with pytest.raises(ConfigError):
            _resolve_threads(Args())
