import json
import math

import numpy as np
import pytest

import hybridctrl.cli as cli
from hybridctrl.datagen import ScenarioSpec
from hybridctrl.exceptions import ConfigError
from hybridctrl.harness import (
    METHOD_ORDER,
    StudyConfig,
    StudyReport,
    _replication,
    best_methods,
    builtin_scenarios,
    emit_report,
    format_report_table,
    method_group,
    normalize_method,
    run_study,
)


def small_config(**overrides):
    base = dict(scenarios=builtin_scenarios()[:1], mt_sizes=(16,), n_sim=6,
                seed=7, methods=("NB", "JIPTW.Cox"), oracle_reps=200,
                bayes_chains=2, bayes_adapt=100, bayes_sample=200)
    base.update(overrides)
    return StudyConfig(**base)


class TestCatalog:
    def test_scenario_betas(self):
        s1, s2, s3, s4 = builtin_scenarios()
        assert s1.beta == (0.0, 0.0, 0.0)
        assert s2.beta == (math.log(0.5), 0.0, 0.0)
        assert s3.beta == (math.log(0.5), math.log(3.0), math.log(3.0))
        assert s4.beta == (math.log(0.5), math.log(12.0), math.log(3.0))

    def test_default_arm_sizes(self):
        for s in builtin_scenarios():
            assert (s.n_mt, s.n_mc, s.n_hc0, s.n_hc1) == (16, 15, 100, 300)

    def test_normalize_method(self):
        assert normalize_method("JIPTW-Cox") == "JIPTW.Cox"
        assert normalize_method("nps") == "NPS"
        with pytest.raises(ConfigError):
            normalize_method("Mystery")

    def test_method_groups(self):
        assert method_group("NB") == "bayes"
        assert method_group("SFM.AFT") == "aft"
        assert method_group("JIPTW.Cox") == "cox"


class TestRunStudy:
    def test_smoke_three_methods(self, tmp_path):
        cfg = small_config(n_sim=20, methods=("NB", "FB", "JIPTW-Cox"))
        report = run_study(cfg)
        assert len(report.summaries) == 3
        for row in report.summaries:
            assert row["n_used"] + row["n_failed"] == 20
        paths = emit_report(report, tmp_path)
        for key in ("summary", "estimates", "table", "long", "truth", "config"):
            assert key in paths

    def test_determinism_byte_identical(self, tmp_path):
        cfg = small_config()
        blobs = []
        for sub in ("a", "b"):
            report = run_study(cfg)
            out = tmp_path / sub
            emit_report(report, out)
            blobs.append({p.name: p.read_bytes() for p in out.iterdir()})
        assert blobs[0] == blobs[1]

    @staticmethod
    def _rows_equal(rows_a, rows_b):
        assert len(rows_a) == len(rows_b)
        for a, b in zip(rows_a, rows_b):
            assert a.keys() == b.keys()
            for key in a:
                va, vb = a[key], b[key]
                if isinstance(va, float) and math.isnan(va):
                    assert isinstance(vb, float) and math.isnan(vb)
                else:
                    assert va == vb

    def test_worker_count_invariance(self):
        r1 = run_study(small_config(workers=1))
        r2 = run_study(small_config(workers=2))
        self._rows_equal(r1.estimates, r2.estimates)
        self._rows_equal(r1.summaries, r2.summaries)

    def test_single_replication_reproducible(self):
        cfg = small_config()
        report = run_study(cfg)
        scenario = cfg.scenarios[0].with_mt_size(16)
        rows = _replication(scenario, cfg.methods, cfg.seed, 0, 3,
                            (cfg.bayes_chains, cfg.bayes_adapt, cfg.bayes_sample),
                            cfg.full_ps_model, cfg.same_form)
        logged = {r["method"]: r for r in report.estimates if r["rep"] == 3}
        for row in rows:
            ref = logged[row["method"]]
            assert row["estimate"] == ref["estimate"] or (
                math.isnan(row["estimate"]) and math.isnan(ref["estimate"]))

    def test_empty_methods_rejected(self):
        with pytest.raises(ConfigError):
            small_config(methods=())

    def test_bad_configs_rejected(self):
        with pytest.raises(ConfigError):
            small_config(n_sim=1)
        with pytest.raises(ConfigError):
            small_config(mt_sizes=())
        with pytest.raises(ConfigError):
            small_config(workers=0)
        with pytest.raises(ConfigError):
            StudyConfig.from_dict({"scenarios": ["17"]})

    def test_config_round_trip(self):
        cfg = small_config()
        back = StudyConfig.from_dict(cfg.to_dict())
        assert back.to_dict() == cfg.to_dict()

    def test_long_csv_row_count(self, tmp_path):
        cfg = small_config()
        report = run_study(cfg)
        paths = emit_report(report, tmp_path)
        lines = (tmp_path / "long.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + len(report.summaries) * 4


APPENDIX_S3_MT16_BAYES_BIAS = {
    # published scenario-3, MT=16 biases for the Bayesian block
    "IPD": 0.384, "IPS": 0.379, "NPD": 0.041, "NPS": 0.013,
    "WPD": 0.082, "WPS": 0.084, "FB": 0.462, "NB": 0.333,
}


class TestReporting:
    def test_appendix_winner_reproduced(self):
        rows = [{"scenario": "3", "mt_size": 16, "method": m, "bias": b,
                 "variance": float("nan"), "mse": float("nan"),
                 "ess": float("nan"), "n_used": 500, "n_failed": 0}
                for m, b in APPENDIX_S3_MT16_BAYES_BIAS.items()]
        winners = best_methods(rows)
        assert winners[("3", 16, "bayes", "bias")] == "NPS"

    def test_table_contains_best_lines(self):
        rows = [{"scenario": "1", "mt_size": 16, "method": m, "bias": 0.1 + i / 100,
                 "variance": 0.05, "mse": 0.06, "ess": 80.0 + i,
                 "n_used": 100, "n_failed": 0}
                for i, m in enumerate(("SFM.Cox", "JIPTW.Cox"))]
        text = format_report_table(rows)
        assert "best bias: SFM.Cox" in text
        assert "best ess: JIPTW.Cox" in text

    def test_empty_report_rejected(self, tmp_path):
        report = StudyReport(config={}, truths={}, summaries=[], estimates=[])
        with pytest.raises(ConfigError):
            emit_report(report, tmp_path)


class TestCli:
    def test_truth_command(self, capsys):
        rc = cli.main(["truth", "--scenario", "1", "--reps", "40", "--seed", "3"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "theta0=" in out

    def test_truth_unknown_scenario(self, capsys):
        assert cli.main(["truth", "--scenario", "9", "--reps", "10"]) == 2

    def test_simulate_and_report(self, tmp_path, capsys):
        config = {
            "scenarios": [1], "mt_sizes": [16], "n_sim": 4, "seed": 5,
            "methods": ["NB", "JIPTW-Cox"], "oracle_reps": 100,
            "bayes": {"chains": 2, "adapt": 80, "sample": 150},
        }
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(config))
        out_dir = tmp_path / "study"
        rc = cli.main(["simulate", "--config", str(cfg_path), "--out", str(out_dir)])
        assert rc == 0
        assert (out_dir / "summary.csv").exists()
        capsys.readouterr()
        rc = cli.main(["report", "--in", str(out_dir), "--format", "table"])
        assert rc == 0
        assert "Scenario 1, MT=16" in capsys.readouterr().out
        rc = cli.main(["report", "--in", str(out_dir), "--format", "csv"])
        assert rc == 0
        assert capsys.readouterr().out.startswith("scenario,")

    def test_cli_overrides(self, tmp_path):
        out_dir = tmp_path / "study"
        rc = cli.main(["simulate", "--scenario", "1", "--mt-size", "16",
                       "--reps", "4", "--seed", "2", "--methods", "NB",
                       "--threads", "1", "--out", str(out_dir)])
        assert rc == 0
        cfg = json.loads((out_dir / "config.json").read_text())
        assert cfg["n_sim"] == 4
        assert cfg["methods"] == ["NB"]

    def test_config_error_exit_code(self, tmp_path):
        rc = cli.main(["simulate", "--methods", "Bogus", "--out",
                       str(tmp_path / "x")])
        assert rc == 2

    def test_missing_report_dir(self, tmp_path):
        assert cli.main(["report", "--in", str(tmp_path), "--format", "csv"]) == 2

    def test_partial_failure_exit_code(self, tmp_path, monkeypatch):
        import hybridctrl.harness as harness

        def fake_run_study(config, truths=None):
            summaries = [{"scenario": "1", "mt_size": 16, "method": "NB",
                          "bias": 0.1, "variance": 0.1, "mse": 0.1,
                          "ess": float("nan"), "n_used": 1, "n_failed": 3}]
            estimates = [{"scenario": "1", "mt_size": 16, "method": "NB",
                          "rep": 0, "estimate": 0.1, "ess": float("nan"),
                          "status": "ok"}]
            return StudyReport(config=config.to_dict(),
                               truths={}, summaries=summaries, estimates=estimates)

        monkeypatch.setattr(harness, "run_study", fake_run_study)
        monkeypatch.setattr(cli.harness, "run_study", fake_run_study)
        rc = cli.main(["simulate", "--scenario", "1", "--reps", "4",
                       "--methods", "NB", "--out", str(tmp_path / "y")])
        assert rc == 3
