"""Harness plumbing: configs, report rows, CSV output, rate fits, job control."""

import csv
import dataclasses
import json
import math
import os

import numpy as np
import pytest

from bvm_lab.harness import (
    EXPERIMENTS,
    ConfigInvalid,
    ExperimentConfig,
    InsufficientData,
    ReportRow,
    default_config,
    prior_from_config,
    rate_fit,
    resolve_jobs,
    run,
    write_report,
)


def make_config(**overrides):
    fields = dataclasses.asdict(default_config("effdim"))
    fields.update(overrides)
    return ExperimentConfig(**fields)


class TestExperimentConfig:
    def test_defaults_exist_for_every_experiment(self):
        for name in EXPERIMENTS:
            config = default_config(name)
            assert config.experiment == name
            assert config.seed >= 0

    def test_unknown_experiment_rejected(self):
        with pytest.raises(ConfigInvalid):
            make_config(experiment="nope")
        with pytest.raises(ConfigInvalid):
            default_config("nope")

    def test_bad_model_rejected(self):
        with pytest.raises(ConfigInvalid):
            make_config(model="probit")

    def test_empty_n_grid_rejected(self):
        with pytest.raises(ConfigInvalid):
            make_config(n_grid=())

    def test_negative_n_rejected(self):
        with pytest.raises(ConfigInvalid):
            make_config(n_grid=(100, -5))

    def test_bad_prior_kind_rejected(self):
        with pytest.raises(ConfigInvalid):
            make_config(prior_kind="flat")

    def test_prior_w_auto_accepted(self):
        config = make_config(prior_w="auto")
        assert config.prior_w == "auto"

    def test_prior_w_garbage_rejected(self):
        with pytest.raises(ConfigInvalid):
            make_config(prior_w="wide")
        with pytest.raises(ConfigInvalid):
            make_config(prior_w=-2.0)

    def test_alpha_bounds(self):
        with pytest.raises(ConfigInvalid):
            make_config(alpha=0.0)
        with pytest.raises(ConfigInvalid):
            make_config(alpha=1.0)

    def test_nonpositive_counts_rejected(self):
        for field in ("replications", "n_kept", "thinning", "n_gauss", "p_max"):
            with pytest.raises(ConfigInvalid):
                make_config(**{field: 0})

    def test_burn_in_may_be_zero(self):
        assert make_config(burn_in=0).burn_in == 0
        with pytest.raises(ConfigInvalid):
            make_config(burn_in=-1)

    def test_prior_from_config_truncation(self):
        config = make_config(prior_kind="truncation", prior_m=4)
        prior = prior_from_config(config, n=1000)
        assert prior.support_dim == 4

    def test_prior_from_config_auto_scale_grows_with_n(self):
        config = make_config(prior_kind="smooth", prior_s=1.0, prior_w="auto")
        small = prior_from_config(config, n=1000)
        large = prior_from_config(config, n=100000)
        assert large.scale > small.scale


class TestReportRow:
    def test_basic_row(self):
        row = ReportRow("effdim", 0, 100, "truncation(m=3)", "ratio", 0.5, 0.0)
        assert row.value == 0.5
        assert row.passed is None

    def test_nonfinite_value_rejected(self):
        with pytest.raises(ValueError):
            ReportRow("e", 0, 10, "p", "m", float("nan"), 0.0)
        with pytest.raises(ValueError):
            ReportRow("e", 0, 10, "p", "m", float("inf"), 0.0)

    def test_negative_halfwidth_rejected(self):
        with pytest.raises(ValueError):
            ReportRow("e", 0, 10, "p", "m", 1.0, -0.1)

    def test_int_coerced_to_float(self):
        row = ReportRow("e", 0, 10, "p", "m", 3, 0)
        assert isinstance(row.value, float)
        assert isinstance(row.mc_halfwidth, float)


class TestCsvOutput:
    def rows(self):
        return [
            ReportRow("demo", 0, 100, "truncation(m=2)", "gap", 0.125, 0.01),
            ReportRow("demo", 1, 100, "truncation(m=2)", "gap", 0.25, 0.01,
                      bound_value=1.0, passed=True),
            ReportRow("demo", -1, 200, "truncation(m=2)", "slope", -0.5, 0.0,
                      bound_value=None, passed=False),
        ]

    def test_header_and_cells(self, tmp_path):
        path = tmp_path / "demo.csv"
        write_report(self.rows(), str(path))
        with open(path, newline="", encoding="utf-8") as handle:
            records = list(csv.reader(handle))
        assert records[0] == [
            "experiment", "replication", "n", "prior", "metric",
            "value", "mc_halfwidth", "bound_value", "pass",
        ]
        assert records[1][8] == ""
        assert records[2][8] == "true"
        assert records[3][8] == "false"
        assert records[2][7] == "1.0"
        assert records[3][7] == ""

    def test_lf_line_endings(self, tmp_path):
        path = tmp_path / "demo.csv"
        write_report(self.rows(), str(path))
        raw = path.read_bytes()
        assert b"\r" not in raw

    def test_values_roundtrip(self, tmp_path):
        path = tmp_path / "demo.csv"
        write_report(self.rows(), str(path))
        with open(path, newline="", encoding="utf-8") as handle:
            records = list(csv.DictReader(handle))
        assert float(records[0]["value"]) == 0.125
        assert int(records[2]["replication"]) == -1


def planted_rows(metric, values_by_n, reps=25):
    rows = []
    for n, value in values_by_n.items():
        for rep in range(reps):
            wiggle = 1.0 + 0.05 * math.sin(rep * 2.3)  # symmetric about 1
            rows.append(ReportRow("planted", rep, n, "p", metric, value * wiggle, 0.0))
    return rows


class TestRateFit:
    def test_inverse_sqrt_recovered(self):
        grid = {n: 10.0 / math.sqrt(n) for n in (100, 200, 400, 800, 1600)}
        slope, stderr = rate_fit(planted_rows("m", grid), "m")
        assert abs(slope + 0.5) < 1e-6
        assert stderr < 0.01

    def test_inverse_n_recovered(self):
        grid = {n: 3.0 / n for n in (100, 200, 400, 800)}
        slope, _ = rate_fit(planted_rows("m", grid), "m")
        assert abs(slope + 1.0) < 1e-6

    def test_constant_recovered(self):
        grid = {n: 0.7 for n in (100, 200, 400, 800)}
        slope, stderr = rate_fit(planted_rows("m", grid), "m")
        assert abs(slope) < 1e-6
        assert stderr < 0.05

    def test_too_few_sample_sizes(self):
        grid = {n: 1.0 / n for n in (100, 200, 400)}
        with pytest.raises(InsufficientData):
            rate_fit(planted_rows("m", grid), "m")

    def test_too_few_replications(self):
        grid = {n: 1.0 / n for n in (100, 200, 400, 800)}
        with pytest.raises(InsufficientData):
            rate_fit(planted_rows("m", grid, reps=10), "m")

    def test_other_metrics_ignored(self):
        grid = {n: 10.0 / math.sqrt(n) for n in (100, 200, 400, 800)}
        rows = planted_rows("wanted", grid) + planted_rows("junk", {n: 1.0 for n in grid})
        slope, _ = rate_fit(rows, "wanted")
        assert abs(slope + 0.5) < 1e-6

    def test_summary_rows_excluded(self):
        grid = {n: 10.0 / math.sqrt(n) for n in (100, 200, 400, 800)}
        rows = planted_rows("m", grid)
        rows.append(ReportRow("planted", -1, 800, "p", "m", 99.0, 0.0))
        slope, _ = rate_fit(rows, "m")
        assert abs(slope + 0.5) < 1e-6

    def test_bootstrap_stderr_reflects_noise(self):
        rng = np.random.default_rng(7)
        rows = []
        for n in (100, 200, 400, 800):
            for rep in range(40):
                value = (10.0 / math.sqrt(n)) * math.exp(rng.normal(0.0, 0.4))
                rows.append(ReportRow("planted", rep, n, "p", "m", value, 0.0))
        slope, stderr = rate_fit(rows, "m")
        assert 0.005 < stderr < 0.2
        assert abs(slope + 0.5) < 3 * stderr + 0.1


class TestJobControl:
    def test_explicit_wins(self, monkeypatch):
        monkeypatch.setenv("BVM_LAB_JOBS", "7")
        assert resolve_jobs(3) == 3

    def test_env_fallback(self, monkeypatch):
        monkeypatch.setenv("BVM_LAB_JOBS", "5")
        assert resolve_jobs(None) == 5

    def test_cpu_fallback(self, monkeypatch):
        monkeypatch.delenv("BVM_LAB_JOBS", raising=False)
        assert resolve_jobs(None) >= 1

    def test_bad_env_rejected(self, monkeypatch):
        monkeypatch.setenv("BVM_LAB_JOBS", "zero")
        with pytest.raises(ConfigInvalid):
            resolve_jobs(None)
        monkeypatch.setenv("BVM_LAB_JOBS", "0")
        with pytest.raises(ConfigInvalid):
            resolve_jobs(None)


class TestRunEffdim:
    """Cheapest full experiment; exercises run() end to end."""

    def test_run_writes_report_and_manifest(self, tmp_path):
        config = dataclasses.replace(default_config("effdim"), out_dir=str(tmp_path))
        result = run(config, jobs=1)
        assert result.ok
        assert os.path.exists(result.csv_path)
        assert os.path.exists(result.manifest_path)
        with open(result.manifest_path, encoding="utf-8") as handle:
            manifest = json.load(handle)
        assert manifest["config"]["experiment"] == "effdim"
        assert manifest["code_version"]
        assert "replication_streams" in manifest

    def test_runs_are_deterministic(self, tmp_path):
        config_a = dataclasses.replace(default_config("effdim"), out_dir=str(tmp_path / "a"))
        config_b = dataclasses.replace(default_config("effdim"), out_dir=str(tmp_path / "b"))
        run(config_a, jobs=1)
        run(config_b, jobs=4)
        body_a = open(os.path.join(tmp_path, "a", "effdim.csv"), "rb").read()
        body_b = open(os.path.join(tmp_path, "b", "effdim.csv"), "rb").read()
        assert body_a == body_b

    def test_sandwich_rows_all_pass(self, tmp_path):
        config = dataclasses.replace(default_config("effdim"), out_dir=str(tmp_path))
        result = run(config, jobs=1)
        sandwich = [r for r in result.rows if r.metric.startswith("effdim_sandwich_")]
        assert len(sandwich) == 10
        assert all(r.passed for r in sandwich)
        ratios = [r for r in result.rows if r.metric.startswith("tradeoff_effdim_ratio_")]
        assert len(ratios) == 6
        assert all(0.2 <= r.value <= 1.0 for r in ratios)


class TestRunValidateBoundsSmall:
    def test_reduced_draw_run_passes(self, tmp_path):
        config = dataclasses.replace(
            default_config("validate-bounds"), n_gauss=40_000, out_dir=str(tmp_path)
        )
        result = run(config, jobs=4)
        assert result.ok
        crossers = [r for r in result.rows if r.metric.startswith("crossover_residual_")]
        assert len(crossers) == 12
        assert all(r.value < 1e-10 for r in crossers)
        ratios = [r for r in result.rows if r.metric.startswith("norm_gap_ratio_")]
        gaps = [r for r in result.rows if r.metric.startswith("identical_law_gap_")]
        assert len(ratios) + len(gaps) == 20
        assert all(r.value <= 3.0 for r in ratios)
        assert all(r.value == 0.0 for r in gaps)

    def test_rate_experiment_rejects_starved_grid(self, tmp_path):
        config = dataclasses.replace(
            default_config("expansion-rates"),
            n_grid=(300, 400),
            replications=3,
            n_kept=200,
            burn_in=50,
            out_dir=str(tmp_path),
        )
        with pytest.raises(InsufficientData):
            run(config, jobs=2)
