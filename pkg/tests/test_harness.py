import dataclasses
import json
import math
import pathlib

import jsonschema
import numpy as np
import pytest

from sockf import battery, harness, noise
from sockf.harness import (
    COMPARISON_ORDER,
    ConfigError,
    ExperimentConfig,
    TraceSpec,
    build_dataset,
    config_from_dict,
    emit_report,
    monte_carlo,
    report_document,
    resolve_variant,
    run_comparison,
    run_experiment,
    tsga_config_from_dict,
    tune_kernels,
)

SCHEMA_PATH = pathlib.Path(__file__).resolve().parents[1] / "schemas" / "report.schema.json"
REPO = pathlib.Path(__file__).resolve().parents[1]


@pytest.fixture(scope="module")
def schema():
    with open(SCHEMA_PATH) as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def small_cfg(ref_params, ref_ocv):
    return ExperimentConfig(
        params=battery.load_ecm_params(),
        ocv=battery.load_ocv_curve(),
        trace=TraceSpec(kind="urban_like", duration=30.0, dt=0.1, amplitude=3.0, soc0=0.9),
        noise_spec=noise.MixedNoiseSpec(
            c=0.95,
            base=noise.GaussianSpec(0.1, 10.0),
            contaminant=noise.UniformSpec(-4.0, 2.0),
        ),
        seed=3,
        trials=3,
    )


class TestConfig:
    def test_json_config_loads(self):
        doc = harness.load_config_file(REPO / "configs" / "uniform_mixture.json")
        cfg = config_from_dict(doc)
        assert cfg.filter_name == "gmmee-srckf"
        assert cfg.filter_params["alpha1"] == pytest.approx(3.3662)
        assert cfg.resolved_r() == 10.0
        assert np.allclose(cfg.resolved_p0(), np.diag([0.01, 0.01, 0.06]))

    def test_toml_config_loads(self):
        doc = harness.load_config_file(REPO / "configs" / "laplace_mixture.toml")
        cfg = config_from_dict(doc)
        assert isinstance(cfg.noise_spec.contaminant, noise.LaplaceSpec)
        assert cfg.trace.dt == 0.1

    def test_defaults_without_blocks(self):
        cfg = config_from_dict({})
        assert cfg.filter_name == "gmmee-srckf"
        assert cfg.resolved_r() == 1e-4  # no noise spec configured
        assert np.allclose(cfg.resolved_q(), 1e-6 * np.eye(3))

    def test_r_defaults_to_base_gaussian_variance(self, small_cfg):
        assert small_cfg.resolved_r() == 10.0

    def test_unknown_filter_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"filter": {"filter": "ekf"}})

    def test_bad_trials(self, small_cfg):
        with pytest.raises(ConfigError):
            dataclasses.replace(small_cfg, trials=0)

    def test_bad_engine(self, small_cfg):
        with pytest.raises(ConfigError):
            dataclasses.replace(small_cfg, engine="gpu")

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            harness.load_config_file("/no/such/file.json")

    def test_tsga_block(self):
        cfg = tsga_config_from_dict(
            {"tsga": {"population": 8, "max_iter": 5, "st": 0.7}}, default_seed=4
        )
        assert cfg.population == 8
        assert cfg.rng_seed == 4
        with pytest.raises(ConfigError):
            tsga_config_from_dict({"tsga": {"population": "many"}})


class TestResolveVariant:
    @pytest.mark.parametrize("name", COMPARISON_ORDER)
    def test_known_variants(self, name):
        rv = resolve_variant(name, {})
        assert rv.name == name

    def test_gmmee_alias(self):
        assert resolve_variant("gmmee", {}).name == "gmmee-srckf"

    def test_unknown_variant(self):
        with pytest.raises(ConfigError):
            resolve_variant("particle", {})

    def test_mee_builds_single_gaussian_kernel(self):
        rv = resolve_variant("mee", {"beta": 0.7})
        assert rv.fast_kwargs["eta"] == 1.0
        assert rv.fast_kwargs["a1"] == 2.0
        assert rv.fast_kwargs["b1"] == 0.7

    def test_parameter_override(self):
        rv = resolve_variant("gmmee-srckf", {"beta1": 0.5})
        assert rv.fast_kwargs["b1"] == 0.5
        assert rv.fast_kwargs["a1"] == pytest.approx(3.3662)


class TestRunExperiment:
    def test_zero_noise_run_is_tight(self, small_cfg):
        cfg = dataclasses.replace(
            small_cfg, noise_spec=None, r_filter=1e-4, sim_process_cov=np.zeros((3, 3))
        )
        rep = run_experiment(cfg)
        assert rep.rmse < 0.01

    def test_metric_identities(self, small_cfg):
        rep = run_experiment(small_cfg)
        assert rep.rmse**2 == pytest.approx(rep.mse, rel=1e-12)
        assert rep.mae <= rep.max_abs
        assert rep.n_steps == len(rep.err_trace_pct)

    def test_determinism(self, small_cfg):
        a = run_experiment(small_cfg)
        b = run_experiment(small_cfg)
        assert a.rmse == b.rmse
        assert np.array_equal(a.err_trace_pct, b.err_trace_pct)

    def test_engines_agree(self, small_cfg):
        fast = run_experiment(dataclasses.replace(small_cfg, engine="fast"))
        generic = run_experiment(dataclasses.replace(small_cfg, engine="generic"))
        assert fast.rmse == pytest.approx(generic.rmse, rel=1e-9, abs=1e-12)

    def test_soc_cutoff_truncates(self):
        cfg = ExperimentConfig(
            params=battery.load_ecm_params(),
            ocv=battery.load_ocv_curve(),
            # 3 A on a 3 Ah cell from 12%: crosses the 10% floor mid-trace
            trace=TraceSpec(kind="constant", duration=400.0, dt=0.5, amplitude=3.0, soc0=0.12),
            noise_spec=noise.GaussianSpec(0.0, 1e-4),
            seed=1,
        )
        rep = run_experiment(cfg)
        assert rep.n_steps < 800
        assert np.all(rep.soc_true_pct >= 10.0)

    def test_timing_sane(self, small_cfg):
        rep = run_experiment(small_cfg)
        assert 0.0 < rep.timing_mean_ms < small_cfg.trace.dt * 1e3

    def test_warmup_skip(self, small_cfg):
        rep = run_experiment(dataclasses.replace(small_cfg, warmup=50))
        assert rep.n_steps == 300 - 50


@pytest.fixture(scope="module")
def reports(small_cfg):
    return run_comparison(small_cfg)


class TestComparison:
    def test_fixed_order(self, reports):
        assert [r.variant for r in reports] == list(COMPARISON_ORDER)

    def test_ckf_srckf_agree(self, reports):
        by = {r.variant: r for r in reports}
        assert by["ckf"].rmse == pytest.approx(by["srckf"].rmse, abs=1e-6)

    def test_shared_trace_is_bit_identical(self, small_cfg):
        a = build_dataset(small_cfg)
        b = build_dataset(small_cfg)
        assert np.array_equal(a.voltage, b.voltage)
        assert np.array_equal(a.current, b.current)

    def test_degenerate_mixture_row_equals_single_kernel_row(self, small_cfg):
        gmee_rv = resolve_variant("gmee", {})
        cfg = dataclasses.replace(
            small_cfg,
            filter_name="gmmee-srckf",
            filter_params={
                "eta": 1.0,
                "alpha1": gmee_rv.fast_kwargs["a1"],
                "beta1": gmee_rv.fast_kwargs["b1"],
                "alpha2": 1.7,
                "beta2": 3.3,
            },
        )
        reports = run_comparison(cfg, variants=("gmee", "gmmee-srckf"))
        gmee, gmmee = reports
        assert gmmee.rmse == pytest.approx(gmee.rmse, abs=1e-10)
        assert gmmee.mae == pytest.approx(gmee.mae, abs=1e-10)
        assert gmmee.max_abs == pytest.approx(gmee.max_abs, abs=1e-10)


class TestMonteCarlo:
    def test_single_trial_equals_single_run(self, small_cfg):
        summary = monte_carlo(small_cfg, trials=1)
        seed = noise.spawn_seeds(small_cfg.seed + 1, 1)[0]
        rep = run_experiment(small_cfg, noise_seed=seed)
        assert summary.rmse_per_trial[0] == pytest.approx(rep.rmse, rel=1e-12)

    def test_distinct_substreams(self, small_cfg):
        summary = monte_carlo(small_cfg, trials=5)
        assert len(set(summary.rmse_per_trial)) == 5

    def test_master_seed_stability(self, small_cfg):
        a = monte_carlo(dataclasses.replace(small_cfg, seed=10), trials=12)
        b = monte_carlo(dataclasses.replace(small_cfg, seed=77), trials=12)
        pooled = math.sqrt(a.stddev**2 / 12 + b.stddev**2 / 12)
        assert abs(a.mean - b.mean) < 3 * pooled + 1e-9

    def test_quantiles_ordered(self, small_cfg):
        s = monte_carlo(small_cfg, trials=8)
        q = s.quantiles
        assert q["q05"] <= q["q25"] <= q["q50"] <= q["q75"] <= q["q95"]


class TestTune:
    def test_degenerate_bounds_return_pin(self, small_cfg):
        from sockf import tsga

        pins = (3.3662, 4.3453, 7.788e-4, 9.83e-5)
        cfg = dataclasses.replace(small_cfg, trials=2)
        tsga_cfg = tsga.TsgaConfig(
            population=3,
            max_iter=2,
            bounds=tuple((v, v) for v in pins),
            log_dims=(False, False, True, True),
            rng_seed=0,
        )
        rep = tune_kernels(cfg, tsga_cfg)
        assert np.allclose(rep.best_position, pins, rtol=1e-15)

    def test_small_budget_tune(self, small_cfg):
        from sockf import tsga

        cfg = dataclasses.replace(small_cfg, trials=2)
        tsga_cfg = tsga.TsgaConfig(
            population=4,
            max_iter=3,
            bounds=harness.TUNE_BOUNDS,
            log_dims=harness.TUNE_LOG_DIMS,
            rng_seed=1,
        )
        rep = tune_kernels(cfg, tsga_cfg)
        assert all(rep.history[i + 1] <= rep.history[i] for i in range(len(rep.history) - 1))
        assert rep.evaluations >= 4
        assert rep.fresh_mean_rmse > 0.0

    def test_rejects_non_mixture_variant(self, small_cfg):
        with pytest.raises(ConfigError):
            harness.fitness_function(dataclasses.replace(small_cfg, filter_name="ukf"))

    def test_beats_random_search_at_equal_budget(self, ref_params, ref_ocv):
        # 64 evaluations each on the frozen-seed landscape, 10 master seeds
        from sockf import tsga

        base = ExperimentConfig(
            params=ref_params,
            ocv=ref_ocv,
            trace=TraceSpec(kind="urban_like", duration=100.0, dt=0.1, amplitude=3.0, soc0=0.9),
            noise_spec=noise.MixedNoiseSpec(
                c=0.95,
                base=noise.GaussianSpec(0.1, 10.0),
                contaminant=noise.UniformSpec(-4.0, 2.0),
            ),
        )
        bounds = harness.TUNE_BOUNDS
        wins = 0
        for master_seed in range(10):
            cfg = dataclasses.replace(base, seed=300 + master_seed)
            frozen = noise.spawn_seeds(cfg.seed + 7, 1)[0]
            fitness = harness.fitness_function(cfg, frozen_seed=frozen)
            # 8 trees, one seed each, 7 generations: 8 + 56 = 64 evaluations
            res = tsga.optimize(
                fitness,
                tsga.TsgaConfig(
                    population=8, max_iter=7,
                    seed_frac_lo=0.125, seed_frac_hi=0.125,
                    bounds=bounds, log_dims=harness.TUNE_LOG_DIMS,
                    rng_seed=master_seed,
                ),
            )
            assert res.evaluations == 64
            rng = np.random.default_rng(master_seed)
            best_random = math.inf
            for _ in range(64):
                pos = np.array(
                    [
                        math.exp(rng.uniform(math.log(lo), math.log(hi)))
                        if is_log
                        else rng.uniform(lo, hi)
                        for (lo, hi), is_log in zip(bounds, harness.TUNE_LOG_DIMS)
                    ]
                )
                best_random = min(best_random, fitness(pos))
            wins += res.best.fitness <= best_random
        assert wins >= 8


class TestReports:
    def test_single_json_schema(self, small_cfg, schema, tmp_path):
        rep = run_experiment(small_cfg)
        out = tmp_path / "single.json"
        emit_report(rep, "single", "json", out)
        doc = json.loads(out.read_text())
        jsonschema.validate(doc, schema)

    def test_comparison_json_schema_and_csv(self, small_cfg, schema, tmp_path):
        reports = run_comparison(small_cfg, variants=("srckf", "mmee"))
        doc = report_document(reports, "comparison")
        doc["order"] = [r.variant for r in reports]
        jsonschema.validate(doc, schema)
        out = tmp_path / "cmp.csv"
        emit_report(reports, "comparison", "csv", out)
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("variant,mae,mse,rmse")
        assert len(lines) == 3
        cells = lines[1].split(",")
        assert cells[0] == "srckf"
        assert float(cells[3]) == pytest.approx(reports[0].rmse, rel=1e-15)

    def test_montecarlo_schema(self, small_cfg, schema, tmp_path):
        s = monte_carlo(small_cfg, trials=3)
        doc = report_document(s, "montecarlo")
        jsonschema.validate(doc, schema)

    def test_tune_schema(self, small_cfg, schema):
        from sockf import tsga

        cfg = dataclasses.replace(small_cfg, trials=2)
        tsga_cfg = tsga.TsgaConfig(
            population=3, max_iter=2, bounds=harness.TUNE_BOUNDS,
            log_dims=harness.TUNE_LOG_DIMS, rng_seed=2,
        )
        rep = tune_kernels(cfg, tsga_cfg)
        jsonschema.validate(report_document(rep, "tune"), schema)

    def test_plotdata_row_count(self, small_cfg, tmp_path):
        rep = run_experiment(small_cfg)
        out = tmp_path / "plot.csv"
        emit_report(rep, "single", "plotdata", out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "step,t_s,soc_true_pct,soc_est_pct,abs_err_pct"
        assert len(lines) - 1 == rep.n_steps

    def test_csv_json_value_consistency(self, small_cfg, tmp_path):
        rep = run_experiment(small_cfg)
        emit_report(rep, "single", "json", tmp_path / "r.json")
        emit_report(rep, "single", "csv", tmp_path / "r.csv")
        doc = json.loads((tmp_path / "r.json").read_text())
        row = (tmp_path / "r.csv").read_text().strip().splitlines()[1].split(",")
        assert float(row[3]) == pytest.approx(doc["report"]["rmse"], rel=1e-15)
