"""Tests for Adam, the stopping rule, forecasting, experiments and Welch tests."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

import training
from errors import (
    ConfigError,
    DegenerateSeriesError,
    ExperimentError,
    ForwardDivergenceError,
    ShapeError,
    StatisticsError,
)
from networks import CellParams, forward, init_params, loss_mse
from presets import ExperimentConfig, build_dataset, load_config
from procgen import ArfimaSpec, generate_arfima
from timeseries import Splits
from training import (
    ExperimentResult,
    InputScaler,
    ModelSpec,
    OptimizerConfig,
    RunConfig,
    RunRecord,
    StoppingRule,
    adam_step,
    compare_to_baseline,
    init_adam,
    lagged_inputs,
    metrics,
    multi_seed_experiment,
    rolling_forecast,
    student_t_cdf,
    summarize,
    train,
    welch_ttest,
)

TEXTBOOK_A = [27.5, 21.0, 19.0, 23.6, 17.0, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6, 19.0, 21.7, 21.4]
TEXTBOOK_B = [27.1, 22.0, 20.8, 23.4, 23.4, 23.5, 25.8, 22.0, 24.8, 20.2, 21.9, 22.1, 22.9, 30.6]


def ar1_series(n=300, seed=0, splits=Splits(150, 90, 60)):
    return generate_arfima(ArfimaSpec(ar=(0.5,), d=0.0), n, seed).with_splits(splits)


def without_wall_time(record):
    doc = record.to_json()
    doc.pop("wall_time")
    return doc


def scalar_params(value):
    weights = {"W_hh": [[0.0]], "W_hx": [[0.0]], "b_h": [0.0], "W_zh": [[0.0]], "b_z": [value]}
    return CellParams("rnn", (1, 1, 1), weights)


def ok_record(seed, rmse, model="m"):
    return RunRecord(seed, "", model, "rnn", metrics=training.ForecastMetrics(rmse, rmse, rmse, 0))


class TestAdam:
    def test_zero_gradients_leave_params(self):
        params = init_params("rnn", (1, 2, 1), seed=0)
        zeros = {name: np.zeros_like(v) for name, v in params.weights.items()}
        updated, state = adam_step(params, zeros, init_adam(params))
        for name in params.weights:
            assert_array_equal(updated[name], params[name])
        assert state.step == 1

    def test_first_step_moves_by_lr(self, rng):
        params = init_params("rnn", (1, 2, 1), seed=0)
        grads = {name: rng.uniform(0.1, 5.0, v.shape) * rng.choice([-1, 1], v.shape)
                 for name, v in params.weights.items()}
        updated, _ = adam_step(params, grads, init_adam(params, lr=0.01))
        for name in params.weights:
            step = params[name] - updated[name]
            assert_allclose(np.abs(step), 0.01, atol=1e-5)
            assert_array_equal(np.sign(step), np.sign(grads[name]))

    def test_gradient_scale_invariance(self, rng):
        params = init_params("lstm", (1, 2, 1), seed=1)
        grads = {name: rng.standard_normal(v.shape) for name, v in params.weights.items()}
        scaled = {name: 37.0 * g for name, g in grads.items()}
        a, _ = adam_step(params, grads, init_adam(params))
        b, _ = adam_step(params, scaled, init_adam(params))
        for name in params.weights:
            assert_array_equal(np.sign(a[name] - params[name]), np.sign(b[name] - params[name]))

    def test_minimizes_square(self):
        params = scalar_params(5.0)
        state = init_adam(params, lr=0.1)
        for _ in range(2000):
            grads = {name: np.zeros_like(v) for name, v in params.weights.items()}
            grads["b_z"] = 2.0 * params["b_z"]
            params, state = adam_step(params, grads, state)
        assert abs(params["b_z"][0]) < 0.01

    def test_inputs_untouched(self):
        params = scalar_params(1.0)
        state = init_adam(params)
        grads = {name: np.ones_like(v) for name, v in params.weights.items()}
        adam_step(params, grads, state)
        assert params["b_z"][0] == 1.0
        assert state.step == 0 and np.all(state.m["b_z"] == 0.0)

    def test_shape_mismatch(self):
        params = scalar_params(1.0)
        grads = {name: np.zeros_like(v) for name, v in params.weights.items()}
        grads["W_hh"] = np.zeros((2, 2))
        with pytest.raises(ShapeError):
            adam_step(params, grads, init_adam(params))
        del grads["W_hh"]
        with pytest.raises(ShapeError):
            adam_step(params, grads, init_adam(params))


class TestStoppingRule:
    def test_increasing_losses_stop_at_patience(self):
        rule = StoppingRule(min_loss_drop=1e-5, patience=10, max_steps=1000)
        losses = [1.0 + 0.1 * s for s in range(50)]
        reasons = [rule.stop_reason(losses[:s + 1]) for s in range(50)]
        assert reasons.index("patience") == 10
        assert all(r is None for r in reasons[:10])

    def test_small_drop(self):
        rule = StoppingRule(min_loss_drop=1e-5)
        assert rule.stop_reason([1.0, 0.5]) is None
        assert rule.stop_reason([1.0, 0.5, 0.499999]) == "loss-drop"
        assert rule.stop_reason([1.0, 1.0]) == "loss-drop"

    def test_rise_is_not_a_small_drop(self):
        assert StoppingRule().stop_reason([1.0, 1.5]) is None

    def test_max_steps(self):
        rule = StoppingRule(max_steps=3)
        losses = [4.0, 3.0, 2.0, 1.0]
        assert rule.stop_reason(losses[:3]) is None
        assert rule.stop_reason(losses) == "max-steps"

    def test_interrupted_rise_resets_patience(self):
        rule = StoppingRule(patience=3)
        assert rule.stop_reason([1.0, 2.0, 1.5, 2.5, 3.5]) is None
        assert rule.stop_reason([1.0, 2.0, 1.5, 2.5, 3.5, 4.5]) == "patience"

    @pytest.mark.parametrize("values", [(0.0, 100, 1000), (1e-5, 0, 1000), (1e-5, 100, 0)])
    def test_non_positive_values(self, values):
        with pytest.raises(ConfigError):
            StoppingRule(*values)

    def test_from_json_defaults(self):
        assert StoppingRule.from_json(None) == StoppingRule(1e-5, 100, 1000)
        assert StoppingRule.from_json({"max_steps": 5}).max_steps == 5


class TestMetrics:
    def test_perfect(self):
        result = metrics(np.ones(5), np.ones(5))
        assert (result.rmse, result.mae, result.mape) == (0.0, 0.0, 0.0)

    def test_offset_by_one(self, rng):
        target = rng.standard_normal(20)
        result = metrics(target + 1.0, target)
        assert result.rmse == pytest.approx(1.0)
        assert result.mae == pytest.approx(1.0)

    def test_mape(self):
        assert metrics(np.array([1.0, 2.0]), np.array([2.0, 4.0])).mape == pytest.approx(0.5)

    def test_mape_skips_near_zero_targets(self):
        result = metrics(np.array([1.0, 2.0, 5.0]), np.array([2.0, 0.0, 1e-12]))
        assert result.mape == pytest.approx(0.5)
        assert result.mape_skipped == 2

    def test_mape_undefined(self):
        result = metrics(np.ones(3), np.zeros(3))
        assert result.mape is None and result.mape_skipped == 3
        assert result.rmse == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            metrics(np.ones(3), np.ones(4))


class TestScalingAndInputs:
    def test_lagged_inputs(self):
        assert_array_equal(lagged_inputs(np.array([1.0, 2.0, 3.0])), [[0.0], [1.0], [2.0]])

    def test_scaler_maps_training_range(self, rng):
        values = rng.standard_normal((50, 2)) * 7 + 3
        scaler = InputScaler.fit(values)
        scaled = scaler.transform(values)
        assert_allclose(scaled.min(axis=0), -1.0)
        assert_allclose(scaled.max(axis=0), 1.0)
        assert_allclose(scaler.inverse(scaled), values)

    def test_constant_column(self):
        with pytest.raises(DegenerateSeriesError):
            InputScaler.fit(np.ones((10, 1)))


class TestRollingForecast:
    def test_zero_model_predicts_zero(self, rng):
        y = rng.standard_normal(100)
        params = init_params("rnn", (1, 3, 1), scheme="zeros")
        preds = rolling_forecast(params, y, (60, 100))
        assert_array_equal(preds, np.zeros((40, 1)))
        assert metrics(preds, y[60:, None]).rmse == pytest.approx(np.sqrt(np.mean(y[60:] ** 2)))

    @pytest.mark.parametrize("kind", ["rnn", "mrnnf", "mlstm"])
    def test_future_values_do_not_leak(self, kind, rng):
        params = init_params(kind, (1, 4, 1), K=10, seed=2)
        y = rng.standard_normal(120)
        perturbed = y.copy()
        perturbed[90:] += 100.0
        a = rolling_forecast(params, y, (80, 120))
        b = rolling_forecast(params, perturbed, (80, 120))
        assert_allclose(a[:11], b[:11], rtol=1e-12, atol=1e-14)
        assert not np.allclose(a[11:], b[11:])

    @pytest.mark.parametrize("test_range", [(0, 101), (50, 50), (-1, 10)])
    def test_range_outside_series(self, test_range):
        params = init_params("rnn", (1, 2, 1))
        with pytest.raises(ConfigError):
            rolling_forecast(params, np.zeros(100), test_range)


class TestTrain:
    def test_deterministic(self):
        data = ar1_series()
        rule = StoppingRule(max_steps=5)
        a, ca = train("mrnnf", (1, 4, 1), 10, data, rule, seed=3)
        b, cb = train("mrnnf", (1, 4, 1), 10, data, rule, seed=3)
        assert without_wall_time(a) == without_wall_time(b)
        assert ca.fingerprint() == cb.fingerprint()

    def test_single_step(self):
        record, _ = train("rnn", (1, 3, 1), 0, ar1_series(), StoppingRule(max_steps=1), seed=0)
        assert record.steps == 1
        assert len(record.train_losses) == 2 and len(record.val_losses) == 2
        assert record.stop_reason in ("max-steps", "loss-drop")

    def test_checkpoint_is_best_validation(self):
        data = ar1_series()
        record, checkpoint = train("rnn", (1, 4, 1), 0, data, StoppingRule(max_steps=40), seed=1)
        assert record.best_step == int(np.argmin(record.val_losses))
        assert record.best_step <= record.steps

        n_train, n_fit = 150, 240
        Z, _ = forward(checkpoint, lagged_inputs(data.values[:n_fit]))
        val_loss, _ = loss_mse(Z[n_train:], data.values[n_train:n_fit])
        assert val_loss == pytest.approx(record.val_losses[record.best_step], rel=1e-12)

        preds = rolling_forecast(checkpoint, data, data.splits.test_range)
        replay = metrics(preds, data.values[240:300])
        assert replay.rmse == pytest.approx(record.metrics.rmse, rel=1e-12)

    def test_training_lowers_loss(self):
        record, _ = train("rnn", (1, 4, 1), 0, ar1_series(), StoppingRule(max_steps=60), seed=0)
        assert min(record.train_losses) < record.train_losses[0]

    def test_scaled_inputs_report_original_units(self):
        base = ar1_series()
        data = type(base)(base.values * 1000.0, base.columns, base.splits)
        record, _ = train("rnn", (1, 3, 1), 0, data, StoppingRule(max_steps=3), seed=0, scale_inputs=True)
        assert record.metrics.rmse > 100.0
        assert max(record.train_losses) < 10.0

    def test_needs_splits(self):
        data = generate_arfima(ArfimaSpec(), 100, 0)
        with pytest.raises(ConfigError):
            train("rnn", (1, 2, 1), 0, data, StoppingRule(), seed=0)

    def test_dims_must_match_series(self):
        with pytest.raises(ShapeError):
            train("rnn", (2, 2, 2), 0, ar1_series(), StoppingRule(), seed=0)

    def test_record_json(self):
        record, checkpoint = train("rnn", (1, 2, 1), 0, ar1_series(), StoppingRule(max_steps=2), seed=0)
        doc = record.to_json()
        assert doc["schema"] == "run-record/1"
        assert set(doc["metrics"]) == {"rmse", "mae", "mape", "mape_skipped"}
        assert checkpoint.to_json()["schema"] == "cell-params/1"


class TestMultiSeed:
    def config(self, kind="rnn"):
        return RunConfig(ModelSpec(kind, q=3, K=10), ar1_series(), StoppingRule(max_steps=4),
                         OptimizerConfig(), config_digest="abc")

    def test_identical_seeds_identical_records(self):
        result = multi_seed_experiment(self.config(), [4, 4], verbose=False)
        a, b = result.records
        assert without_wall_time(a) == without_wall_time(b)

    def test_summary_and_order(self):
        result = multi_seed_experiment(self.config("mrnnf"), [2, 0, 1], verbose=False)
        assert [r.seed for r in result.records] == [2, 0, 1]
        assert result.failed == 0
        for metric in ("rmse", "mae", "mape"):
            assert result.summary[metric]["min"] <= result.summary[metric]["mean"]
        table = result.metric_table()
        assert list(table.columns) == ["seed", "rmse", "mae", "mape"]
        assert result.summary["rmse"]["best_seed"] == int(table.loc[table["rmse"].idxmin(), "seed"])

    def test_workers_match_serial(self):
        serial = multi_seed_experiment(self.config(), [0, 1, 2], workers=1, verbose=False)
        pooled = multi_seed_experiment(self.config(), [0, 1, 2], workers=2, verbose=False)
        assert [without_wall_time(r) for r in serial.records] == [without_wall_time(r) for r in pooled.records]

    def test_failed_runs_are_counted(self, monkeypatch, capsys):
        real_train = training.train

        def flaky(kind, dims, K, data, rule, seed, **kwargs):
            if seed == 1:
                raise ForwardDivergenceError(17, kind)
            return real_train(kind, dims, K, data, rule, seed, **kwargs)

        monkeypatch.setattr(training, "train", flaky)
        result = multi_seed_experiment(self.config(), [0, 1, 2])
        assert result.failed == 1
        assert [r.status for r in result.records] == ["ok", "failed", "ok"]
        assert "timestep 17" in result.records[1].error
        assert 1 not in result.checkpoints
        assert "⚠️" in capsys.readouterr().out

    def test_all_failed(self, monkeypatch):
        def broken(kind, dims, K, data, rule, seed, **kwargs):
            raise ForwardDivergenceError(1, kind)

        monkeypatch.setattr(training, "train", broken)
        with pytest.raises(ExperimentError):
            multi_seed_experiment(self.config(), [0, 1], verbose=False)

    def test_needs_two_seeds(self):
        with pytest.raises(ConfigError):
            multi_seed_experiment(self.config(), [0])

    def test_summary_of_single_success_has_no_std(self):
        summary = summarize([ok_record(0, 1.2), RunRecord(1, "", "m", "rnn", status="failed")])
        assert summary["rmse"] == {"mean": 1.2, "std": None, "min": 1.2, "best_seed": 0}


class TestWelch:
    @pytest.mark.parametrize("a, b", [
        (TEXTBOOK_A, TEXTBOOK_B),
        ([1.1, 1.3, 1.2, 1.6, 1.0], [1.5, 1.4, 1.9, 1.7, 1.8, 2.0]),
        ([10.0, 12.0, 9.5, 11.0], [10.5, 9.0, 13.0, 12.5, 11.5, 8.0, 10.0]),
    ])
    def test_matches_scipy(self, a, b):
        ours = welch_ttest(a, b)
        oracle = stats.ttest_ind(a, b, equal_var=False, alternative="less")
        assert ours.t == pytest.approx(oracle.statistic, abs=5e-3)
        assert ours.df == pytest.approx(oracle.df, abs=5e-3)
        assert ours.p_one_sided == pytest.approx(oracle.pvalue, rel=1e-8)

    def test_textbook_pair(self):
        result = welch_ttest(TEXTBOOK_A, TEXTBOOK_B)
        assert result.t < 0
        assert result.p_one_sided < 0.05
        assert (result.n_a, result.n_b) == (15, 14)

    def test_identical_samples(self, rng):
        a = rng.standard_normal(30)
        result = welch_ttest(a, a.copy())
        assert result.t == 0.0
        assert result.p_one_sided == pytest.approx(0.5)

    def test_separated_samples(self, rng):
        a = rng.standard_normal(100)
        assert welch_ttest(a, a + 10.0).p_one_sided < 1e-10

    def test_t_cdf_matches_scipy(self):
        for t, df in [(-2.2, 24.5), (0.7, 3.0), (-0.1, 200.0), (4.0, 1.5)]:
            assert student_t_cdf(t, df) == pytest.approx(stats.t.cdf(t, df), rel=1e-10)

    @pytest.mark.parametrize("a, b", [([1.0], [1.0, 2.0]), ([3.0, 3.0], [2.0, 2.0]), ([1.0, np.nan], [1.0, 2.0])])
    def test_degenerate_samples(self, a, b):
        with pytest.raises(StatisticsError):
            welch_ttest(a, b)

    def test_json(self):
        doc = welch_ttest(TEXTBOOK_A, TEXTBOOK_B).to_json()
        assert doc["schema"] == "ttest/1"
        assert doc["alternative"] == "mean(a) < mean(b)"

    def test_compare_to_baseline(self):
        def result(name, rmses):
            records = [ok_record(s, v, name) for s, v in enumerate(rmses)]
            return ExperimentResult(name, records, {}, summarize(records), 0)

        results = {"mrnnf": result("mrnnf", [1.0, 1.1, 1.05]), "rnn": result("rnn", [1.2, 1.3, 1.25])}
        comparisons = compare_to_baseline(results, "rnn")
        assert set(comparisons) == {"mrnnf"}
        assert comparisons["mrnnf"]["rmse"]["p_one_sided"] < 0.05
        with pytest.raises(ConfigError):
            compare_to_baseline(results, "lstm")

    def test_compare_reports_degenerate_metric(self):
        def result(name, value):
            records = [ok_record(s, value, name) for s in range(3)]
            return ExperimentResult(name, records, {}, summarize(records), 0)

        comparisons = compare_to_baseline({"a": result("a", 1.0), "b": result("b", 2.0)}, "b")
        assert "error" in comparisons["a"]["rmse"]


@pytest.mark.slow
class TestLongRuns:
    def test_rnn_learns_ar1(self):
        data = generate_arfima(ArfimaSpec(ar=(0.5,), d=0.0), 3000, 5).with_splits(Splits(2000, 500, 500))
        record, _ = train("rnn", (1, 4, 1), 0, data, StoppingRule(max_steps=400), seed=0)
        assert record.metrics.rmse < 1.05

    def test_memory_network_beats_rnn_on_arfima(self):
        config = load_config(preset="arfima-paper")
        experiment = ExperimentConfig.from_config(config)
        data = build_dataset(config).with_splits(experiment.splits)
        results = {}
        for model in experiment.models:
            run = RunConfig(model, data, experiment.rule, experiment.optimizer)
            results[model.name] = multi_seed_experiment(run, list(experiment.seeds), workers=4, verbose=False)
        assert results["mrnnf"].summary["rmse"]["mean"] < results["rnn"].summary["rmse"]["mean"]
        assert 1.00 <= results["mrnnf"].summary["rmse"]["min"] <= 1.15

    def test_memory_network_matches_rnn_on_rnn_process(self):
        config = load_config(preset="rnn-paper")
        experiment = ExperimentConfig.from_config(config)
        data = build_dataset(config).with_splits(experiment.splits)
        means = {}
        for model in experiment.models:
            run = RunConfig(model, data, experiment.rule, experiment.optimizer)
            means[model.name] = multi_seed_experiment(run, list(experiment.seeds), workers=4,
                                                      verbose=False).summary["rmse"]["mean"]
        assert means["mrnnf"] == pytest.approx(means["rnn"], rel=0.05)
