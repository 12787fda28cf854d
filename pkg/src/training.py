"""
Training harness: Adam, stopping rules, rolling forecasts, metrics,
multi-seed experiments and Welch t-tests.

Forecasting setup: the network sees the previous observation as input
(x^t = y^{t-1}, x^0 = 0) and predicts y^t. Every optimizer step runs one
forward pass over train + validation; the training-segment loss drives the
gradient and the validation-segment loss of the same pass scores the
current parameters.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import pandas as pd
from scipy.special import betainc

from errors import (
    ConfigError,
    DegenerateSeriesError,
    ExperimentError,
    NumericalError,
    ShapeError,
    StatisticsError,
)
from fracdiff import DEFAULT_K
from networks import CellParams, Gradients, backward, forward, init_params, loss_mse
from timeseries import Splits, TimeSeries

METRICS = ("rmse", "mae", "mape")
MAPE_THRESHOLD = 1e-8


# =============================================================================
# Adam
# =============================================================================

@dataclass(frozen=True)
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params: CellParams, lr: float = 0.01, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """Fresh Adam state with zero moments."""
    zeros = {name: np.zeros_like(value) for name, value in params.weights.items()}
    return AdamState(zeros, {name: z.copy() for name, z in zeros.items()}, 0, lr, beta1, beta2, eps)


def adam_step(params: CellParams, grads: Gradients, state: AdamState) -> tuple[CellParams, AdamState]:
    """
    One Adam update with bias correction.

    Returns:
        (updated params, updated state); the inputs are left untouched
    """
    if set(grads) != set(params.weights):
        raise ShapeError(f"gradients for {sorted(grads)} do not match parameters {sorted(params.weights)}")
    step = state.step + 1
    correction1 = 1.0 - state.beta1 ** step
    correction2 = 1.0 - state.beta2 ** step

    new_weights, new_m, new_v = {}, {}, {}
    for name, value in params.weights.items():
        g = np.asarray(grads[name], dtype=float)
        if g.shape != value.shape:
            raise ShapeError(f"gradient {name} has shape {g.shape}, expected {value.shape}")
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        new_weights[name] = value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name], new_v[name] = m, v

    new_state = AdamState(new_m, new_v, step, state.lr, state.beta1, state.beta2, state.eps)
    return params.replace_weights(new_weights), new_state


# =============================================================================
# Stopping rule
# =============================================================================

@dataclass(frozen=True)
class StoppingRule:
    """Stop on a small loss drop, a run of rising losses, or the step cap."""

    min_loss_drop: float = 1e-5
    patience: int = 100
    max_steps: int = 1000

    def __post_init__(self):
        if self.min_loss_drop <= 0 or self.patience < 1 or self.max_steps < 1:
            raise ConfigError(f"stopping rule values must be positive, got {self}")

    def stop_reason(self, train_losses: list[float]) -> Optional[str]:
        """
        Reason to stop after the latest evaluation, or None.

        train_losses[s] is the training loss of the parameters after s steps.
        """
        s = len(train_losses) - 1
        if s >= 1:
            drop = train_losses[-2] - train_losses[-1]
            if 0.0 <= drop < self.min_loss_drop:
                return "loss-drop"
            if s >= self.patience:
                tail = np.asarray(train_losses[-self.patience - 1:])
                if np.all(np.diff(tail) > 0):
                    return "patience"
        if s >= self.max_steps:
            return "max-steps"
        return None

    @classmethod
    def from_json(cls, doc: Optional[dict]) -> "StoppingRule":
        doc = doc or {}
        return cls(float(doc.get("min_loss_drop", 1e-5)), int(doc.get("patience", 100)),
                   int(doc.get("max_steps", 1000)))


# =============================================================================
# Metrics and scaling
# =============================================================================

@dataclass
class ForecastMetrics:
    rmse: float
    mae: float
    mape: Optional[float]
    mape_skipped: int

    def to_dict(self) -> dict:
        return {"rmse": self.rmse, "mae": self.mae, "mape": self.mape, "mape_skipped": self.mape_skipped}


def metrics(pred: np.ndarray, target: np.ndarray, mape_threshold: float = MAPE_THRESHOLD) -> ForecastMetrics:
    """
    RMSE, MAE and MAPE of a forecast.

    MAPE skips entries with |target| < mape_threshold and reports how many
    were skipped; it is None when every entry is skipped.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {pred.shape} != target shape {target.shape}")
    if pred.size == 0:
        raise ShapeError("metrics need at least one value")
    err = pred - target
    usable = np.abs(target) >= mape_threshold
    skipped = int(np.sum(~usable))
    mape = float(np.mean(np.abs(err[usable]) / np.abs(target[usable]))) if usable.any() else None
    return ForecastMetrics(
        rmse=float(np.sqrt(np.mean(err * err))),
        mae=float(np.mean(np.abs(err))),
        mape=mape,
        mape_skipped=skipped,
    )


@dataclass(frozen=True)
class InputScaler:
    """Affine map of each column onto [-1, 1] using the training segment's range."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray) -> "InputScaler":
        lo, hi = values.min(axis=0), values.max(axis=0)
        if np.any(hi == lo):
            raise DegenerateSeriesError("cannot scale a constant training segment")
        return cls(lo, hi)

    def transform(self, values: np.ndarray) -> np.ndarray:
        return 2.0 * (values - self.lo) / (self.hi - self.lo) - 1.0

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return (values + 1.0) * (self.hi - self.lo) / 2.0 + self.lo


def lagged_inputs(values: np.ndarray) -> np.ndarray:
    """x^t = y^{t-1} with x^0 = 0."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    return np.vstack([np.zeros((1, values.shape[1])), values[:-1]])


# =============================================================================
# Training
# =============================================================================

@dataclass
class RunRecord:
    seed: int
    config_digest: str
    model: str
    kind: str
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_step: int = 0
    steps: int = 0
    stop_reason: str = ""
    metrics: Optional[ForecastMetrics] = None
    wall_time: float = 0.0
    status: str = "ok"
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_json(self) -> dict:
        return {
            "schema": "run-record/1",
            "seed": self.seed,
            "config_digest": self.config_digest,
            "model": self.model,
            "kind": self.kind,
            "status": self.status,
            "error": self.error,
            "steps": self.steps,
            "best_step": self.best_step,
            "stop_reason": self.stop_reason,
            "train_losses": self.train_losses,
            "val_losses": self.val_losses,
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "wall_time": self.wall_time,
        }


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def from_json(cls, doc: Optional[dict]) -> "OptimizerConfig":
        doc = doc or {}
        return cls(float(doc.get("lr", 0.01)), float(doc.get("beta1", 0.9)),
                   float(doc.get("beta2", 0.999)), float(doc.get("eps", 1e-8)))


def train(
    kind: str,
    dims: tuple[int, int, int],
    K: int,
    data: TimeSeries,
    rule: StoppingRule,
    seed: int,
    optimizer: OptimizerConfig = OptimizerConfig(),
    output_fn: str = "identity",
    scale_inputs: bool = False,
    config_digest: str = "",
    label: Optional[str] = None,
    verbose: bool = False,
    log_every: int = 50,
) -> tuple[RunRecord, CellParams]:
    """
    Full-batch training with the best-validation checkpoint.

    Args:
        kind: Cell kind
        dims: (p_x, q, p_z); p_x and p_z must equal the series dimension
        K: Filter truncation for memory kinds
        data: Series with train/val/test splits
        rule: Stopping rule
        seed: Run seed (initialization stream)
        optimizer: Adam hyperparameters
        scale_inputs: Map the series onto [-1, 1] using the training range
        verbose: Print losses every log_every steps

    Returns:
        (RunRecord with test metrics of the checkpoint, checkpoint params)
    """
    splits = _require_splits(data)
    if dims[0] != data.p or dims[2] != data.p:
        raise ShapeError(f"dims {dims} do not match a {data.p}-dimensional series")

    started = time.perf_counter()
    values = data.values
    scaler = InputScaler.fit(values[:splits.n_train]) if scale_inputs else None
    if scaler is not None:
        values = scaler.transform(values)

    n_train, n_fit = splits.n_train, splits.n_train + splits.n_val
    X = lagged_inputs(values[:n_fit])
    Y = values[:n_fit]

    params = init_params(kind, dims, K, seed, output_fn=output_fn)
    adam = init_adam(params, optimizer.lr, optimizer.beta1, optimizer.beta2, optimizer.eps)
    record = RunRecord(seed, config_digest, label or kind, kind)
    best_val, checkpoint = np.inf, params

    while True:
        Z, cache = forward(params, X)
        train_loss, grad_train = loss_mse(Z[:n_train], Y[:n_train])
        val_loss, _ = loss_mse(Z[n_train:], Y[n_train:])
        record.train_losses.append(train_loss)
        record.val_losses.append(val_loss)
        step = len(record.train_losses) - 1
        if val_loss < best_val:
            best_val, checkpoint, record.best_step = val_loss, params, step
        if verbose and step % log_every == 0:
            print(f"      step {step:4d}  train {train_loss:.6f}  val {val_loss:.6f}")

        reason = rule.stop_reason(record.train_losses)
        if reason:
            record.stop_reason = reason
            record.steps = step
            break
        output_grads = np.zeros_like(Z)
        output_grads[:n_train] = grad_train
        params, adam = adam_step(params, backward(params, cache, output_grads), adam)

    predictions = rolling_forecast(checkpoint, values, splits.test_range)
    start, stop = splits.test_range
    truth = data.values[start:stop]
    if scaler is not None:
        predictions = scaler.inverse(predictions)
    record.metrics = metrics(predictions, truth)
    record.wall_time = time.perf_counter() - started
    return record, checkpoint


def _require_splits(data: TimeSeries) -> Splits:
    if data.splits is None:
        raise ConfigError("training data needs train/val/test splits")
    data.splits.validate(data.n)
    return data.splits


def rolling_forecast(
    checkpoint: CellParams,
    series: Union[TimeSeries, np.ndarray],
    test_range: tuple[int, int],
) -> np.ndarray:
    """
    One-step forecasts over test_range using the observed history.

    The prediction for index t uses observations before t only.

    Returns:
        Array of shape (stop - start, p)
    """
    values = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    start, stop = (int(v) for v in test_range)
    if not 0 <= start < stop <= values.shape[0]:
        raise ConfigError(f"test range {test_range} is outside a series of length {values.shape[0]}")
    Z, _ = forward(checkpoint, lagged_inputs(values[:stop]))
    return Z[start:stop]


# =============================================================================
# Multi-seed experiments
# =============================================================================

@dataclass(frozen=True)
class ModelSpec:
    kind: str
    q: int = 8
    K: int = DEFAULT_K
    output_fn: str = "identity"
    label: str = ""

    @property
    def name(self) -> str:
        return self.label or self.kind

    @classmethod
    def from_json(cls, doc: dict) -> "ModelSpec":
        return cls(doc["kind"], int(doc.get("q", 8)), int(doc.get("K", DEFAULT_K)),
                   doc.get("output_fn", "identity"), doc.get("label", ""))


@dataclass(frozen=True)
class RunConfig:
    """Everything one seeded run needs besides the seed."""

    model: ModelSpec
    data: TimeSeries
    rule: StoppingRule = StoppingRule()
    optimizer: OptimizerConfig = OptimizerConfig()
    scale_inputs: bool = False
    config_digest: str = ""


@dataclass
class ExperimentResult:
    model: str
    records: list[RunRecord]
    checkpoints: dict[int, CellParams]
    summary: dict[str, dict]
    failed: int

    def metric_table(self) -> pd.DataFrame:
        """Per-seed metrics of successful runs (columns seed, rmse, mae, mape)."""
        rows = [{"seed": r.seed, "rmse": r.metrics.rmse, "mae": r.metrics.mae, "mape": r.metrics.mape}
                for r in self.records if r.ok]
        return pd.DataFrame(rows, columns=["seed", *METRICS])


def run_seed(config: RunConfig, seed: int) -> tuple[RunRecord, Optional[CellParams]]:
    """Train one seed; numerical failures become a failed RunRecord."""
    model = config.model
    dims = (config.data.p, model.q, config.data.p)
    try:
        return train(model.kind, dims, model.K, config.data, config.rule, seed,
                     optimizer=config.optimizer, output_fn=model.output_fn,
                     scale_inputs=config.scale_inputs, config_digest=config.config_digest,
                     label=model.name)
    except NumericalError as e:
        record = RunRecord(seed, config.config_digest, model.name, model.kind,
                           status="failed", error=str(e))
        return record, None


def summarize(records: list[RunRecord]) -> dict[str, dict]:
    """Mean, standard deviation and best (minimum) of each metric over successful runs."""
    table = pd.DataFrame([{"seed": r.seed, **r.metrics.to_dict()} for r in records if r.ok])
    summary = {}
    for metric in METRICS:
        column = table[metric].dropna() if metric in table else pd.Series(dtype=float)
        if column.empty:
            summary[metric] = {"mean": None, "std": None, "min": None, "best_seed": None}
            continue
        std = column.std()
        summary[metric] = {
            "mean": float(column.mean()),
            "std": None if pd.isna(std) else float(std),
            "min": float(column.min()),
            "best_seed": int(table.loc[column.idxmin(), "seed"]),
        }
    return summary


def multi_seed_experiment(
    config: RunConfig,
    seeds: list[int],
    workers: int = 1,
    verbose: bool = True,
) -> ExperimentResult:
    """
    Train one model over several seeds and summarize the test metrics.

    Runs may execute on worker processes; results are merged in seed order.
    Failed runs are excluded from the summary and counted.
    """
    if len(seeds) < 2:
        raise ConfigError(f"a multi-seed experiment needs at least 2 seeds, got {len(seeds)}")
    seeds = [int(s) for s in seeds]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_seed, [config] * len(seeds), seeds))
    else:
        outcomes = [run_seed(config, seed) for seed in seeds]

    records, checkpoints = [], {}
    for record, checkpoint in outcomes:
        records.append(record)
        if checkpoint is not None:
            checkpoints[record.seed] = checkpoint
        if verbose:
            if record.ok:
                print(f"   ✅ {record.model} seed {record.seed}: rmse {record.metrics.rmse:.4f} "
                      f"({record.steps} steps, {record.stop_reason})")
            else:
                print(f"   ⚠️  {record.model} seed {record.seed} failed: {record.error}")

    failed = sum(1 for r in records if not r.ok)
    if failed == len(records):
        raise ExperimentError(f"all {failed} runs of {config.model.name} failed")
    return ExperimentResult(config.model.name, records, checkpoints, summarize(records), failed)


# =============================================================================
# Welch t-test
# =============================================================================

@dataclass
class WelchResult:
    t: float
    df: float
    p_one_sided: float
    n_a: int
    n_b: int

    def to_json(self) -> dict:
        return {"schema": "ttest/1", "t": self.t, "df": self.df, "p_one_sided": self.p_one_sided,
                "n_a": self.n_a, "n_b": self.n_b, "alternative": "mean(a) < mean(b)"}


def student_t_cdf(t: float, df: float) -> float:
    """Student-t CDF through the regularized incomplete beta function."""
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + t * t))
    return float(tail if t < 0 else 1.0 - tail)


def welch_ttest(sample_a: list[float], sample_b: list[float]) -> WelchResult:
    """
    Welch two-sample t-test of H1: mean(a) < mean(b).

    Degrees of freedom follow Welch-Satterthwaite; the p-value is the lower
    tail of the Student-t distribution.
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise StatisticsError(f"each sample needs at least 2 values, got {a.size} and {b.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise StatisticsError("samples must be finite")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    if va + vb == 0.0:
        raise StatisticsError("both samples have zero variance")

    t = float((a.mean() - b.mean()) / np.sqrt(va + vb))
    df = float((va + vb) ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1)))
    return WelchResult(t, df, student_t_cdf(t, df), int(a.size), int(b.size))


def compare_to_baseline(results: dict[str, ExperimentResult], baseline: str) -> dict[str, dict]:
    """Welch tests of every model against the baseline, per metric."""
    if baseline not in results:
        raise ConfigError(f"baseline {baseline} is not one of the models {sorted(results)}")
    base = results[baseline].metric_table()
    comparisons = {}
    for name, result in results.items():
        if name == baseline:
            continue
        table = result.metric_table()
        comparisons[name] = {}
        for metric in METRICS:
            try:
                test = welch_ttest(table[metric].dropna(), base[metric].dropna())
                comparisons[name][metric] = test.to_json()
            except StatisticsError as e:
                comparisons[name][metric] = {"error": str(e)}
    return comparisons
