"""
Long Memory Recurrent Networks - command line

Subcommands:
    generate     Simulate a dataset from a config or preset and write it as CSV
    diagnose     ACF / periodogram / memory classification of a series CSV
    check        Geometric-ergodicity verdict for a checkpoint
    experiment   Multi-seed training of every configured model, with summaries
    impulse      Impulse-response coefficients and their decay class
    compare      One-sided Welch t-test between two per-seed metric CSVs

Usage:
    python src/main.py generate --preset arfima-paper --seed 1
    python src/main.py diagnose output/arfima-paper.csv
    python src/main.py experiment --preset smoke --workers 2
    python src/main.py compare output/<run>/mrnnf_metrics.csv output/<run>/rnn_metrics.csv
"""

import argparse
import os
import sys
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

# Fix Windows encoding
if sys.platform == 'win32':
    sys.stdout.reconfigure(encoding='utf-8', errors='replace')

load_dotenv()

from diagnostics import (
    DEFAULT_A,
    DEFAULT_TAIL_START,
    LinearSpec,
    acf,
    check_linear_ergodicity,
    check_lstm_ergodicity,
    check_rnn_ergodicity,
    classify_decay,
    impulse_response,
    linear_spec_from_params,
    memory_signature,
    periodogram,
)
from errors import ConfigError, InsufficientDataError, LmrnError, UnsupportedConfigurationError
from networks import CellParams
from presets import ExperimentConfig, build_dataset, config_document, load_config
from reports import (
    SUMMARY_FILE,
    build_summary,
    prepare_run_dir,
    read_json,
    read_metric_column,
    validate_document,
    write_acf_csv,
    write_boxplot_csv,
    write_impulse_csv,
    write_json,
    write_metrics_csv,
    write_periodogram_csv,
    write_run_records,
)
from timeseries import read_series_csv, write_series_csv
from training import RunConfig, compare_to_baseline, multi_seed_experiment, welch_ttest

DEFAULT_HORIZON = 1000


def output_root(out: Optional[str]) -> Path:
    return Path(out) if out else Path(os.getenv("LMRN_OUTPUT_DIR", "output"))


def env_number(name: str, default, cast):
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return cast(raw)
    except ValueError as e:
        raise ConfigError(f"environment variable {name}={raw!r} is not a valid number") from e


def banner(title: str) -> None:
    print("=" * 60)
    print(title)
    print("=" * 60)


# =============================================================================
# Subcommands
# =============================================================================

def cmd_generate(args: argparse.Namespace) -> Path:
    """Simulate the configured dataset and write it as CSV."""
    config = load_config(args.config, args.preset)
    banner("📈 LMRN - GENERATE")
    series = build_dataset(config, args.seed)
    seed = args.seed if args.seed is not None else config.get("data_seed", 0)
    print(f"   Dataset: {config['dataset'].get('type')} ({config.get('preset') or 'custom'})")
    print(f"   Seed: {seed}")

    if args.out and args.out.endswith(".csv"):
        path = Path(args.out)
    else:
        path = output_root(args.out) / f"{config.get('preset') or 'series'}-seed{seed}.csv"
    write_series_csv(series, path)
    print(f"\n✅ Wrote {series.n} rows to {path}")
    return path


def cmd_diagnose(args: argparse.Namespace) -> Path:
    """ACF, periodogram and memory classification of one series column."""
    banner("🔍 LMRN - DIAGNOSE")
    series = read_series_csv(Path(args.series))
    column = args.column or series.columns[0]
    if column not in series.columns:
        raise ConfigError(f"{args.series} has no column '{column}'")
    x = series.column(series.columns.index(column))
    n = x.shape[0]
    print(f"   Series: {args.series} [{column}], {n} rows")

    signature = memory_signature(x, args.max_lag)
    max_lag = args.max_lag or max(1, min(200, n // 4))
    correlations = acf(x, max_lag)
    try:
        decay = classify_decay(correlations.autocorrelation, tail_start=args.tail_start)
    except InsufficientDataError as e:
        print(f"   ⚠️  ACF tail too short to classify: {e}")
        decay = None

    out_dir = output_root(args.out) / f"diagnose-{Path(args.series).stem}"
    out_dir.mkdir(parents=True, exist_ok=True)
    write_acf_csv(correlations, out_dir / "acf.csv")
    write_periodogram_csv(periodogram(x), out_dir / "periodogram.csv")
    report = {
        "schema": "diagnostic-report/1",
        "source": str(args.series),
        "column": column,
        "n": n,
        "max_lag": max_lag,
        "variance": float(correlations.autocovariance[0]),
        "classification": signature.conclusion,
        "memory_signature": signature.to_json(),
        "acf_decay": decay.to_json() if decay else None,
    }
    path = write_json(report, out_dir / "report.json")

    print(f"\n📊 d estimate {signature.d_estimate:.3f} "
          f"(low-frequency slope {signature.spectral_slope:.3f} over {signature.bandwidth} frequencies)")
    if decay:
        print(f"   ACF tail: {decay.kind}")
    print(f"\n✅ {signature.conclusion} → {path}")
    return path


def cmd_check(args: argparse.Namespace) -> Path:
    """Ergodicity verdict for an RNN/LSTM checkpoint or a linear chain {"kind": "linear-mc", "W": ...}."""
    banner("🔍 LMRN - ERGODICITY CHECK")
    doc = read_json(Path(args.checkpoint))
    a = args.a if args.a is not None else env_number("LMRN_DEFAULT_A", DEFAULT_A, float)

    if doc.get("kind") == "linear-mc":
        if "W" not in doc:
            raise ConfigError("linear-mc document needs a matrix 'W'")
        verdict = check_linear_ergodicity(doc["W"])
    else:
        params = CellParams.from_json(doc)
        if params.kind == "rnn":
            verdict = check_rnn_ergodicity(params, output_fn=args.output_fn, activation_fn=args.activation, a=a)
        elif params.kind == "lstm":
            verdict = check_lstm_ergodicity(params, a=a, gate_fn=args.gate_fn, output_fn=args.output_fn)
        else:
            raise UnsupportedConfigurationError(f"no ergodicity conditions for {params.kind} cells")

    for item in verdict.checked_inequalities:
        mark = "✅" if item.satisfied else "⚠️ "
        print(f"   {mark} {item.name}: {item.lhs:.6g} (bound {item.bound:g})")
    result = {**verdict.to_json(), "a": a, "kind": doc.get("kind", "")}
    path = Path(args.out) if args.out else output_root(None) / f"{Path(args.checkpoint).stem}.verdict.json"
    write_json(result, path)
    print(f"\n✅ {verdict.conclusion} ({verdict.branch}) → {path}")
    return path


def cmd_experiment(args: argparse.Namespace) -> Path:
    """Train every configured model over all seeds and write the run directory."""
    config = load_config(args.config, args.preset)
    if args.scale_inputs:
        config["scale_inputs"] = True
    if args.seed is not None:
        config["data_seed"] = args.seed
    plan = ExperimentConfig.from_config(config)
    run_config_doc = config_document(config)
    validate_document(run_config_doc)
    workers = args.workers if args.workers is not None else env_number("LMRN_WORKERS", 1, int)
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")

    banner("🧪 LMRN - EXPERIMENT")
    print(f"   Config: {config.get('preset') or args.config} (digest {plan.digest[:12]})")
    print(f"   Models: {', '.join(m.name for m in plan.models)}")
    print(f"   Seeds: {len(plan.seeds)}, workers: {workers}")

    data = build_dataset(config).with_splits(plan.splits)
    run_dir = prepare_run_dir(output_root(args.out), plan.digest)
    write_json(run_config_doc, run_dir / "config.json")
    write_series_csv(data, run_dir / "data.csv")

    results = {}
    for model in plan.models:
        print(f"\n📊 Training {model.name} (q={model.q}, K={model.K})...")
        run_config = RunConfig(model, data, plan.rule, plan.optimizer, plan.scale_inputs, plan.digest)
        result = multi_seed_experiment(run_config, list(plan.seeds), workers=workers)
        write_run_records(run_dir, result)
        write_metrics_csv(result, run_dir / f"{model.name}_metrics.csv")
        results[model.name] = result

    comparisons = compare_to_baseline(results, plan.baseline) if plan.baseline else {}
    write_boxplot_csv(results, run_dir / "boxplot.csv")
    summary = build_summary(results, comparisons, config, plan.digest, list(plan.seeds), plan.baseline)
    write_json(summary, run_dir / SUMMARY_FILE)

    print("\n📊 Test RMSE by model:")
    for name, result in results.items():
        stats = result.summary["rmse"]
        spread = f"{stats['std']:.4f}" if stats["std"] is not None else "n/a"
        print(f"   {name}: mean {stats['mean']:.4f} (sd {spread}), best {stats['min']:.4f}"
              f" [{result.failed} failed]")
    for name, tests in comparisons.items():
        p = tests["rmse"].get("p_one_sided")
        if p is not None:
            print(f"   {name} < {plan.baseline} (rmse): p = {p:.4g}")

    print(f"\n✅ Experiment complete → {run_dir}")
    return run_dir


def cmd_impulse(args: argparse.Namespace) -> Path:
    """Impulse response of a linear spec or a checkpoint, with its decay class."""
    banner("🔍 LMRN - IMPULSE RESPONSE")
    doc = read_json(Path(args.spec))
    if str(doc.get("schema", "")).startswith("cell-params/"):
        spec = linear_spec_from_params(CellParams.from_json(doc))
    else:
        spec = LinearSpec.from_json(doc)
    coeffs = impulse_response(spec, args.horizon)
    print(f"   Kind: {spec.kind}, horizon {args.horizon}")

    magnitudes = (coeffs ** 2).sum(axis=(1, 2)) ** 0.5
    decay = classify_decay(magnitudes, tail_start=args.tail_start)

    out_dir = output_root(args.out) / f"impulse-{Path(args.spec).stem}"
    out_dir.mkdir(parents=True, exist_ok=True)
    write_impulse_csv(coeffs, out_dir / "impulse.csv")
    report = {
        "schema": "impulse-report/1",
        "kind": spec.kind,
        "horizon": int(args.horizon),
        "filter_K": spec.K,
        "d": None if spec.d is None else [float(v) for v in spec.d],
        "decay": decay.to_json(),
    }
    path = write_json(report, out_dir / "impulse.json")
    rate = f"{decay.rate:.4f}" if decay.rate is not None else "n/a"
    print(f"\n✅ {decay.kind} decay (rate {rate}) → {path}")
    return path


def cmd_compare(args: argparse.Namespace) -> Path:
    """Welch t-test of H1: mean(metric in A) < mean(metric in B)."""
    banner("📊 LMRN - COMPARE")
    a = read_metric_column(Path(args.sample_a), args.metric)
    b = read_metric_column(Path(args.sample_b), args.metric)
    test = welch_ttest(a, b)
    print(f"   {args.metric}: A n={test.n_a}, B n={test.n_b}")
    print(f"   t = {test.t:.4f}, df = {test.df:.2f}, one-sided p = {test.p_one_sided:.4g}")

    doc = {**test.to_json(), "metric": args.metric,
           "sample_a": str(args.sample_a), "sample_b": str(args.sample_b)}
    path = Path(args.out) if args.out else output_root(None) / f"ttest-{args.metric}.json"
    write_json(doc, path)
    print(f"\n✅ Wrote {path}")
    return path


# =============================================================================
# Entry point
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Long memory recurrent networks")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="Simulate a dataset and write it as CSV")
    gen.add_argument("--config", type=str, help="Config JSON")
    gen.add_argument("--preset", type=str, help="Built-in preset name (e.g. arfima-paper)")
    gen.add_argument("--seed", type=int, help="Data seed (default: config data_seed)")
    gen.add_argument("--out", type=str, help="Output .csv file or directory")
    gen.set_defaults(handler=cmd_generate)

    diag = sub.add_parser("diagnose", help="Memory diagnostics of a series CSV")
    diag.add_argument("series", type=str, help="Series CSV")
    diag.add_argument("--column", type=str, help="Column to analyse (default: first)")
    diag.add_argument("--max-lag", type=int, help="Largest ACF lag (default: min(200, n/4))")
    diag.add_argument("--tail-start", type=int, default=DEFAULT_TAIL_START,
                      help=f"First lag of the ACF decay fit (default: {DEFAULT_TAIL_START})")
    diag.add_argument("--out", type=str, help="Output directory")
    diag.set_defaults(handler=cmd_diagnose)

    check = sub.add_parser("check", help="Ergodicity verdict for a checkpoint")
    check.add_argument("checkpoint", type=str, help="cell-params JSON or linear-mc JSON")
    check.add_argument("--a", type=float, help="Contraction constant in (0, 1) (default: LMRN_DEFAULT_A or 0.99)")
    check.add_argument("--gate-fn", type=str, default="sigmoid", help="LSTM gate function (default: sigmoid)")
    check.add_argument("--activation", type=str, choices=["tanh", "sigmoid", "identity", "relu"],
                       help="RNN hidden activation (default: the checkpoint's)")
    check.add_argument("--output-fn", type=str, choices=["identity", "sigmoid", "tanh", "softmax"],
                       help="Output function (default: the checkpoint's)")
    check.add_argument("--out", type=str, help="Verdict JSON path")
    check.set_defaults(handler=cmd_check)

    exp = sub.add_parser("experiment", help="Multi-seed training experiment")
    exp.add_argument("--config", type=str, help="Config JSON")
    exp.add_argument("--preset", type=str, help="Built-in preset name")
    exp.add_argument("--seed", type=int, help="Data seed override")
    exp.add_argument("--out", type=str, help="Output root (default: LMRN_OUTPUT_DIR or output/)")
    exp.add_argument("--scale-inputs", action="store_true", help="Scale the series to [-1, 1] for training")
    exp.add_argument("--workers", type=int, help="Worker processes (default: LMRN_WORKERS or 1)")
    exp.set_defaults(handler=cmd_experiment)

    imp = sub.add_parser("impulse", help="Impulse-response coefficients of a linearized network")
    imp.add_argument("spec", type=str, help="Linear spec JSON or cell-params checkpoint")
    imp.add_argument("--horizon", type=int, default=DEFAULT_HORIZON,
                     help=f"Number of lags (default: {DEFAULT_HORIZON})")
    imp.add_argument("--tail-start", type=int, default=DEFAULT_TAIL_START,
                     help=f"First lag of the decay fit (default: {DEFAULT_TAIL_START})")
    imp.add_argument("--out", type=str, help="Output directory")
    imp.set_defaults(handler=cmd_impulse)

    cmp_ = sub.add_parser("compare", help="Welch t-test between two metric CSVs")
    cmp_.add_argument("sample_a", type=str, help="Per-seed metrics CSV of the candidate model")
    cmp_.add_argument("sample_b", type=str, help="Per-seed metrics CSV of the benchmark model")
    cmp_.add_argument("--metric", type=str, default="rmse", help="Metric column (default: rmse)")
    cmp_.add_argument("--out", type=str, help="T-test JSON path")
    cmp_.set_defaults(handler=cmd_compare)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.handler(args)
    except LmrnError as e:
        print(f"\n❌ {type(e).__name__}: {e}")
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
