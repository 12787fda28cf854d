"""
Result persistence: schema-checked JSON documents, plot-ready CSVs and
experiment run directories.
"""

import json
from functools import lru_cache
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np
import pandas as pd

from diagnostics import AcfResult, SpectrumResult
from errors import ConfigError, DataError, SchemaError
from timeseries import FLOAT_FORMAT
from training import METRICS, ExperimentResult

SCHEMA_DIR = Path(__file__).parent.parent / "config" / "schemas"
SUMMARY_FILE = "summary.json"


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    """Load config/schemas/<name>.v1.json."""
    path = SCHEMA_DIR / f"{name}.v1.json"
    if not path.exists():
        raise SchemaError(f"no schema named {name}")
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def validate_document(doc: dict) -> None:
    """Check a document against the schema named by its "schema" field."""
    tag = doc.get("schema", "")
    name, _, version = tag.partition("/")
    if version != "1":
        raise SchemaError(f"unsupported document schema '{tag}'")
    try:
        jsonschema.validate(doc, load_schema(name))
    except jsonschema.ValidationError as e:
        raise SchemaError(f"{tag} document failed validation: {e.message}") from e


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True)


def write_json(doc: dict, path: Path, validate: bool = True) -> Path:
    """Validate (when the document carries a schema tag) and write a JSON document."""
    if validate and "schema" in doc:
        validate_document(doc)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(doc) + "\n")
    return path


def read_json(path: Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"could not read JSON {path}: {e}") from e


# =============================================================================
# Plot data
# =============================================================================

def write_acf_csv(result: AcfResult, path: Path) -> Path:
    """r_1..r_L (r_0 = 1 is left out)."""
    frame = pd.DataFrame({"lag": result.lags[1:], "acf": result.autocorrelation[1:]})
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return Path(path)


def write_periodogram_csv(spectrum: SpectrumResult, path: Path) -> Path:
    frame = pd.DataFrame({"frequency": spectrum.frequencies, "ordinate": spectrum.ordinates})
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return Path(path)


def write_impulse_csv(coeffs: np.ndarray, path: Path) -> Path:
    """One row per lag k; column a_<i>_<j> holds entry (i, j) of A_k."""
    horizon, pz, px = coeffs.shape
    frame = pd.DataFrame(coeffs.reshape(horizon, pz * px),
                         columns=[f"a_{i}_{j}" for i in range(pz) for j in range(px)])
    frame.insert(0, "k", np.arange(horizon))
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return Path(path)


# =============================================================================
# Experiment run directories
# =============================================================================

def prepare_run_dir(out_root: Path, digest: str) -> Path:
    """
    OUT/<digest[:12]>/ for a config digest.

    A directory that already holds a summary is a finished run and is never
    reused; an unfinished one is written over.
    """
    run_dir = Path(out_root) / digest[:12]
    if (run_dir / SUMMARY_FILE).exists():
        raise ConfigError(f"run directory {run_dir} already holds a finished experiment")
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def write_run_records(run_dir: Path, result: ExperimentResult) -> None:
    """runs/<label>/seed-<n>.json plus the checkpoint of every successful seed."""
    model_dir = Path(run_dir) / "runs" / result.model
    for record in result.records:
        write_json(record.to_json(), model_dir / f"seed-{record.seed}.json")
        checkpoint = result.checkpoints.get(record.seed)
        if checkpoint is not None:
            write_json(checkpoint.to_json(), model_dir / f"seed-{record.seed}.checkpoint.json")


def write_metrics_csv(result: ExperimentResult, path: Path) -> Path:
    """Per-seed metrics (seed, rmse, mae, mape) of successful runs."""
    result.metric_table().to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return Path(path)


def write_boxplot_csv(results: dict[str, ExperimentResult], path: Path) -> Path:
    """Long format: model, seed, metric, value."""
    frames = []
    for name, result in results.items():
        table = result.metric_table()
        long = table.melt(id_vars="seed", value_vars=list(METRICS), var_name="metric", value_name="value")
        long.insert(0, "model", name)
        frames.append(long)
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=["model", "seed", "metric", "value"])
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return Path(path)


def read_metric_column(path: Path, metric: str) -> np.ndarray:
    """One metric column of a per-seed metrics CSV, missing entries dropped."""
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"could not read metrics CSV {path}: {e}") from e
    if metric not in frame.columns:
        raise DataError(f"{path} has no column '{metric}'")
    try:
        return frame[metric].dropna().to_numpy(dtype=float)
    except ValueError as e:
        raise DataError(f"{path} column '{metric}' is not numeric: {e}") from e


def build_summary(
    results: dict[str, ExperimentResult],
    comparisons: dict[str, dict],
    config: dict,
    digest: str,
    seeds: list[int],
    baseline: Optional[str],
) -> dict:
    models = {}
    for name, result in results.items():
        kind = result.records[0].kind if result.records else ""
        models[name] = {
            "kind": kind,
            "runs": len(result.records),
            "failed": result.failed,
            "metrics": result.summary,
        }
    return {
        "schema": "experiment-summary/1",
        "config_digest": digest,
        "preset": config.get("preset"),
        "seeds": list(seeds),
        "baseline": baseline,
        "models": models,
        "comparisons": comparisons,
    }
