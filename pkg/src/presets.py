"""
Config loading: presets, deep merge, digests and dataset construction.

A config document is one JSON object. A top-level "preset" key pulls in the
named entry of config/presets.json and the rest of the document is merged
over it.
"""

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from errors import ConfigError, DomainError, SchemaError
from networks import KINDS, MEMORY_KINDS
from procgen import ArfimaSpec, ProcessSpec, generate_arfima, generate_network_process
from timeseries import Splits, TimeSeries, read_series_csv
from training import ModelSpec, OptimizerConfig, StoppingRule

PRESETS_PATH = Path(__file__).parent.parent / "config" / "presets.json"
DATASET_TYPES = ("arfima", "network-process", "csv")
CONFIG_SCHEMA = "config/1"


def load_presets() -> dict:
    """Load the built-in presets from JSON file."""
    with open(PRESETS_PATH, "r", encoding="utf-8") as f:
        return json.load(f)


def deep_merge(base: dict, override: dict) -> dict:
    """Recursively merge override into a copy of base; non-dict values replace."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def expand_config(doc: dict, preset: Optional[str] = None) -> dict:
    """
    Resolve the preset of a config document.

    Args:
        doc: Parsed config document (may be empty)
        preset: Preset name that overrides doc["preset"]

    Returns:
        Fully expanded config; the preset name is kept under "preset"
    """
    name = preset or doc.get("preset")
    if not name:
        return copy.deepcopy(doc)
    presets = load_presets()
    if name not in presets:
        raise ConfigError(f"unknown preset '{name}' (available: {', '.join(sorted(presets))})")
    rest = {k: v for k, v in doc.items() if k != "preset"}
    expanded = deep_merge(presets[name], rest)
    expanded["preset"] = name
    return expanded


def load_config(path: Optional[Path] = None, preset: Optional[str] = None) -> dict:
    """Read a config file (optional) and expand its preset."""
    doc = {}
    if path:
        try:
            with open(path, "r", encoding="utf-8") as f:
                doc = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"could not read config {path}: {e}") from e
        if not isinstance(doc, dict):
            raise ConfigError(f"config {path} must be a JSON object")
        tag = doc.pop("schema", None)
        if tag not in (None, CONFIG_SCHEMA):
            raise SchemaError(f"config {path} has schema {tag!r}, expected {CONFIG_SCHEMA}")
    if not doc and not preset:
        raise ConfigError("no config given: pass --config and/or --preset")
    return expand_config(doc, preset)


def config_document(config: dict) -> dict:
    """The expanded config as written to a run directory (tagged config/1)."""
    return {"schema": CONFIG_SCHEMA, **{k: v for k, v in config.items() if k != "schema"}}


def canonical_json(config: dict) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def config_digest(config: dict) -> str:
    """SHA-256 of the canonical JSON form."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def build_dataset(config: dict, seed: Optional[int] = None) -> TimeSeries:
    """
    Generate or load the series described by config["dataset"].

    Args:
        config: Expanded config
        seed: Overrides config["data_seed"]

    Returns:
        TimeSeries without splits
    """
    dataset = config.get("dataset")
    if not isinstance(dataset, dict):
        raise ConfigError("config has no 'dataset' section")
    kind = dataset.get("type")
    seed = int(config.get("data_seed", 0) if seed is None else seed)

    if kind == "arfima":
        return generate_arfima(ArfimaSpec.from_json(dataset), _length(dataset), seed)
    if kind == "network-process":
        return generate_network_process(ProcessSpec.from_json(dataset), _length(dataset), seed)
    if kind == "csv":
        if "path" not in dataset:
            raise ConfigError("csv dataset needs a 'path'")
        return read_series_csv(Path(dataset["path"]), dataset.get("columns"))
    raise ConfigError(f"unknown dataset type '{kind}' (expected one of {', '.join(DATASET_TYPES)})")


def _length(dataset: dict) -> int:
    if "n" not in dataset:
        raise ConfigError("generated datasets need a length 'n'")
    return int(dataset["n"])


def model_label(entry: dict, kind_counts: dict[str, int]) -> str:
    """Explicit label, else the kind, else kind-K<K> when a kind repeats (K sweeps)."""
    if entry.get("label"):
        return entry["label"]
    if kind_counts[entry["kind"]] > 1 and entry["kind"] in MEMORY_KINDS:
        return f"{entry['kind']}-K{entry.get('K', 100)}"
    return entry["kind"]


@dataclass(frozen=True)
class ExperimentConfig:
    """The training side of an expanded config."""

    models: tuple[ModelSpec, ...]
    splits: Splits
    rule: StoppingRule
    optimizer: OptimizerConfig
    seeds: tuple[int, ...]
    scale_inputs: bool
    baseline: Optional[str]
    digest: str

    @classmethod
    def from_config(cls, config: dict) -> "ExperimentConfig":
        entries = config.get("models") or []
        if not entries:
            raise ConfigError("experiment config needs at least one model")
        counts = {}
        for entry in entries:
            if entry.get("kind") not in KINDS:
                raise DomainError(f"unknown model kind '{entry.get('kind')}' (expected one of {', '.join(KINDS)})")
            counts[entry["kind"]] = counts.get(entry["kind"], 0) + 1

        models = []
        for entry in entries:
            model = ModelSpec.from_json({**entry, "label": model_label(entry, counts)})
            if model.q < 1 or model.K < 1:
                raise DomainError(f"{model.name}: q and K must be >= 1")
            models.append(model)
        labels = [m.name for m in models]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"model labels must be unique, got {labels}")

        splits_doc = config.get("splits")
        if not isinstance(splits_doc, dict):
            raise ConfigError("experiment config needs a 'splits' section")
        try:
            splits = Splits(int(splits_doc["n_train"]), int(splits_doc["n_val"]), int(splits_doc["n_test"]))
        except KeyError as e:
            raise ConfigError(f"splits is missing {e}") from e

        seeds = tuple(int(s) for s in config.get("seeds") or ())
        if not seeds:
            raise ConfigError("experiment config needs a non-empty 'seeds' list")
        baseline = config.get("baseline")
        if baseline is not None and baseline not in labels:
            raise ConfigError(f"baseline '{baseline}' is not one of the models {labels}")

        return cls(
            models=tuple(models),
            splits=splits,
            rule=StoppingRule.from_json(config.get("stopping")),
            optimizer=OptimizerConfig.from_json(config.get("optimizer")),
            seeds=seeds,
            scale_inputs=bool(config.get("scale_inputs", False)),
            baseline=baseline,
            digest=config_digest(config),
        )
