"""Shared fixtures; puts src/ on the import path the way the CLI sees it."""

import sys
from pathlib import Path

import numpy as np
import pytest

SRC = Path(__file__).parent.parent / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def output_dir(tmp_path, monkeypatch) -> Path:
    """Point LMRN_OUTPUT_DIR at a temp directory."""
    out = tmp_path / "output"
    monkeypatch.setenv("LMRN_OUTPUT_DIR", str(out))
    monkeypatch.delenv("LMRN_WORKERS", raising=False)
    monkeypatch.delenv("LMRN_DEFAULT_A", raising=False)
    return out
