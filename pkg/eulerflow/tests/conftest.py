# eulerflow/tests/conftest.py
import json
import sys
from pathlib import Path

import numpy as np
import pytest

# Make repo root importable so "eulerflow" package resolves
REPO_ROOT = Path(__file__).resolve().parents[2]
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from eulerflow.app.models import Config, GridSpec  # noqa: E402

CONFIG_DIR = REPO_ROOT / "eulerflow" / "configs"


# ─────────────────────────────
# Configurations
# ─────────────────────────────
@pytest.fixture
def config_path():
    def _path(name: str) -> Path:
        return CONFIG_DIR / f"{name}.json"

    return _path


@pytest.fixture
def load_config(config_path):
    def _load(name: str) -> Config:
        return Config.model_validate_json(config_path(name).read_text(encoding="utf-8"))

    return _load


@pytest.fixture
def write_config(tmp_path):
    """Dump a config dict to a temporary JSON file and return its path."""

    def _write(data: dict, name: str = "config.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return _write


# ─────────────────────────────
# Grids and sample points
# ─────────────────────────────
@pytest.fixture
def small_grid():
    return GridSpec(z1=(-1.0, 1.0), z2=(-1.0, 1.0), n1=9, n2=9, t=(0.0, 2.0), nt=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
