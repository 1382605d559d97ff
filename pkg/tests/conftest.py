import numpy as np
import pytest

from varprog.core.config import get_settings
from varprog.schemas.models import QmrModel

VARPROG_ENV = [
    "VARPROG_OUT_DIR",
    "VARPROG_LOG_LEVEL",
    "VARPROG_JOBS",
    "VARPROG_RECORD_WALLCLOCK",
    "VARPROG_ORACLE_MAX_TRACES",
    "VARPROG_SIMPLEX_FLOOR",
]


@pytest.fixture(autouse=True)
def clean_settings(monkeypatch):
    """Isolate every test from the caller's VARPROG_* environment."""
    for name in VARPROG_ENV:
        monkeypatch.delenv(name, raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def small_qmr_model() -> QmrModel:
    """Five diseases, four leaky findings; small enough to enumerate."""
    return QmrModel(
        prior=[0.1, 0.2, 0.3, 0.15, 0.25],
        leak=[0.05, 0.05, 0.1, 0.02],
        weights=[
            [0.8, 0.0, 0.3, 0.0, 0.5],
            [0.0, 0.6, 0.0, 0.4, 0.0],
            [0.5, 0.5, 0.0, 0.0, 0.7],
            [0.0, 0.2, 0.9, 0.3, 0.0],
        ],
        observations=[1, 0, 1, 1],
    )
