import os

import pytest

from config import settings
from euler_model_system import EulerModelSystem
from models import ModelConfig, SamplingMode

RUN_SLOW = os.getenv("EULER_RUN_SLOW") == "1"


def pytest_collection_modifyitems(config, items):
    if RUN_SLOW:
        return
    skip = pytest.mark.skip(reason="set EULER_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def quiet_progress(monkeypatch):
    monkeypatch.setattr(settings, "show_progress", False)


@pytest.fixture
def system(tmp_path):
    return EulerModelSystem(str(tmp_path / "cache"))


@pytest.fixture
def exact_t2():
    return ModelConfig(t=2, alpha=0.5, seed=1234)


@pytest.fixture
def surrogate_t2():
    return ModelConfig(t=2, alpha=0.5, mode=SamplingMode.SURROGATE, seed=1234)
