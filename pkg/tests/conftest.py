from pathlib import Path

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

DATA = Path(__file__).resolve().parents[1] / "src" / "predmarket" / "data"


@pytest.fixture
def data_dir():
    return DATA
