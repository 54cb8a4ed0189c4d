import json
import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from speechcloak.encoder import SurrogateEncoder

import scenarios


@pytest.fixture(scope="session")
def data_root() -> Path:
    root = os.environ.get("SPEECHCLOAK_FIXTURE_ROOT")
    return Path(root) if root else Path(__file__).parent / "data" / "v1"


@pytest.fixture(scope="session")
def encoder() -> SurrogateEncoder:
    return SurrogateEncoder(seed=scenarios.ENCODER_SEED)


@pytest.fixture(scope="session")
def smoke_run(encoder):
    return scenarios.run_smoke(encoder)


@pytest.fixture(scope="session")
def defense_run(encoder):
    return scenarios.run_defense(encoder)


@pytest.fixture(scope="session")
def refine_run(defense_run, encoder):
    return scenarios.run_refine_scenario(defense_run, encoder)


@pytest.fixture(scope="session")
def frozen(data_root):
    path = data_root / "regression.json"
    if not path.exists():
        pytest.fail(
            "missing regression fixture; run scripts/make_regression_fixtures.py"
        )
    return json.loads(path.read_text())
