import sys
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parents[1]

# Make tests importable both from an installed package and a plain checkout.
sys.path.insert(0, str(REPO_ROOT / "src"))
sys.path.insert(0, str(Path(__file__).resolve().parent))

import pytest


@pytest.fixture(scope="session")
def scenario_dir() -> Path:
    return REPO_ROOT / "scenarios"
