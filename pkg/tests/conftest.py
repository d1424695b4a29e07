from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return REPO_ROOT / "data" / "corpus"


@pytest.fixture(scope="session")
def properties_dir() -> Path:
    return REPO_ROOT / "data" / "properties"


@pytest.fixture(scope="session")
def repo_root() -> Path:
    return REPO_ROOT
