import pathlib

import pytest

from kbsearch.assets import load_prompt_assets
from kbsearch.kb import load_kb

DATA_DIR = pathlib.Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def toy_kb_path() -> str:
    return str(DATA_DIR / "toy_kb.jsonl")


@pytest.fixture(scope="session")
def toy_kb(toy_kb_path):
    return load_kb(toy_kb_path)


@pytest.fixture(scope="session")
def prompt_assets():
    return load_prompt_assets()
