from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return CORPUS


def corpus_text(rel: str) -> str:
    return (CORPUS / rel).read_text()


def deterministic_programs():
    return sorted((CORPUS / "deterministic").glob("*.lua"))


def safe_programs():
    return sorted((CORPUS / "safe").glob("*.lua"))
