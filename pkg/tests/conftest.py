from __future__ import annotations

import numpy as np
import pytest

from prodtax.corpus import Dataset, Product
from prodtax.features import EmbeddingTable
from prodtax.synthetic import make_corpus

from helpers import CATALOG_ROWS


@pytest.fixture
def catalog_products() -> list[Product]:
    return [Product(str(i), t, c, s) for i, (t, c, s) in enumerate(CATALOG_ROWS)]


@pytest.fixture
def catalog_csv(tmp_path):
    path = tmp_path / "catalog.csv"
    lines = ["title,category,subcategory"] + [f'"{t}","{c}",{s}' for t, c, s in CATALOG_ROWS]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def keyword_corpus():
    """Eight products, one distinct keyword per subcategory, 2 categories."""
    subs = {"alpha": "K1", "bravo": "K1", "charlie": "K1", "delta": "K1",
            "echo": "K2", "foxtrot": "K2", "golf": "K2", "hotel": "K2"}
    products = [Product(str(i), f"{kw} pack", cat, f"S-{kw}") for i, (kw, cat) in enumerate(subs.items())]
    return Dataset.from_products(products)


@pytest.fixture(scope="session")
def small_synthetic():
    return make_corpus(n_categories=3, subcategories_per_category=2, titles_per_subcategory=20,
                       embedding_dim=8, bilingual=True, seed=3)


@pytest.fixture
def tiny_table() -> EmbeddingTable:
    rng = np.random.default_rng(0)
    words = ("a", "b", "c", "d", "e", "f")
    return EmbeddingTable(words, rng.normal(size=(len(words), 4)))


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  criterion {number}: {detail}")


@pytest.fixture
def acceptance():
    return record_acceptance


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
