"""Seeded synthetic product catalogs with a known two-level taxonomy.

Every subcategory owns a few discriminative keywords; titles mix one or two
of them with shared noise words. A small share of titles also carries a
"confuser" keyword borrowed from a subcategory of another category, which
makes unconstrained models occasionally predict an inconsistent pair.

In the bilingual variant each subcategory's keywords are split between the
two languages and a title keyword is rendered in only one of them, so each
language alone sees roughly half of the discriminative signal.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Dataset, Product
from .features import EmbeddingTable, save_embeddings

__all__ = ["SyntheticCorpus", "make_corpus", "write_corpus"]

_CONSONANTS = "bcdfgklmnprstvyz"
_VOWELS = "aeiou"


def _pseudo_words(rng: np.random.Generator, count: int, taken: set[str], syllables: int = 3) -> list[str]:
    words = []
    while len(words) < count:
        w = "".join(rng.choice(list(_CONSONANTS)) + rng.choice(list(_VOWELS)) for _ in range(syllables))
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


@dataclass
class SyntheticCorpus:
    dataset: Dataset
    tables: dict[str, EmbeddingTable]
    keywords: dict[str, dict[str, list[str]]]


def make_corpus(
    n_categories: int = 6,
    subcategories_per_category: int = 3,
    titles_per_subcategory: int = 200,
    keywords_per_subcategory: tuple[int, int] = (2, 4),
    n_noise_words: int = 40,
    noise_words_per_title: tuple[int, int] = (2, 5),
    confuser_rate: float = 0.04,
    bilingual: bool = False,
    embedding_dim: int = 32,
    seed: int = 0,
) -> SyntheticCorpus:
    rng = np.random.default_rng(seed)
    languages = ("primary", "secondary") if bilingual else ("primary",)
    taken: set[str] = set()
    noise = {lang: _pseudo_words(rng, n_noise_words, taken, syllables=2) for lang in languages}
    labels = []
    keywords: dict[str, dict[str, list[str]]] = {}
    for c in range(n_categories):
        for s in range(subcategories_per_category):
            cat, sub = f"Category {c + 1}", f"Sub {c + 1}.{s + 1}"
            labels.append((cat, sub))
            lo, hi = keywords_per_subcategory
            k = int(rng.integers(lo, hi + 1))
            if bilingual:
                k = max(k, 2)
                k_primary = k // 2 + int(rng.integers(0, k % 2 + 1))
                keywords[sub] = {
                    "primary": _pseudo_words(rng, k_primary, taken),
                    "secondary": _pseudo_words(rng, k - k_primary, taken),
                }
            else:
                keywords[sub] = {"primary": _pseudo_words(rng, k, taken)}

    products = []
    for cat, sub in labels:
        foreign = [s for c, s in labels if c != cat]
        pool = [(lang, w) for lang in languages for w in keywords[sub][lang]]
        for _ in range(titles_per_subcategory):
            words: dict[str, list[str]] = {lang: [] for lang in languages}
            for j in rng.choice(len(pool), size=min(len(pool), int(rng.integers(1, 3))), replace=False):
                lang, w = pool[j]
                words[lang].append(w)
            if foreign and rng.random() < confuser_rate:
                other = foreign[int(rng.integers(len(foreign)))]
                other_pool = [(lang, w) for lang in languages for w in keywords[other][lang]]
                lang, w = other_pool[int(rng.integers(len(other_pool)))]
                words[lang].append(w)
            lo, hi = noise_words_per_title
            for lang in languages:
                n_noise = int(rng.integers(lo, hi + 1))
                words[lang].extend(rng.choice(noise[lang], size=n_noise).tolist())
                rng.shuffle(words[lang])
            products.append(
                Product(
                    id=str(len(products)),
                    title_primary=" ".join(words["primary"]),
                    title_secondary=" ".join(words["secondary"]) if bilingual else None,
                    category=cat,
                    subcategory=sub,
                    source="synthetic",
                )
            )

    tables = {}
    for lang in languages:
        vocab = sorted(set(noise[lang]) | {w for kw in keywords.values() for w in kw[lang]})
        tables[lang] = EmbeddingTable(tuple(vocab), rng.normal(0.0, 1.0, size=(len(vocab), embedding_dim)))
    return SyntheticCorpus(Dataset.from_products(products), tables, keywords)


def write_corpus(corpus: SyntheticCorpus, directory: str | Path) -> dict[str, Path]:
    """Write ``products.csv`` and one embedding file per language."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    bilingual = "secondary" in corpus.tables
    paths = {"data": directory / "products.csv"}
    with open(paths["data"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["title", "title_en", "category", "subcategory"] if bilingual else ["title", "category", "subcategory"])
        for p in corpus.dataset.products:
            row = [p.title_primary] + ([p.title_secondary or ""] if bilingual else []) + [p.category, p.subcategory]
            w.writerow(row)
    for lang, table in corpus.tables.items():
        paths[lang] = directory / f"embeddings_{lang}.txt"
        save_embeddings(table, paths[lang])
    return paths
