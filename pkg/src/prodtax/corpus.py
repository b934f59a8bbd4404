"""Dataset ingestion, taxonomy construction, filtering, splitting and statistics."""

from __future__ import annotations

import csv
import logging
from collections import Counter, defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import RowError, SchemaError, TaxonomyError
from .features import locale_lower, tokenize

__all__ = [
    "CorpusStats",
    "Dataset",
    "Product",
    "Retention",
    "Schema",
    "Taxonomy",
    "build_taxonomy",
    "canonical_label",
    "corpus_stats",
    "filter_to_taxonomy",
    "load_dataset",
    "load_products",
    "retention",
    "stratified_kfold",
    "train_val_split",
    "write_taxonomy",
]

log = logging.getLogger(__name__)

# label comparisons ignore surrounding whitespace and case
LABEL_LOCALE = "turkish"


def canonical_label(label: str) -> str:
    return locale_lower(label.strip(), LABEL_LOCALE)


@dataclass(frozen=True)
class Product:
    id: str
    title_primary: str
    category: str
    subcategory: str
    title_secondary: str | None = None
    source: str = ""

    def __post_init__(self) -> None:
        if not self.title_primary or not self.title_primary.strip():
            raise ValueError("title_primary must be non-empty")
        if not self.category.strip() or not self.subcategory.strip():
            raise ValueError("category and subcategory must be non-empty")

    @property
    def content_key(self) -> tuple[str, str, str, str]:
        """Ordering key that ignores the row position of the product."""
        return (
            self.title_primary,
            self.title_secondary or "",
            canonical_label(self.category),
            canonical_label(self.subcategory),
        )


@dataclass(frozen=True)
class Taxonomy:
    """Two-level label tree.

    ``categories`` and ``subcategories`` hold display labels ordered by their
    canonical form; ``parent[s]`` is the category index of subcategory ``s``.
    Lookups accept any spelling that canonicalizes to a known label.
    """

    categories: tuple[str, ...]
    subcategories: tuple[str, ...]
    parent: tuple[int, ...]
    _cat_index: dict[str, int] = field(init=False, repr=False, compare=False)
    _sub_index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.parent) != len(self.subcategories):
            raise TaxonomyError("parent map must cover every subcategory")
        cat_index = {canonical_label(c): i for i, c in enumerate(self.categories)}
        sub_index = {canonical_label(s): i for i, s in enumerate(self.subcategories)}
        if len(cat_index) != len(self.categories) or len(sub_index) != len(self.subcategories):
            raise TaxonomyError("duplicate labels in taxonomy")
        if any(not 0 <= p < len(self.categories) for p in self.parent):
            raise TaxonomyError("parent index out of range")
        object.__setattr__(self, "_cat_index", cat_index)
        object.__setattr__(self, "_sub_index", sub_index)

    @property
    def n_categories(self) -> int:
        return len(self.categories)

    @property
    def n_subcategories(self) -> int:
        return len(self.subcategories)

    def category_index(self, label: str) -> int:
        try:
            return self._cat_index[canonical_label(label)]
        except KeyError:
            raise KeyError(f"unknown category {label!r}") from None

    def subcategory_index(self, label: str) -> int:
        try:
            return self._sub_index[canonical_label(label)]
        except KeyError:
            raise KeyError(f"unknown subcategory {label!r}") from None

    def has_category(self, label: str) -> bool:
        return canonical_label(label) in self._cat_index

    def has_subcategory(self, label: str) -> bool:
        return canonical_label(label) in self._sub_index

    def parent_of(self, subcategory: str) -> str:
        return self.categories[self.parent[self.subcategory_index(subcategory)]]

    def consistent(self, category: str, subcategory: str) -> bool:
        if not (self.has_category(category) and self.has_subcategory(subcategory)):
            return False
        return self.parent[self.subcategory_index(subcategory)] == self.category_index(category)

    def to_dict(self) -> dict:
        return {
            "categories": list(self.categories),
            "subcategories": list(self.subcategories),
            "parent": list(self.parent),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> Taxonomy:
        return cls(
            categories=tuple(data["categories"]),
            subcategories=tuple(data["subcategories"]),
            parent=tuple(int(p) for p in data["parent"]),
        )


EMPTY_TAXONOMY = Taxonomy((), (), ())


@dataclass(frozen=True)
class Dataset:
    products: tuple[Product, ...]
    taxonomy: Taxonomy

    def __post_init__(self) -> None:
        object.__setattr__(self, "products", tuple(self.products))
        for p in self.products:
            if not self.taxonomy.consistent(p.category, p.subcategory):
                raise TaxonomyError(
                    f"product {p.id}: ({p.category}, {p.subcategory}) does not fit the taxonomy"
                )

    def __len__(self) -> int:
        return len(self.products)

    def __iter__(self):
        return iter(self.products)

    @classmethod
    def from_products(cls, products: Iterable[Product]) -> Dataset:
        products = tuple(products)
        return cls(products, build_taxonomy(products))

    def subset(self, indices: Iterable[int]) -> Dataset:
        """Products at ``indices`` (in the given order) under the same taxonomy."""
        return Dataset(tuple(self.products[i] for i in indices), self.taxonomy)

    def category_indices(self) -> np.ndarray:
        return np.array([self.taxonomy.category_index(p.category) for p in self.products], dtype=np.int64)

    def subcategory_indices(self) -> np.ndarray:
        return np.array(
            [self.taxonomy.subcategory_index(p.subcategory) for p in self.products], dtype=np.int64
        )


@dataclass(frozen=True)
class Schema:
    """Maps the logical product fields onto header names of the input file."""

    title: str = "title"
    category: str = "category"
    subcategory: str = "subcategory"
    title_secondary: str | None = None


def load_products(
    path: str | Path,
    schema: Schema = Schema(),
    delimiter: str = ",",
    namespace_subcategories: bool = False,
    source: str | None = None,
) -> list[Product]:
    """Read one Product per data row, failing on the first malformed row.

    Row numbers in errors are physical line numbers (the header is line 1).
    With ``namespace_subcategories`` every subcategory label is prefixed by
    its category, which makes label reuse across categories legal.
    """
    path = Path(path)
    source = path.stem if source is None else source
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path} is empty (no header row)") from None
        wanted = {"title": schema.title, "category": schema.category, "subcategory": schema.subcategory}
        if schema.title_secondary:
            wanted["title_secondary"] = schema.title_secondary
        cols = {}
        for logical, name in wanted.items():
            if name not in header:
                raise SchemaError(f"column {name!r} (for {logical}) not found in header of {path}")
            cols[logical] = header.index(name)

        products = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue

            def cell(logical: str) -> str:
                j = cols[logical]
                return row[j].strip() if j < len(row) else ""

            title, cat, sub = cell("title"), cell("category"), cell("subcategory")
            if not title:
                raise RowError(line, "empty title")
            if not cat:
                raise RowError(line, "empty category")
            if not sub:
                raise RowError(line, "empty subcategory")
            title2 = cell("title_secondary") if schema.title_secondary else None
            if namespace_subcategories:
                sub = f"{cat}/{sub}"
            products.append(
                Product(
                    id=str(len(products)),
                    title_primary=title,
                    title_secondary=title2 or None,
                    category=cat,
                    subcategory=sub,
                    source=source,
                )
            )
    return products


def load_dataset(
    path: str | Path,
    schema: Schema = Schema(),
    delimiter: str = ",",
    namespace_subcategories: bool = False,
) -> Dataset:
    products = load_products(path, schema, delimiter, namespace_subcategories)
    return Dataset(tuple(products), build_taxonomy(products))


def build_taxonomy(products: Iterable[Product] | Dataset) -> Taxonomy:
    """Derive the label tree from the observed (category, subcategory) pairs."""
    cat_display: dict[str, str] = {}
    sub_display: dict[str, str] = {}
    parents: dict[str, set[str]] = defaultdict(set)
    for p in products:
        c, s = canonical_label(p.category), canonical_label(p.subcategory)
        cat_display.setdefault(c, p.category.strip())
        sub_display.setdefault(s, p.subcategory.strip())
        parents[s].add(c)
    if not cat_display:
        raise TaxonomyError("cannot build a taxonomy from an empty label space")
    conflicts = {s: sorted(cs) for s, cs in parents.items() if len(cs) > 1}
    if conflicts:
        detail = "; ".join(
            f"{sub_display[s]!r} under {', '.join(repr(cat_display[c]) for c in cs)}"
            for s, cs in sorted(conflicts.items())
        )
        raise TaxonomyError(f"subcategories with several parent categories: {detail}")
    cats = sorted(cat_display)
    subs = sorted(sub_display)
    cat_pos = {c: i for i, c in enumerate(cats)}
    return Taxonomy(
        categories=tuple(cat_display[c] for c in cats),
        subcategories=tuple(sub_display[s] for s in subs),
        parent=tuple(cat_pos[next(iter(parents[s]))] for s in subs),
    )


def write_taxonomy(taxonomy: Taxonomy, path: str | Path, delimiter: str = ",") -> None:
    """Two-column (subcategory, category) export, one row per subcategory."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow(["subcategory", "category"])
        for s, p in zip(taxonomy.subcategories, taxonomy.parent):
            w.writerow([s, taxonomy.categories[p]])


@dataclass(frozen=True)
class Retention:
    products_before: int
    categories_before: int
    subcategories_before: int
    products_after: int
    categories_after: int
    subcategories_after: int


def _label_counts(products: Sequence[Product]) -> tuple[int, int, int]:
    cats = {canonical_label(p.category) for p in products}
    subs = {canonical_label(p.subcategory) for p in products}
    return len(products), len(cats), len(subs)


def retention(before: Sequence[Product] | Dataset, after: Sequence[Product] | Dataset) -> Retention:
    b = _label_counts(tuple(before))
    a = _label_counts(tuple(after))
    return Retention(*b, *a)


def filter_to_taxonomy(dataset: Dataset | Sequence[Product], reference: Taxonomy) -> Dataset:
    """Keep products whose labels exist in ``reference`` with a matching parent.

    The result's taxonomy is ``reference`` restricted to the labels that
    survive (an empty taxonomy when nothing survives).
    """
    products = tuple(dataset)
    kept = tuple(p for p in products if reference.consistent(p.category, p.subcategory))
    counts = retention(products, kept)
    log.info(
        "filter_to_taxonomy: products %d -> %d, categories %d -> %d, subcategories %d -> %d",
        counts.products_before, counts.products_after,
        counts.categories_before, counts.categories_after,
        counts.subcategories_before, counts.subcategories_after,
    )
    if not kept:
        return Dataset((), EMPTY_TAXONOMY)
    sub_keep = sorted({reference.subcategory_index(p.subcategory) for p in kept})
    cat_keep = sorted({reference.parent[s] for s in sub_keep})
    cat_pos = {c: i for i, c in enumerate(cat_keep)}
    restricted = Taxonomy(
        categories=tuple(reference.categories[c] for c in cat_keep),
        subcategories=tuple(reference.subcategories[s] for s in sub_keep),
        parent=tuple(cat_pos[reference.parent[s]] for s in sub_keep),
    )
    return Dataset(kept, restricted)


def _stratified_groups(dataset: Dataset, seed: int) -> list[np.ndarray]:
    """Per-subcategory index groups, each in seeded random order.

    Groups are ordered by label and members start from content order, so the
    outcome depends on product content only, never on row positions.
    """
    by_label: dict[str, list[int]] = defaultdict(list)
    for i, p in enumerate(dataset.products):
        by_label[canonical_label(p.subcategory)].append(i)
    rng = np.random.default_rng(seed)
    groups = []
    for label in sorted(by_label):
        members = sorted(by_label[label], key=lambda i: dataset.products[i].content_key)
        groups.append(np.array(members, dtype=np.int64)[rng.permutation(len(members))])
    return groups


def _content_order(dataset: Dataset, indices: Iterable[int]) -> np.ndarray:
    idx = sorted(indices, key=lambda i: (dataset.products[i].content_key, i))
    return np.array(idx, dtype=np.int64)


def stratified_kfold(dataset: Dataset, k: int = 5, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split indices into ``k`` (train, test) partitions stratified by subcategory.

    Members of each class are dealt to folds round-robin, continuing from
    where the previous class stopped, so per-class fold counts differ by at
    most one and classes smaller than ``k`` land in distinct folds. Index
    arrays are returned in content order.
    """
    n = len(dataset)
    if k < 2:
        raise ValueError("k must be at least 2")
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    if k > n:
        raise ValueError(f"k={k} exceeds the dataset size {n}")
    fold_of = np.empty(n, dtype=np.int64)
    cursor = 0
    for group in _stratified_groups(dataset, seed):
        for j, i in enumerate(group):
            fold_of[i] = (cursor + j) % k
        cursor = (cursor + len(group)) % k
    folds = []
    for f in range(k):
        test = _content_order(dataset, np.flatnonzero(fold_of == f))
        train = _content_order(dataset, np.flatnonzero(fold_of != f))
        folds.append((train, test))
    return folds


def train_val_split(dataset: Dataset, train_fraction: float = 0.9, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified split into training and validation parts.

    Each class contributes ``floor(n_c * (1 - f))`` validation items; the
    remaining validation slots go to the classes with the largest fractional
    remainders (ties resolved in seeded order), which spreads small classes
    over the validation part one item at a time.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n = len(dataset)
    n_val = int(round(n * (1.0 - train_fraction)))
    if n_val <= 0 or n_val >= n:
        raise ValueError(
            f"train_fraction={train_fraction} on {n} items leaves an empty "
            f"{'validation' if n_val <= 0 else 'training'} part"
        )
    groups = _stratified_groups(dataset, seed)
    want = [len(g) * (1.0 - train_fraction) for g in groups]
    take = [int(np.floor(w)) for w in want]
    rng = np.random.default_rng([seed, 1])
    tiebreak = rng.permutation(len(groups))
    order = sorted(range(len(groups)), key=lambda g: (-(want[g] - take[g]), tiebreak[g]))
    for g in order[: n_val - sum(take)]:
        take[g] += 1
    val_idx = [i for g, t in zip(groups, take) for i in g[:t]]
    train_idx = [i for g, t in zip(groups, take) for i in g[t:]]
    return (
        dataset.subset(_content_order(dataset, train_idx)),
        dataset.subset(_content_order(dataset, val_idx)),
    )


@dataclass(frozen=True)
class CorpusStats:
    title_count: int
    mean_title_length: float
    length_quantiles: dict[str, float]
    ngram_counts: dict[tuple[str, ...], int]
    lengths: tuple[int, ...] = ()

    def top_ngrams(self, limit: int | None = None) -> list[tuple[tuple[str, ...], int]]:
        items = sorted(self.ngram_counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return items if limit is None else items[:limit]


def corpus_stats(
    dataset: Dataset | Sequence[Product], n: int = 2, min_count: int = 1, locale: str = "turkish"
) -> CorpusStats:
    """Title length distribution (in tokens) and frequent n-grams."""
    if n < 1:
        raise ValueError("n-gram order must be >= 1")
    lengths = []
    counts: Counter[tuple[str, ...]] = Counter()
    for p in dataset:
        toks = tokenize(p.title_primary, locale)
        lengths.append(len(toks))
        counts.update(tuple(toks[i : i + n]) for i in range(len(toks) - n + 1))
    if lengths:
        arr = np.asarray(lengths, dtype=np.float64)
        q = np.percentile(arr, [0, 25, 50, 75, 100])
        quantiles = dict(zip(("min", "25%", "50%", "75%", "max"), (float(v) for v in q)))
        mean = float(arr.mean())
    else:
        quantiles = dict.fromkeys(("min", "25%", "50%", "75%", "max"), 0.0)
        mean = 0.0
    return CorpusStats(
        title_count=len(lengths),
        mean_title_length=mean,
        length_quantiles=quantiles,
        ngram_counts={g: c for g, c in counts.items() if c >= min_count},
        lengths=tuple(lengths),
    )
