"""Model specifications and the glue that trains either model family on a Dataset."""

from __future__ import annotations

import dataclasses
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .base import Prediction
from .corpus import Dataset, Product, Taxonomy
from .errors import ConfigError
from .features import EmbeddingTable, Vocabulary, embed_title_weighted, fit_tfidf, tokenize
from .linear import LinearModel, train_linear_ovr
from .neural import ClassifierNetwork, EncoderConfig, TrainConfig, TrainingLog, build_network, train_network
from .neural.masking import softmax

__all__ = ["FAMILIES", "LinearClassifier", "ModelSpec", "title_features", "train_linear_classifier"]

FAMILIES = ("linear", "neural")


@dataclass(eq=False)
class LinearClassifier:
    """Two independent one-vs-rest models over TF-IDF weighted title vectors.

    With ``bilingual`` the feature vector is the concatenation of the
    primary-title and secondary-title vectors.
    """

    taxonomy: Taxonomy
    category_model: LinearModel
    subcategory_model: LinearModel
    vocabularies: dict[str, Vocabulary]
    tables: dict[str, EmbeddingTable]
    locale: str = "turkish"
    secondary_locale: str = "generic"

    family = "linear"

    @property
    def bilingual(self) -> bool:
        return "secondary" in self.vocabularies

    def features(self, products: Sequence[Product]) -> np.ndarray:
        return title_features(products, self.vocabularies, self.tables, self.locale, self.secondary_locale)

    def predict(self, products: Sequence[Product]) -> list[Prediction]:
        if not products:
            return []
        X = self.features(products)
        cat_scores = self.category_model.decision_function(X)
        sub_scores = self.subcategory_model.decision_function(X)
        cats = np.argmax(cat_scores, axis=1)
        subs = np.argmax(sub_scores, axis=1)
        conf = softmax(sub_scores)[np.arange(len(subs)), subs]
        return [
            Prediction(self.category_model.labels[c], self.subcategory_model.labels[s], float(q))
            for c, s, q in zip(cats, subs, conf)
        ]


def title_features(
    products: Sequence[Product],
    vocabularies: Mapping[str, Vocabulary],
    tables: Mapping[str, EmbeddingTable],
    locale: str = "turkish",
    secondary_locale: str = "generic",
) -> np.ndarray:
    blocks = []
    for source in ("primary", "secondary"):
        if source not in vocabularies:
            continue
        vocab, table = vocabularies[source], tables[source]
        rows = []
        for p in products:
            if source == "primary":
                toks = tokenize(p.title_primary, locale)
            else:
                toks = tokenize(p.title_secondary or "", secondary_locale)
            rows.append(embed_title_weighted(toks, vocab, table).values)
        blocks.append(np.array(rows).reshape(len(products), table.dimension))
    return np.hstack(blocks)


def train_linear_classifier(
    train: Dataset,
    tables: Mapping[str, EmbeddingTable],
    C: float = 1.0,
    epochs: int = 30,
    seed: int = 0,
    locale: str = "turkish",
    bilingual: bool = False,
) -> LinearClassifier:
    sources = ("primary", "secondary") if bilingual else ("primary",)
    vocabularies = {}
    for source in sources:
        if tables.get(source) is None:
            raise ConfigError(f"the linear model needs a {source} embedding table")
        if source == "primary":
            corpus = [tokenize(p.title_primary, locale) for p in train]
        else:
            corpus = [tokenize(p.title_secondary or "", "generic") for p in train]
        vocabularies[source] = fit_tfidf(corpus)
    tables = {s: tables[s] for s in sources}
    X = title_features(train.products, vocabularies, tables, locale)
    tax = train.taxonomy
    cat_labels = [tax.categories[tax.category_index(p.category)] for p in train]
    sub_labels = [tax.subcategories[tax.subcategory_index(p.subcategory)] for p in train]
    return LinearClassifier(
        taxonomy=tax,
        category_model=train_linear_ovr(X, cat_labels, C=C, epochs=epochs, seed=seed),
        subcategory_model=train_linear_ovr(X, sub_labels, C=C, epochs=epochs, seed=seed + 1),
        vocabularies=vocabularies,
        tables=tables,
        locale=locale,
    )


@dataclass(frozen=True)
class ModelSpec:
    """Everything needed to train one model from a training/validation pair."""

    family: str = "neural"
    encoder: EncoderConfig = EncoderConfig()
    masking: bool = True
    independent_heads: bool = False
    train: TrainConfig = TrainConfig()
    dense_size: int = 100
    C: float = 1.0
    linear_epochs: int = 30
    locale: str = "turkish"
    bilingual: bool = False
    embedding_dim: int = 50
    freeze_embeddings: bool = False
    tables: Mapping[str, EmbeddingTable | None] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}")
        if self.family == "linear" and self.masking:
            raise ConfigError("masking is only available for the neural family")

    def fit(self, train: Dataset, val: Dataset | None = None, seed: int | None = None
            ) -> tuple[LinearClassifier | ClassifierNetwork, TrainingLog | None]:
        seed = self.train.seed if seed is None else seed
        if self.family == "linear":
            model = train_linear_classifier(
                train, self.tables, C=self.C, epochs=self.linear_epochs, seed=seed,
                locale=self.locale, bilingual=self.bilingual,
            )
            return model, None
        if val is None or len(val) == 0:
            raise ConfigError("neural training needs a non-empty validation set for early stopping")
        net = build_network(
            train.taxonomy,
            train.products,
            encoder=self.encoder,
            tables=self.tables,
            masking=self.masking,
            seed=seed,
            dense_size=self.dense_size,
            independent_heads=self.independent_heads,
            embedding_dim=self.embedding_dim,
            freeze_embeddings=self.freeze_embeddings,
            locale=self.locale,
        )
        return train_network(net, train, val, dataclasses.replace(self.train, seed=seed))
