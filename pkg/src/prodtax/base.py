"""Prediction record and the interface shared by trained classifiers."""

from __future__ import annotations

from collections.abc import Sequence
from typing import NamedTuple, Protocol

from .corpus import Product, Taxonomy


class Prediction(NamedTuple):
    category: str
    subcategory: str
    # probability of the predicted subcategory (softmax of scores for linear models)
    confidence: float


class Classifier(Protocol):
    family: str
    taxonomy: Taxonomy

    def predict(self, products: Sequence[Product]) -> list[Prediction]: ...
