"""Accuracy, per-class precision/recall/F1, weighted-average F1 and the ranking metric."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .base import Prediction
from .corpus import Product, Taxonomy, canonical_label

__all__ = [
    "ClassificationReport",
    "MetricsReport",
    "classification_metrics",
    "evaluate_predictions",
    "rank_metric",
]


@dataclass(frozen=True)
class ClassificationReport:
    labels: tuple[str, ...]
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    support: tuple[int, ...]
    true_positive: tuple[int, ...]
    false_positive: tuple[int, ...]
    false_negative: tuple[int, ...]
    accuracy: float
    waf1: float

    @property
    def total(self) -> int:
        return sum(self.support)

    def per_class(self) -> dict[str, dict[str, float]]:
        return {
            lab: {"precision": p, "recall": r, "f1": f, "support": s}
            for lab, p, r, f, s in zip(self.labels, self.precision, self.recall, self.f1, self.support)
        }


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def classification_metrics(gold: Sequence[str], predicted: Sequence[str]) -> ClassificationReport:
    """Per-class P/R/F1, accuracy and support-weighted F1 (WAF1).

    Undefined ratios (zero denominators) count as 0. Classes that only occur
    among the predictions get support 0 and so do not move WAF1.
    """
    if len(gold) != len(predicted):
        raise ValueError(f"gold has {len(gold)} labels but predicted has {len(predicted)}")
    if not gold:
        raise ValueError("cannot score an empty label list")
    labels = tuple(sorted(set(gold) | set(predicted)))
    pos = {lab: i for i, lab in enumerate(labels)}
    g = np.fromiter((pos[x] for x in gold), dtype=np.int64, count=len(gold))
    p = np.fromiter((pos[x] for x in predicted), dtype=np.int64, count=len(predicted))
    K = len(labels)
    hit = g == p
    tp = np.bincount(g[hit], minlength=K)
    support = np.bincount(g, minlength=K)
    pred_count = np.bincount(p, minlength=K)
    fp = pred_count - tp
    fn = support - tp
    prec, rec, f1 = [], [], []
    for k in range(K):
        pk = _ratio(int(tp[k]), int(tp[k] + fp[k]))
        rk = _ratio(int(tp[k]), int(tp[k] + fn[k]))
        prec.append(pk)
        rec.append(rk)
        f1.append(2 * pk * rk / (pk + rk) if pk + rk > 0 else 0.0)
    n = len(gold)
    waf1 = sum(int(s) * f for s, f in zip(support, f1)) / n
    return ClassificationReport(
        labels=labels,
        precision=tuple(prec),
        recall=tuple(rec),
        f1=tuple(f1),
        support=tuple(int(s) for s in support),
        true_positive=tuple(int(x) for x in tp),
        false_positive=tuple(int(x) for x in fp),
        false_negative=tuple(int(x) for x in fn),
        accuracy=int(hit.sum()) / n,
        waf1=waf1,
    )


def rank_metric(waf1_cat: float, waf1_sub: float) -> float:
    """Mean of the category-level and subcategory-level WAF1."""
    return (waf1_cat + waf1_sub) / 2


@dataclass(frozen=True)
class MetricsReport:
    accuracy_cat: float
    accuracy_sub: float
    waf1_cat: float
    waf1_sub: float
    rank_metric: float
    hierarchy_consistency_rate: float
    n: int
    category: ClassificationReport | None = None
    subcategory: ClassificationReport | None = None

    def summary(self) -> dict[str, float]:
        return {
            "accuracy_cat": self.accuracy_cat,
            "accuracy_sub": self.accuracy_sub,
            "waf1_cat": self.waf1_cat,
            "waf1_sub": self.waf1_sub,
            "rank_metric": self.rank_metric,
            "consistency": self.hierarchy_consistency_rate,
        }


def evaluate_predictions(
    products: Sequence[Product], predictions: Sequence[Prediction], taxonomy: Taxonomy
) -> MetricsReport:
    """Score predictions against gold labels at both levels.

    Labels are compared in canonical form. Consistency is the fraction of
    predictions whose subcategory belongs to the predicted category in
    ``taxonomy`` (the model's training taxonomy).
    """
    if len(products) != len(predictions):
        raise ValueError("products and predictions differ in length")
    cat = classification_metrics(
        [canonical_label(p.category) for p in products], [canonical_label(q.category) for q in predictions]
    )
    sub = classification_metrics(
        [canonical_label(p.subcategory) for p in products], [canonical_label(q.subcategory) for q in predictions]
    )
    consistent = sum(taxonomy.consistent(q.category, q.subcategory) for q in predictions)
    return MetricsReport(
        accuracy_cat=cat.accuracy,
        accuracy_sub=sub.accuracy,
        waf1_cat=cat.waf1,
        waf1_sub=sub.waf1,
        rank_metric=rank_metric(cat.waf1, sub.waf1),
        hierarchy_consistency_rate=consistent / len(predictions),
        n=len(products),
        category=cat,
        subcategory=sub,
    )
