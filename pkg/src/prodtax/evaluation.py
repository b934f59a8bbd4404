"""Cross-validation, cross-retailer evaluation and the misprediction audit."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import statistics
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .base import Classifier
from .corpus import Dataset, Product, Retention, Taxonomy, canonical_label, filter_to_taxonomy, retention
from .corpus import stratified_kfold, train_val_split
from .errors import ProdtaxError, TrainingError
from .metrics import MetricsReport, evaluate_predictions

__all__ = [
    "CROSSVAL_COLUMNS",
    "AuditEntry",
    "CrossvalResult",
    "PlatformRow",
    "audit_rows",
    "cross_platform_eval",
    "derive_seed",
    "evaluate_model",
    "format_mean_std",
    "misprediction_report",
    "render_audit",
    "render_crossval",
    "render_platform_table",
    "run_crossval",
]

log = logging.getLogger(__name__)

CROSSVAL_COLUMNS = (
    ("accuracy_cat", "Acc Cat"),
    ("accuracy_sub", "Acc Sub"),
    ("waf1_cat", "WAF1 Cat"),
    ("waf1_sub", "WAF1 Sub"),
    ("rank_metric", "WAF1 Avg"),
)


class Trainable(Protocol):
    def fit(self, train: Dataset, val: Dataset | None = None, seed: int | None = None) -> tuple[Classifier, object]: ...


def derive_seed(seed: int, index: int) -> int:
    """Independent, reproducible sub-seed for fold ``index``."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def evaluate_model(model: Classifier, dataset: Dataset | Sequence[Product]) -> MetricsReport:
    products = tuple(dataset)
    return evaluate_predictions(products, model.predict(products), model.taxonomy)


@dataclass(frozen=True)
class CrossvalResult:
    folds: tuple[MetricsReport, ...]
    k: int
    seed: int

    def values(self, metric: str) -> list[float]:
        return [getattr(r, metric) for r in self.folds]

    def mean_std(self, metric: str) -> tuple[float, float]:
        """Mean and sample (n-1) standard deviation across folds."""
        vals = self.values(metric)
        return statistics.fmean(vals), (statistics.stdev(vals) if len(vals) > 1 else 0.0)

    def summary(self) -> dict[str, tuple[float, float]]:
        return {m: self.mean_std(m) for m, _ in CROSSVAL_COLUMNS + (("hierarchy_consistency_rate", ""),)}


def run_crossval(
    model_spec: Trainable,
    dataset: Dataset,
    k: int = 5,
    seed: int = 0,
    train_fraction: float = 0.9,
) -> CrossvalResult:
    """Stratified k-fold protocol.

    For every fold the remaining folds are split 90/10 into training and
    validation parts, a model is trained, and it is scored on the held-out
    fold. Fold seeds derive from ``(seed, fold index)``.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    reports = []
    for i, (train_idx, test_idx) in enumerate(stratified_kfold(dataset, k, seed)):
        fold_seed = derive_seed(seed, i)
        try:
            train, val = train_val_split(dataset.subset(train_idx), train_fraction, fold_seed)
            model, _ = model_spec.fit(train, val, fold_seed)
        except ProdtaxError as exc:
            exc.args = (f"fold {i}: {exc}",)
            raise
        except (ValueError, ArithmeticError) as exc:
            raise TrainingError(f"fold {i}: {exc}") from exc
        report = evaluate_model(model, dataset.subset(test_idx))
        log.info("fold %d: rank metric %.4f", i, report.rank_metric)
        reports.append(report)
    return CrossvalResult(tuple(reports), k, seed)


def format_mean_std(mean: float, std: float) -> str:
    """Percent cell in the ``mm.m ± s.s`` convention."""
    return f"{100 * mean:.1f} ± {100 * std:.1f}"


def _aligned(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    lines = ["  ".join(str(h).ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    return "\n".join(lines) + "\n"


def _delimited(header: Sequence[str], rows: Sequence[Sequence[str]], delimiter: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def render_crossval(
    results: Mapping[str, CrossvalResult], delimiter: str | None = None
) -> str:
    """Table with one row per model: accuracy and WAF1 cells, average WAF1 last.

    The average column holds the mean only, the other cells ``mean ± std``.
    """
    header = ["Model"] + [label for _, label in CROSSVAL_COLUMNS]
    rows = []
    for name, res in results.items():
        cells = [name]
        for metric, _ in CROSSVAL_COLUMNS:
            mean, std = res.mean_std(metric)
            cells.append(f"{100 * mean:.1f}" if metric == "rank_metric" else format_mean_std(mean, std))
        rows.append(cells)
    return _delimited(header, rows, delimiter) if delimiter else _aligned(header, rows)


@dataclass(frozen=True)
class PlatformRow:
    name: str
    retention: Retention
    report: MetricsReport | None

    @property
    def empty(self) -> bool:
        return self.report is None


def cross_platform_eval(
    model: Classifier,
    training_taxonomy: Taxonomy,
    external: Mapping[str, Dataset | Sequence[Product]] | Sequence[Dataset],
) -> list[PlatformRow]:
    """Score a trained model on other catalogs after taxonomy filtering.

    Only primary titles are used. A catalog with no product left after
    filtering yields a row with ``report=None``.
    """
    if not isinstance(external, Mapping):
        external = {f"dataset-{i + 1}": d for i, d in enumerate(external)}
    rows = []
    for name, data in external.items():
        products = tuple(data)
        kept = filter_to_taxonomy(products, training_taxonomy)
        counts = retention(products, kept)
        if len(kept) == 0:
            rows.append(PlatformRow(name, counts, None))
            continue
        primary_only = tuple(dataclasses.replace(p, title_secondary=None) for p in kept)
        rows.append(PlatformRow(name, counts, evaluate_model(model, primary_only)))
    return rows


def render_platform_table(rows: Sequence[PlatformRow], delimiter: str | None = None) -> str:
    header = ["Dataset", "Products", "Categories", "Subcategories", "WAF1 Cat", "WAF1 Sub", "Average"]
    body = []
    for r in rows:
        ret = r.retention
        counts = [
            f"{ret.products_before} -> {ret.products_after}",
            f"{ret.categories_before} -> {ret.categories_after}",
            f"{ret.subcategories_before} -> {ret.subcategories_after}",
        ]
        if r.report is None:
            scores = ["-", "-", "-"]
        else:
            scores = [f"{100 * r.report.waf1_cat:.1f}", f"{100 * r.report.waf1_sub:.1f}",
                      f"{100 * r.report.rank_metric:.1f}"]
        body.append([r.name] + counts + scores)
    return _delimited(header, body, delimiter) if delimiter else _aligned(header, body)


@dataclass(frozen=True)
class AuditEntry:
    id: str
    title: str
    gold_category: str
    gold_subcategory: str
    predicted_category: str
    predicted_subcategory: str
    confidence: float


def misprediction_report(model: Classifier, dataset: Dataset | Sequence[Product], limit: int | None = None) -> list[AuditEntry]:
    """Mispredicted products, most confident predictions first."""
    products = tuple(dataset)
    entries = []
    for p, q in zip(products, model.predict(products)):
        same_cat = canonical_label(p.category) == canonical_label(q.category)
        same_sub = canonical_label(p.subcategory) == canonical_label(q.subcategory)
        if same_cat and same_sub:
            continue
        entries.append(AuditEntry(p.id, p.title_primary, p.category, p.subcategory, q.category, q.subcategory, q.confidence))
    entries.sort(key=lambda e: -e.confidence)
    return entries if limit is None else entries[:limit]


AUDIT_HEADER = ("id", "title", "gold_cat", "gold_sub", "pred_cat", "pred_sub", "confidence")


def audit_rows(entries: Sequence[AuditEntry]) -> list[list[str]]:
    return [
        [e.id, e.title, e.gold_category, e.gold_subcategory, e.predicted_category, e.predicted_subcategory,
         f"{e.confidence:.4f}"]
        for e in entries
    ]


def render_audit(entries: Sequence[AuditEntry], delimiter: str | None = ",") -> str:
    rows = audit_rows(entries)
    return _delimited(AUDIT_HEADER, rows, delimiter) if delimiter else _aligned(AUDIT_HEADER, rows)


def write_text(text: str, path: str | Path) -> None:
    Path(path).write_text(text, encoding="utf-8")
