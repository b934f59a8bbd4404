from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pytest

from prodtax.base import Prediction
from prodtax.corpus import Dataset, Product, Taxonomy, build_taxonomy, stratified_kfold, train_val_split
from prodtax.errors import ConfigError, TrainingError
from prodtax.evaluation import (
    CrossvalResult,
    cross_platform_eval,
    derive_seed,
    evaluate_model,
    format_mean_std,
    misprediction_report,
    render_audit,
    render_crossval,
    render_platform_table,
    run_crossval,
)
from prodtax.metrics import MetricsReport
from prodtax.pipeline import ModelSpec

from helpers import make_products

GOLDEN = Path(__file__).parent / "golden"


@dataclass
class LookupModel:
    """Predicts from a title → (category, subcategory, confidence) table; majority otherwise."""

    taxonomy: Taxonomy
    table: dict
    default: tuple = ("A", "x", 0.5)
    family = "stub"

    def predict(self, products):
        return [Prediction(*self.table.get(p.title_primary, self.default)) for p in products]


@dataclass
class MajoritySpec:
    calls: list

    def fit(self, train, val=None, seed=None):
        self.calls.append(seed)
        cat, sub = Counter((p.category, p.subcategory) for p in train).most_common(1)[0][0]
        return LookupModel(train.taxonomy, {}, (cat, sub, 1.0)), None


def majority_fixture():
    pairs = [("A", "x")] * 15 + [("B", "y")] * 10
    return Dataset.from_products(make_products(pairs))


def test_majority_model_crossval():
    ds = majority_fixture()
    # each fold holds exactly 3 majority and 2 minority items
    for _tr, te in stratified_kfold(ds, 5, seed=0):
        assert Counter(ds.products[i].category for i in te) == {"A": 3, "B": 2}
    spec = MajoritySpec([])
    res = run_crossval(spec, ds, k=5, seed=0)
    assert res.mean_std("accuracy_cat") == (0.6, 0.0)
    assert res.mean_std("accuracy_sub") == (0.6, 0.0)
    assert spec.calls == [derive_seed(0, i) for i in range(5)]
    assert len(set(spec.calls)) == 5


def test_crossval_deterministic_and_row_order_free(small_synthetic):
    spec = ModelSpec(family="linear", masking=False, tables=small_synthetic.tables, linear_epochs=5)
    ds = small_synthetic.dataset
    a = run_crossval(spec, ds, k=3, seed=4)
    b = run_crossval(spec, ds, k=3, seed=4)
    perm = np.random.default_rng(0).permutation(len(ds))
    c = run_crossval(spec, Dataset(tuple(ds.products[i] for i in perm), ds.taxonomy), k=3, seed=4)
    assert a == b
    assert [r.summary() for r in a.folds] == [r.summary() for r in c.folds]


def test_errors_carry_fold_index():
    class Failing:
        def fit(self, train, val=None, seed=None):
            raise ConfigError("boom")

    with pytest.raises(ConfigError, match="fold 0: boom"):
        run_crossval(Failing(), majority_fixture(), k=5)

    class Diverging:
        def fit(self, train, val=None, seed=None):
            raise FloatingPointError("overflow")

    with pytest.raises(TrainingError, match="fold 0: overflow"):
        run_crossval(Diverging(), majority_fixture(), k=5)


def _report(acc_c, acc_s, w_c, w_s):
    return MetricsReport(acc_c, acc_s, w_c, w_s, (w_c + w_s) / 2, 1.0, 10)


def known_results():
    folds = [_report(0.5, 0.4, 0.52, 0.41), _report(0.7, 0.6, 0.66, 0.55), _report(0.6, 0.5, 0.61, 0.50)]
    return {"mean_pool-masked": CrossvalResult(tuple(folds), 3, 0),
            "perfect": CrossvalResult(tuple(_report(1, 1, 1, 1) for _ in range(3)), 3, 0)}


def test_format_mean_std():
    assert format_mean_std(0.5, 0.0) == "50.0 ± 0.0"
    assert format_mean_std(0.952, 0.008) == "95.2 ± 0.8"


def test_sample_standard_deviation():
    res = known_results()["mean_pool-masked"]
    mean, std = res.mean_std("accuracy_cat")
    assert mean == pytest.approx(0.6) and std == pytest.approx(0.1)


def test_crossval_rendering_golden():
    assert render_crossval(known_results()) == (GOLDEN / "crossval.txt").read_text(encoding="utf-8")
    assert render_crossval(known_results(), delimiter=",") == (GOLDEN / "crossval.csv").read_text(encoding="utf-8")


class TestCrossPlatform:
    def setup_method(self):
        pairs = [("A", "x"), ("A", "y"), ("B", "z")] * 4
        titles = [f"t{i}" for i in range(len(pairs))]
        self.train = Dataset.from_products(make_products(pairs, titles))
        table = {f"t{i}": (c, s, 0.9) for i, (c, s) in enumerate(pairs)}
        table["t0"] = ("B", "z", 0.8)
        self.model = LookupModel(self.train.taxonomy, table)

    def test_identity_is_bitwise_equal_to_direct_evaluation(self):
        held_out = self.train.subset(range(6))
        row = cross_platform_eval(self.model, self.train.taxonomy, {"same": held_out})[0]
        assert row.report == evaluate_model(self.model, held_out)
        r = row.retention
        assert (r.products_before, r.products_after) == (6, 6)

    def test_outside_taxonomy_gives_empty_row(self):
        other = make_products([("Q", "q"), ("R", "r")])
        rows = cross_platform_eval(self.model, self.train.taxonomy, [other])
        assert rows[0].name == "dataset-1" and rows[0].empty
        assert rows[0].retention.products_after == 0

    def test_hand_counted_retention(self):
        ext = make_products([("A", "x"), ("a", "Y"), ("B", "x"), ("C", "c"), ("B", "z"), ("A", "new")],
                            ["t1", "t2", "t3", "t4", "t5", "t6"])
        row = cross_platform_eval(self.model, self.train.taxonomy, {"retailer": ext})[0]
        r = row.retention
        assert (r.products_before, r.categories_before, r.subcategories_before) == (6, 3, 5)
        assert (r.products_after, r.categories_after, r.subcategories_after) == (3, 2, 3)
        assert row.report.n == 3

    def test_secondary_titles_are_ignored(self):
        seen = []

        class Spy(LookupModel):
            def predict(self, products):
                seen.extend(p.title_secondary for p in products)
                return super().predict(products)

        ext = [replace(p, title_secondary="english") for p in self.train.products[:3]]
        cross_platform_eval(Spy(self.train.taxonomy, {}), self.train.taxonomy, {"e": ext})
        assert seen == [None, None, None]

    def test_rendering_golden(self):
        ext = make_products([("A", "x"), ("B", "z"), ("C", "c")], ["t0", "t2", "t9"])
        rows = cross_platform_eval(self.model, self.train.taxonomy,
                                   {"retailer-1": ext, "retailer-2": make_products([("Q", "q")])})
        assert render_platform_table(rows) == (GOLDEN / "cross_platform.txt").read_text(encoding="utf-8")


class TestAudit:
    def setup_method(self):
        self.products = make_products([("A", "x"), ("A", "y"), ("B", "z")], ["süt 1 lt", "ayran", "peynir"])
        self.tax = build_taxonomy(self.products)

    def test_perfect_model(self):
        table = {p.title_primary: (p.category, p.subcategory, 0.9) for p in self.products}
        entries = misprediction_report(LookupModel(self.tax, table), self.products)
        assert entries == []
        assert render_audit(entries) == "id,title,gold_cat,gold_sub,pred_cat,pred_sub,confidence\n"

    def test_single_error(self):
        table = {p.title_primary: (p.category, p.subcategory, 0.9) for p in self.products}
        table["ayran"] = ("B", "z", 0.7)
        (entry,) = misprediction_report(LookupModel(self.tax, table), self.products)
        assert (entry.id, entry.gold_category, entry.gold_subcategory) == ("1", "A", "y")
        assert (entry.predicted_category, entry.predicted_subcategory) == ("B", "z")

    def test_sorted_by_confidence_and_golden(self):
        table = {"süt 1 lt": ("A", "y", 0.41), "ayran": ("A", "x", 0.97), "peynir": ("A", "z", 0.5)}
        model = LookupModel(self.tax, table)
        entries = misprediction_report(model, self.products)
        assert [e.confidence for e in entries] == [0.97, 0.5, 0.41]
        assert len(misprediction_report(model, self.products, limit=2)) == 2
        assert render_audit(entries) == (GOLDEN / "audit.csv").read_text(encoding="utf-8")


def test_linear_spec_rejects_masking():
    with pytest.raises(ConfigError):
        ModelSpec(family="linear", masking=True)
