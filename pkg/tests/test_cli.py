import hashlib
from pathlib import Path

import numpy as np
import pytest

from prodtax.cli import build_parser, cmd_train, main
from prodtax.config import resolve_config
from prodtax.corpus import Product
from prodtax.neural import predict_hierarchical
from prodtax.persistence import load_model
from prodtax.synthetic import make_corpus, write_corpus

GOLDEN = Path(__file__).parent / "golden"
KEYWORDS = ["elma", "armut", "süt", "peynir", "ekmek", "simit"]
PARENTS = ["Meyve", "Meyve", "Süt Ürünleri", "Süt Ürünleri", "Fırın", "Fırın"]


@pytest.fixture(scope="module")
def separable(tmp_path_factory):
    """Keyword catalog whose TF-IDF vectors are one-hot per subcategory."""
    root = tmp_path_factory.mktemp("separable")
    rows = ["title,category,subcategory"]
    for kw, cat in zip(KEYWORDS, PARENTS):
        rows += [f"{kw.capitalize()} {'taze ' if i % 2 else ''}paket {i % 3 + 1},{cat},{kw.capitalize()}"
                 for i in range(10)]
    (root / "products.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    emb = [f"{kw} " + " ".join("1" if i == j else "0" for i in range(6)) for j, kw in enumerate(KEYWORDS)]
    emb += [f"{w} " + " ".join(["0"] * 6) for w in ("taze", "paket", "1", "2", "3")]
    (root / "emb.txt").write_text("\n".join(emb) + "\n", encoding="utf-8")
    return root


@pytest.fixture(scope="module")
def synthetic(tmp_path_factory):
    root = tmp_path_factory.mktemp("synthetic")
    corpus = make_corpus(n_categories=3, subcategories_per_category=2, titles_per_subcategory=15,
                         embedding_dim=8, bilingual=True, seed=11)
    write_corpus(corpus, root)
    return root


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_parser_lists_commands():
    text = build_parser().format_help()
    for cmd in ("stats", "train", "crossval", "eval", "predict", "audit"):
        assert cmd in text


def test_stats(capsys, catalog_csv, tmp_path):
    code, out, _ = run(capsys, "stats", "--data", catalog_csv, "--ngram", 2, "--histogram", tmp_path / "h.csv")
    assert code == 0
    assert "titles: 5" in out and "57 gram\t1" in out
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "length,count"
    code, out, _ = run(capsys, "stats", "--data", catalog_csv, "--min-count", 50)
    assert "with count >= 50: 0" in out


def test_train_linear_separable(capsys, separable, tmp_path):
    before = (separable / "products.csv").read_bytes()
    code, out, _ = run(capsys, "train", "--data", separable / "products.csv", "--model", "linear",
                       "--embeddings-primary", separable / "emb.txt", "--out", tmp_path)
    assert code == 0
    assert "accuracy (cat)    100.00" in out and "accuracy (sub)    100.00" in out
    assert (tmp_path / "model.ptx").exists() and not (tmp_path / "training_log.tsv").exists()
    assert (separable / "products.csv").read_bytes() == before


def test_train_neural_masked_is_consistent(capsys, synthetic, tmp_path):
    code, out, _ = run(capsys, "train", "--data", synthetic / "products.csv", "--embeddings-primary",
                       synthetic / "embeddings_primary.txt", "--hidden-size", 8, "--max-epochs", 5,
                       "--out", tmp_path)
    assert code == 0
    assert "consistency rate  100.00" in out
    log = (tmp_path / "training_log.tsv").read_text().splitlines()
    assert log[0].split("\t") == ["epoch", "train_loss", "val_rank_metric", "elapsed_s"]
    assert len(log) == 6


def test_train_is_byte_reproducible(synthetic, tmp_path):
    digests = []
    for name in ("a", "b"):
        cfg = resolve_config("train", {"data": str(synthetic / "products.csv"), "bilingual": True,
                                       "col_title2": "title_en",
                                       "embeddings_primary": str(synthetic / "embeddings_primary.txt"),
                                       "embeddings_secondary": str(synthetic / "embeddings_secondary.txt"),
                                       "hidden_size": 4, "max_epochs": 3, "out": str(tmp_path / name)})
        cmd_train(cfg, created_at="2000-01-01T00:00:00+00:00")
        digests.append(hashlib.sha256((tmp_path / name / "model.ptx").read_bytes()).hexdigest())
    assert digests[0] == digests[1]


def test_crossval_golden(capsys, synthetic, tmp_path):
    argv = ["crossval", "--data", synthetic / "products.csv", "--model", "linear", "--embeddings-primary",
            synthetic / "embeddings_primary.txt", "--linear-epochs", 10, "--seed", 3, "--out", tmp_path]
    code, out, _ = run(capsys, *argv)
    assert code == 0
    assert out == (GOLDEN / "cli_crossval.txt").read_text(encoding="utf-8")
    assert (tmp_path / "crossval.txt").read_text(encoding="utf-8") == out
    assert run(capsys, *argv)[1] == out


@pytest.fixture(scope="module")
def trained(synthetic, tmp_path_factory):
    out = tmp_path_factory.mktemp("model")
    code = main(["train", "--data", str(synthetic / "products.csv"), "--embeddings-primary",
                 str(synthetic / "embeddings_primary.txt"), "--hidden-size", "8", "--max-epochs", "8",
                 "--seed", "1", "--out", str(out)])
    assert code == 0
    return out / "model.ptx"


def test_eval_golden(capsys, synthetic, trained, tmp_path):
    ext = tmp_path / "retailer.csv"
    lines = (synthetic / "products.csv").read_text(encoding="utf-8").splitlines()
    ext.write_text("\n".join(lines[:31] + ["yabancı ürün,Other,Thing,Thing"]) + "\n", encoding="utf-8")
    outside = tmp_path / "outside.csv"
    outside.write_text("title,category,subcategory\nx,Q,q\n", encoding="utf-8")
    code, out, _ = run(capsys, "eval", "--model-path", trained, ext, outside)
    assert code == 0
    assert out == (GOLDEN / "cli_eval.txt").read_text(encoding="utf-8")


def test_predict_rows(capsys, synthetic, trained, tmp_path):
    model, _ = load_model(trained)
    titles = ["meso saku vugi", "", "reni"]
    inp = tmp_path / "titles.txt"
    inp.write_text("\n".join(titles) + "\n", encoding="utf-8")
    code, out, _ = run(capsys, "predict", "--model-path", trained, "--input", inp, "--probabilities")
    assert code == 0
    rows = [r.split("\t") for r in out.splitlines()]
    assert rows[0] == ["title", "category", "subcategory", "sub_probability"]
    assert [r[0] for r in rows[1:]] == titles
    assert rows[2][1].startswith("ERROR")
    for row, title in ((rows[1], titles[0]), (rows[3], titles[2])):
        cat, sub, _pc, p_sub = predict_hierarchical(model, Product("0", title, "-", "-"))
        assert (row[1], row[2]) == (cat, sub)
        assert row[3] == f"{p_sub.max():.4f}"
        assert model.taxonomy.parent_of(sub) == cat


def test_audit(capsys, synthetic, trained):
    code, out, _ = run(capsys, "audit", "--model-path", trained, "--data", synthetic / "products.csv",
                       "--limit", 5)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "id,title,gold_cat,gold_sub,pred_cat,pred_sub,confidence"
    conf = [float(l.rsplit(",", 1)[1]) for l in lines[1:]]
    assert len(conf) <= 5 and conf == sorted(conf, reverse=True)
    assert out == (GOLDEN / "cli_audit.csv").read_text(encoding="utf-8")


def test_audit_perfect_model_header_only(capsys, separable, tmp_path):
    main(["train", "--data", str(separable / "products.csv"), "--model", "linear", "--embeddings-primary",
          str(separable / "emb.txt"), "--out", str(tmp_path)])
    capsys.readouterr()
    code, out, _ = run(capsys, "audit", "--model-path", tmp_path / "model.ptx", "--data", separable / "products.csv")
    assert code == 0 and out == "id,title,gold_cat,gold_sub,pred_cat,pred_sub,confidence\n"


class TestExitCodes:
    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["train", "--no-such-flag"])
        assert info.value.code == 1

    def test_config_error(self, capsys, catalog_csv):
        code, _, err = run(capsys, "train", "--data", catalog_csv, "--model", "linear", "--mask")
        assert code == 1 and "--mask requires --model neural" in err

    def test_data_error(self, capsys, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("name,category,subcategory\nx,A,a\n")
        code, _, err = run(capsys, "stats", "--data", bad)
        assert code == 2 and "'title'" in err
        code, _, _ = run(capsys, "stats", "--data", tmp_path / "missing.csv")
        assert code == 2

    def test_corrupt_model_is_data_error(self, capsys, trained, tmp_path):
        data = bytearray(trained.read_bytes())
        data[100] ^= 1
        (tmp_path / "bad.ptx").write_bytes(data)
        code, _, err = run(capsys, "predict", "--model-path", tmp_path / "bad.ptx", "--title", "x")
        assert code == 2 and "hash" in err

    def test_numeric_failure(self, capsys, synthetic):
        code, _, err = run(capsys, "train", "--data", synthetic / "products.csv", "--hidden-size", 4,
                           "--max-epochs", 3, "--learning-rate", 1e300)
        assert code == 3


def test_config_file_used(capsys, catalog_csv, tmp_path):
    conf = tmp_path / "stats.conf"
    conf.write_text(f"data = {catalog_csv}\ntop = 1\n")
    code, out, _ = run(capsys, "stats", "--config", conf)
    assert code == 0 and out.count("\t") == 1


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
