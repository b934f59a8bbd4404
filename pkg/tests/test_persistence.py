import struct
from pathlib import Path

import numpy as np
import pytest

from prodtax.corpus import Product, train_val_split
from prodtax.errors import ContainerError, IncompatibleVersionError
from prodtax.features import save_embeddings
from prodtax.neural import EncoderConfig, TrainConfig
from prodtax.persistence import FORMAT_VERSION, MAGIC, load_model, read_sections, save_model
from prodtax.pipeline import ModelSpec

DATA = Path(__file__).parent / "data"
V1_0 = DATA / "model_v1_0.ptx"


def random_titles(corpus, n=100, seed=0):
    rng = np.random.default_rng(seed)
    vocab = sorted({w for p in corpus.dataset for w in p.title_primary.split()})
    vocab2 = sorted({w for p in corpus.dataset for w in (p.title_secondary or "").split()})
    out = []
    for i in range(n):
        words = rng.choice(vocab + ["unseen"], size=rng.integers(1, 7))
        second = " ".join(rng.choice(vocab2, size=rng.integers(0, 4))) or None
        out.append(Product(str(i), " ".join(words), "-", "-", second))
    return out


def fit(corpus, **kw):
    train, val = train_val_split(corpus.dataset, 0.8, seed=0)
    spec = ModelSpec(tables=corpus.tables, train=TrainConfig(max_epochs=3), dense_size=6, **kw)
    return spec.fit(train, val, seed=0)[0]


def same_predictions(a, b, products):
    pa, pb = a.predict(products), b.predict(products)
    return all(x.category == y.category and x.subcategory == y.subcategory and x.confidence == y.confidence
               for x, y in zip(pa, pb))


@pytest.mark.parametrize("variant", ["mean_pool", "bi_recurrent", "dual_tower"])
def test_neural_round_trip(small_synthetic, tmp_path, variant):
    model = fit(small_synthetic, encoder=EncoderConfig(variant=variant, hidden_size=4),
                bilingual=variant == "dual_tower", independent_heads=variant == "bi_recurrent")
    save_model(model, tmp_path / "m.ptx", {"seed": 0})
    loaded, meta = load_model(tmp_path / "m.ptx")
    assert meta["seed"] == 0 and meta["format_version"] == "1.1"
    assert same_predictions(model, loaded, random_titles(small_synthetic))
    assert all(np.array_equal(model.params[k], loaded.params[k]) for k in model.params)
    assert loaded.taxonomy == model.taxonomy and loaded.encoder == model.encoder


@pytest.mark.parametrize("bilingual", [False, True])
def test_linear_round_trip_by_reference(small_synthetic, tmp_path, bilingual):
    paths = {}
    for source, table in small_synthetic.tables.items():
        paths[source] = tmp_path / f"{source}.txt"
        save_embeddings(table, paths[source])
    model = fit(small_synthetic, family="linear", masking=False, bilingual=bilingual, linear_epochs=5)
    save_model(model, tmp_path / "l.ptx", embedding_paths=paths)
    loaded, meta = load_model(tmp_path / "l.ptx")
    assert set(meta["embeddings"]) == ({"primary", "secondary"} if bilingual else {"primary"})
    assert same_predictions(model, loaded, random_titles(small_synthetic))

    # a changed embedding file is caught by its recorded hash
    paths["primary"].write_text(paths["primary"].read_text() + "extra " + " ".join(["0"] * 8) + "\n")
    with pytest.raises(ContainerError, match="sha256"):
        load_model(tmp_path / "l.ptx")


def test_linear_inline_embeddings(small_synthetic, tmp_path):
    model = fit(small_synthetic, family="linear", masking=False, linear_epochs=5)
    with pytest.raises(ContainerError, match="embedding"):
        save_model(model, tmp_path / "x.ptx")
    save_model(model, tmp_path / "l.ptx", inline_embeddings=True)
    loaded, meta = load_model(tmp_path / "l.ptx")
    assert meta["embeddings"] == {}
    assert "EMBD" in read_sections(tmp_path / "l.ptx")[1]
    assert same_predictions(model, loaded, random_titles(small_synthetic))


def test_flipped_byte_is_rejected(small_synthetic, tmp_path):
    model = fit(small_synthetic, encoder=EncoderConfig(variant="mean_pool"))
    save_model(model, tmp_path / "m.ptx")
    data = bytearray((tmp_path / "m.ptx").read_bytes())
    for pos in (20, len(data) // 2, len(data) - 40, len(data) - 1):
        bad = bytearray(data)
        bad[pos] ^= 0x01
        (tmp_path / "bad.ptx").write_bytes(bad)
        with pytest.raises(ContainerError):
            load_model(tmp_path / "bad.ptx")
    (tmp_path / "cut.ptx").write_bytes(data[:-100])
    with pytest.raises(ContainerError, match="hash"):
        load_model(tmp_path / "cut.ptx")


def test_not_a_container(tmp_path):
    (tmp_path / "x.ptx").write_bytes(b"hello world" * 10)
    with pytest.raises(ContainerError, match="magic"):
        load_model(tmp_path / "x.ptx")


@pytest.mark.parametrize("version", [(2, 0), (1, 2), (0, 9)])
def test_unknown_version_detected_before_hash(small_synthetic, tmp_path, version):
    model = fit(small_synthetic, encoder=EncoderConfig(variant="mean_pool"))
    save_model(model, tmp_path / "m.ptx")
    data = bytearray((tmp_path / "m.ptx").read_bytes())
    data[len(MAGIC) : len(MAGIC) + 4] = struct.pack("<HH", *version)
    data[-1] ^= 0xFF  # hash is also wrong; the version error must win
    (tmp_path / "v.ptx").write_bytes(data)
    with pytest.raises(IncompatibleVersionError, match=f"{version[0]}.{version[1]}"):
        load_model(tmp_path / "v.ptx")


def test_older_minor_version_fixture_loads_with_defaults():
    assert V1_0.exists(), "checked-in 1.0 container fixture is missing"
    (major, minor), sections = read_sections(V1_0)
    assert (major, minor) == (1, 0)
    assert b"secondary_locale" not in sections["HEAD"]
    model, meta = load_model(V1_0)
    assert meta["format_version"] == "1.0"
    assert model.secondary_locale == "generic" and model.frozen == frozenset()
    preds = model.predict([Product("0", "meso saku", "-", "-")])
    assert model.taxonomy.parent_of(preds[0].subcategory) == preds[0].category


def test_identical_training_gives_identical_bytes(small_synthetic, tmp_path):
    for name in ("a", "b"):
        model = fit(small_synthetic, encoder=EncoderConfig(variant="bi_recurrent", hidden_size=3))
        save_model(model, tmp_path / f"{name}.ptx", {"seed": 0, "created_at": "fixed"})
    assert (tmp_path / "a.ptx").read_bytes() == (tmp_path / "b.ptx").read_bytes()


def test_current_version():
    assert FORMAT_VERSION == (1, 1)


if __name__ == "__main__":  # rebuild the 1.0 fixture
    from prodtax.synthetic import make_corpus

    corpus = make_corpus(n_categories=2, subcategories_per_category=2, titles_per_subcategory=10,
                         embedding_dim=4, seed=5)
    DATA.mkdir(exist_ok=True)
    save_model(fit(corpus, encoder=EncoderConfig(variant="mean_pool")), V1_0, {"note": "format 1.0 fixture"},
               minor_version=0)
