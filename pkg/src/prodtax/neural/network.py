"""Two-head title classifier with mean-pool, BiLSTM and dual-tower encoders.

Everything runs in float64 numpy with hand-written backward passes. The
parameter store is an insertion-ordered dict of arrays; gradients come back
as a dict with the same keys and shapes.

Layout::

    tower(s) -> concat -> dense(relu) -> category head (softmax)
                                      -> subcategory head (masked softmax)

With ``independent_heads`` the encoder and dense layer are duplicated, one
trunk per head, which mirrors training two separate networks.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field

import numpy as np

from ..base import Prediction
from ..corpus import Product, Taxonomy
from ..errors import NumericError
from ..features import EmbeddingTable, tokenize
from .masking import build_mask, masked_softmax_batch, masked_softmax_nll_grad, softmax

__all__ = [
    "ENCODER_VARIANTS",
    "ClassifierNetwork",
    "EncodedBatch",
    "EncoderConfig",
    "build_network",
    "compute_gradients",
    "forward",
    "loss",
    "predict_hierarchical",
]

ENCODER_VARIANTS = ("mean_pool", "bi_recurrent", "dual_tower")
TOWER_KINDS = ("mean_pool", "bi_recurrent")
SOURCES = ("primary", "secondary")


@dataclass(frozen=True)
class EncoderConfig:
    """Encoder shape.

    ``source`` picks the title read by single-tower variants; ``tower`` is
    the per-language encoder used inside ``dual_tower``.
    """

    variant: str = "mean_pool"
    hidden_size: int = 200
    tower: str = "bi_recurrent"
    source: str = "primary"
    max_length: int = 32

    def __post_init__(self) -> None:
        if self.variant not in ENCODER_VARIANTS:
            raise ValueError(f"unknown encoder variant {self.variant!r}")
        if self.tower not in TOWER_KINDS:
            raise ValueError(f"unknown tower kind {self.tower!r}")
        if self.source not in SOURCES:
            raise ValueError(f"unknown title source {self.source!r}")
        if self.hidden_size < 1 or self.max_length < 1:
            raise ValueError("hidden_size and max_length must be positive")

    def towers(self) -> list[tuple[str, str]]:
        """(kind, source) per tower."""
        if self.variant == "dual_tower":
            return [(self.tower, "primary"), (self.tower, "secondary")]
        return [(self.variant, self.source)]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EncodedBatch:
    """Token ids per tower plus gold label indices (``-1`` when unknown)."""

    ids: list[list[np.ndarray]]
    cat: np.ndarray
    sub: np.ndarray

    def __len__(self) -> int:
        return len(self.cat)

    def take(self, rows: Sequence[int] | np.ndarray) -> EncodedBatch:
        rows = list(rows)
        return EncodedBatch(
            ids=[[tower[r] for r in rows] for tower in self.ids],
            cat=self.cat[rows],
            sub=self.sub[rows],
        )


def _uniform(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(eq=False)
class ClassifierNetwork:
    taxonomy: Taxonomy
    encoder: EncoderConfig
    tower_tokens: list[tuple[str, ...]]
    params: dict[str, np.ndarray]
    masking: bool = True
    independent_heads: bool = False
    dense_size: int = 100
    locale: str = "turkish"
    secondary_locale: str = "generic"
    frozen: frozenset[str] = frozenset()
    mask: np.ndarray = field(init=False, repr=False)
    _index: list[dict[str, int]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.mask = build_mask(self.taxonomy)
        self._index = [{t: i for i, t in enumerate(toks)} for toks in self.tower_tokens]
        if len(self.tower_tokens) != len(self.encoder.towers()):
            raise ValueError("one token list per tower is required")
        if self.params["cat.W"].shape[1] != self.taxonomy.n_categories:
            raise ValueError("category head width does not match the taxonomy")
        if self.params["sub.W"].shape[1] != self.taxonomy.n_subcategories:
            raise ValueError("subcategory head width does not match the taxonomy")

    family = "neural"

    @property
    def n_trunks(self) -> int:
        return 2 if self.independent_heads else 1

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params.values()])

    # -- encoding ---------------------------------------------------------

    def encode(self, products: Sequence[Product], with_labels: bool = True) -> EncodedBatch:
        """Map titles to token-id arrays, dropping tokens outside each tower's vocabulary."""
        ids = []
        for (kind, source), index in zip(self.encoder.towers(), self._index):
            tower_ids = []
            for p in products:
                if source == "primary":
                    toks = tokenize(p.title_primary, self.locale)
                else:
                    toks = tokenize(p.title_secondary or "", self.secondary_locale)
                seq = [index[t] for t in toks if t in index][: self.encoder.max_length]
                tower_ids.append(np.array(seq, dtype=np.int64))
            ids.append(tower_ids)
        if with_labels:
            cat = np.array([self.taxonomy.category_index(p.category) for p in products], dtype=np.int64)
            sub = np.array([self.taxonomy.subcategory_index(p.subcategory) for p in products], dtype=np.int64)
        else:
            cat = np.full(len(products), -1, dtype=np.int64)
            sub = np.full(len(products), -1, dtype=np.int64)
        return EncodedBatch(ids=ids, cat=cat, sub=sub)

    # -- forward ----------------------------------------------------------

    def _check(self, name: str, x: np.ndarray) -> None:
        if not np.all(np.isfinite(x)):
            raise NumericError(name)

    def _tower_forward(self, prefix: str, kind: str, seqs: list[np.ndarray]) -> tuple[np.ndarray, dict]:
        E = self.params[prefix + ".emb"]
        B = len(seqs)
        if kind == "mean_pool":
            A = np.zeros((B, E.shape[0]))
            for b, seq in enumerate(seqs):
                if len(seq):
                    np.add.at(A[b], seq, 1.0 / len(seq))
            z = A @ E
            return z, {"A": A}
        H = self.params[prefix + ".fwd.U"].shape[0]
        lengths = np.array([len(s) for s in seqs], dtype=np.int64)
        L = int(lengths.max()) if B else 0
        fwd_ids = np.zeros((B, L), dtype=np.int64)
        bwd_ids = np.zeros((B, L), dtype=np.int64)
        for b, seq in enumerate(seqs):
            fwd_ids[b, : len(seq)] = seq
            bwd_ids[b, : len(seq)] = seq[::-1]
        valid = np.arange(L)[None, :] < lengths[:, None]
        h_f, cache_f = _lstm_forward(E[fwd_ids], valid, self.params, prefix + ".fwd", H)
        h_b, cache_b = _lstm_forward(E[bwd_ids], valid, self.params, prefix + ".bwd", H)
        return np.concatenate([h_f, h_b], axis=1), {
            "fwd_ids": fwd_ids, "bwd_ids": bwd_ids, "valid": valid, "f": cache_f, "b": cache_b,
        }

    def _trunk_forward(self, t: int, batch: EncodedBatch) -> dict:
        reps, caches = [], []
        for i, (kind, _source) in enumerate(self.encoder.towers()):
            z, cache = self._tower_forward(f"trunk{t}.tower{i}", kind, batch.ids[i])
            self._check(f"trunk{t}.tower{i}", z)
            reps.append(z)
            caches.append(cache)
        z = np.concatenate(reps, axis=1)
        pre = z @ self.params[f"trunk{t}.dense.W"] + self.params[f"trunk{t}.dense.b"]
        h = np.maximum(pre, 0.0)
        self._check(f"trunk{t}.dense", h)
        return {"z": z, "pre": pre, "h": h, "towers": caches, "widths": [r.shape[1] for r in reps]}

    def _forward(self, batch: EncodedBatch, teacher: np.ndarray | None, mask: np.ndarray | None = None) -> dict:
        # overflow surfaces as a NumericError from _check, not as warnings
        with np.errstate(over="ignore", invalid="ignore"):
            trunks = [self._trunk_forward(t, batch) for t in range(self.n_trunks)]
        h_cat, h_sub = trunks[0]["h"], trunks[-1]["h"]
        O_cat = h_cat @ self.params["cat.W"] + self.params["cat.b"]
        O_sub = h_sub @ self.params["sub.W"] + self.params["sub.b"]
        self._check("cat", O_cat)
        self._check("sub", O_sub)
        p_cat = softmax(O_cat)
        row = teacher if teacher is not None else np.argmax(p_cat, axis=1)
        if self.masking:
            rows = (self.mask if mask is None else mask)[row]
            p_sub = masked_softmax_batch(O_sub, rows)
        else:
            rows = None
            p_sub = softmax(O_sub)
        return {"trunks": trunks, "O_cat": O_cat, "O_sub": O_sub, "p_cat": p_cat, "p_sub": p_sub,
                "rows": rows, "row_index": row}

    def predict_proba(self, batch: EncodedBatch, mask: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Inference probabilities; the mask row is the predicted category."""
        out = self._forward(batch, None, mask)
        return out["p_cat"], out["p_sub"]

    def predict_encoded(self, batch: EncodedBatch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        p_cat, p_sub = self.predict_proba(batch)
        cat = np.argmax(p_cat, axis=1)
        sub = np.argmax(p_sub, axis=1)
        return cat, sub, p_sub[np.arange(len(sub)), sub]

    def predict(self, products: Sequence[Product], batch_size: int = 256) -> list[Prediction]:
        out: list[Prediction] = []
        for start in range(0, len(products), batch_size):
            chunk = products[start : start + batch_size]
            cat, sub, conf = self.predict_encoded(self.encode(chunk, with_labels=False))
            out.extend(
                Prediction(self.taxonomy.categories[c], self.taxonomy.subcategories[s], float(q))
                for c, s, q in zip(cat, sub, conf)
            )
        return out

    # -- loss and gradients -------------------------------------------------

    def loss_and_grads(
        self, batch: EncodedBatch, scale: float = 1.0, need_grads: bool = True, mask: np.ndarray | None = None
    ) -> tuple[float, dict[str, np.ndarray] | None]:
        """Mean joint cross-entropy over ``batch`` with teacher-forced masking."""
        B = len(batch)
        if B == 0:
            raise ValueError("empty batch")
        gold_c, gold_s = batch.cat, batch.sub
        out = self._forward(batch, gold_c, mask)
        rows_idx = np.arange(B)
        nll_cat = -np.log(out["p_cat"][rows_idx, gold_c])
        if self.masking:
            nll_sub, dO_sub = masked_softmax_nll_grad(out["O_sub"], out["rows"], gold_s)
        else:
            nll_sub = -np.log(out["p_sub"][rows_idx, gold_s])
            dO_sub = out["p_sub"].copy()
            dO_sub[rows_idx, gold_s] -= 1.0
        value = scale * float(np.mean(nll_cat + nll_sub))
        if not need_grads:
            return value, None

        coef = scale / B
        dO_cat = out["p_cat"].copy()
        dO_cat[rows_idx, gold_c] -= 1.0
        dO_cat *= coef
        dO_sub = dO_sub * coef

        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        trunks = out["trunks"]
        grads["cat.W"] = trunks[0]["h"].T @ dO_cat
        grads["cat.b"] = dO_cat.sum(axis=0)
        grads["sub.W"] = trunks[-1]["h"].T @ dO_sub
        grads["sub.b"] = dO_sub.sum(axis=0)
        dh_cat = dO_cat @ self.params["cat.W"].T
        dh_sub = dO_sub @ self.params["sub.W"].T
        if self.n_trunks == 1:
            upstream = [dh_cat + dh_sub]
        else:
            upstream = [dh_cat, dh_sub]
        for t, (cache, dh) in enumerate(zip(trunks, upstream)):
            self._trunk_backward(t, cache, dh, batch, grads)
        return value, grads

    def _trunk_backward(self, t: int, cache: dict, dh: np.ndarray, batch: EncodedBatch, grads: dict) -> None:
        dpre = dh * (cache["pre"] > 0)
        grads[f"trunk{t}.dense.W"] = cache["z"].T @ dpre
        grads[f"trunk{t}.dense.b"] = dpre.sum(axis=0)
        dz = dpre @ self.params[f"trunk{t}.dense.W"].T
        offset = 0
        for i, ((kind, _source), tc, width) in enumerate(zip(self.encoder.towers(), cache["towers"], cache["widths"])):
            prefix = f"trunk{t}.tower{i}"
            dz_i = dz[:, offset : offset + width]
            offset += width
            if kind == "mean_pool":
                grads[prefix + ".emb"] += tc["A"].T @ dz_i
                continue
            H = width // 2
            dX_f = _lstm_backward(dz_i[:, :H], tc["f"], self.params, prefix + ".fwd", grads)
            dX_b = _lstm_backward(dz_i[:, H:], tc["b"], self.params, prefix + ".bwd", grads)
            dE = grads[prefix + ".emb"]
            valid = tc["valid"]
            np.add.at(dE, tc["fwd_ids"][valid], dX_f[valid])
            np.add.at(dE, tc["bwd_ids"][valid], dX_b[valid])


def _lstm_forward(X: np.ndarray, valid: np.ndarray, params: Mapping[str, np.ndarray], name: str, H: int):
    """Run one LSTM direction over right-padded inputs; returns the last valid state."""
    W, U, b = params[name + ".W"], params[name + ".U"], params[name + ".b"]
    B, L = valid.shape
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    steps = []
    for t in range(L):
        a = X[:, t, :] @ W + h @ U + b
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H : 2 * H])
        g = np.tanh(a[:, 2 * H : 3 * H])
        o = _sigmoid(a[:, 3 * H :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = valid[:, t][:, None]
        steps.append((X[:, t, :], h, c, i, f, g, o, tc, m))
        h = np.where(m, h_new, h)
        c = np.where(m, c_new, c)
    return h, steps


def _lstm_backward(dh: np.ndarray, steps: list, params: Mapping[str, np.ndarray], name: str, grads: dict) -> np.ndarray:
    W, U = params[name + ".W"], params[name + ".U"]
    H = U.shape[0]
    B = dh.shape[0]
    L = len(steps)
    dX = np.zeros((B, L, W.shape[0]))
    dc = np.zeros((B, H))
    dW = grads[name + ".W"]
    dU = grads[name + ".U"]
    db = grads[name + ".b"]
    for t in range(L - 1, -1, -1):
        x, h_prev, c_prev, i, f, g, o, tc, m = steps[t]
        dh_new = np.where(m, dh, 0.0)
        dc_new = np.where(m, dc, 0.0)
        dh_keep = np.where(m, 0.0, dh)
        dc_keep = np.where(m, 0.0, dc)
        do = dh_new * tc
        dc_new = dc_new + dh_new * o * (1.0 - tc * tc)
        di = dc_new * g
        df = dc_new * c_prev
        dg = dc_new * i
        da = np.concatenate(
            [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g * g), do * o * (1.0 - o)], axis=1
        )
        dW += x.T @ da
        dU += h_prev.T @ da
        db += da.sum(axis=0)
        dX[:, t, :] = da @ W.T
        dh = da @ U.T + dh_keep
        dc = dc_new * f + dc_keep
    return dX


def _tower_vocab(products: Sequence[Product], source: str, locale: str) -> set[str]:
    vocab: set[str] = set()
    for p in products:
        text = p.title_primary if source == "primary" else (p.title_secondary or "")
        vocab.update(tokenize(text, locale))
    return vocab


def build_network(
    taxonomy: Taxonomy,
    train_products: Sequence[Product],
    encoder: EncoderConfig = EncoderConfig(),
    tables: Mapping[str, EmbeddingTable | None] | None = None,
    masking: bool = True,
    seed: int = 0,
    dense_size: int = 100,
    independent_heads: bool = False,
    embedding_dim: int = 50,
    freeze_embeddings: bool = False,
    locale: str = "turkish",
    secondary_locale: str = "generic",
) -> ClassifierNetwork:
    """Initialize a network for ``taxonomy`` over the training vocabulary.

    Each tower's embedding rows cover the training tokens of its title
    source; with an embedding table only tokens present in the table are
    kept and their rows start from the table vectors, otherwise rows start
    from N(0, 0.1^2).
    """
    tables = dict(tables or {})
    rng = np.random.default_rng(seed)
    towers = encoder.towers()
    tower_tokens: list[tuple[str, ...]] = []
    params: dict[str, np.ndarray] = {}
    emb_init: list[np.ndarray] = []
    for kind, source in towers:
        loc = locale if source == "primary" else secondary_locale
        vocab = _tower_vocab(train_products, source, loc)
        table = tables.get(source)
        if table is not None:
            toks = tuple(sorted(t for t in vocab if t in table))
            emb = table.vectors[[table.index[t] for t in toks]].reshape(len(toks), table.dimension).copy()
        else:
            toks = tuple(sorted(vocab))
            emb = rng.normal(0.0, 0.1, size=(len(toks), embedding_dim))
        tower_tokens.append(toks)
        emb_init.append(emb)

    H = encoder.hidden_size
    for t in range(2 if independent_heads else 1):
        rep_width = 0
        for i, (kind, _source) in enumerate(towers):
            prefix = f"trunk{t}.tower{i}"
            emb = emb_init[i].copy()
            params[prefix + ".emb"] = emb
            d = emb.shape[1]
            if kind == "bi_recurrent":
                for direction in ("fwd", "bwd"):
                    params[f"{prefix}.{direction}.W"] = _uniform(rng, d, (d, 4 * H))
                    params[f"{prefix}.{direction}.U"] = _uniform(rng, H, (H, 4 * H))
                    params[f"{prefix}.{direction}.b"] = np.zeros(4 * H)
                rep_width += 2 * H
            else:
                rep_width += d
        params[f"trunk{t}.dense.W"] = _uniform(rng, rep_width, (rep_width, dense_size))
        params[f"trunk{t}.dense.b"] = np.zeros(dense_size)
    params["cat.W"] = _uniform(rng, dense_size, (dense_size, taxonomy.n_categories))
    params["cat.b"] = np.zeros(taxonomy.n_categories)
    params["sub.W"] = _uniform(rng, dense_size, (dense_size, taxonomy.n_subcategories))
    params["sub.b"] = np.zeros(taxonomy.n_subcategories)
    frozen = frozenset(k for k in params if k.endswith(".emb")) if freeze_embeddings else frozenset()
    return ClassifierNetwork(
        taxonomy=taxonomy,
        encoder=encoder,
        tower_tokens=tower_tokens,
        params=params,
        masking=masking,
        independent_heads=independent_heads,
        dense_size=dense_size,
        locale=locale,
        secondary_locale=secondary_locale,
        frozen=frozen,
    )


# -- functional surface -----------------------------------------------------


def forward(
    network: ClassifierNetwork,
    product: Product,
    mask: np.ndarray | None = None,
    teacher_category: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Category and subcategory distributions for one product.

    The subcategory head uses the mask row of ``teacher_category`` when
    given, otherwise the row of the arg-max category.
    """
    _check_mask(network, mask)
    batch = network.encode([product], with_labels=False)
    teacher = None if teacher_category is None else np.array([teacher_category])
    out = network._forward(batch, teacher, mask)
    return out["p_cat"][0], out["p_sub"][0]


def loss(network: ClassifierNetwork, product: Product, gold_cat: int, gold_subcat: int,
         mask: np.ndarray | None = None) -> float:
    _check_mask(network, mask)
    batch = network.encode([product], with_labels=False)
    batch.cat[:] = gold_cat
    batch.sub[:] = gold_subcat
    value, _ = network.loss_and_grads(batch, need_grads=False, mask=mask)
    return value


def compute_gradients(
    network: ClassifierNetwork,
    batch: Sequence[Product] | EncodedBatch,
    mask: np.ndarray | None = None,
    scale: float = 1.0,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean batch loss and its exact gradient for every parameter."""
    _check_mask(network, mask)
    if not isinstance(batch, EncodedBatch):
        batch = network.encode(list(batch))
    value, grads = network.loss_and_grads(batch, scale=scale, mask=mask)
    assert grads is not None
    return value, grads


def predict_hierarchical(
    network: ClassifierNetwork, product: Product, mask: np.ndarray | None = None
) -> tuple[str, str, np.ndarray, np.ndarray]:
    _check_mask(network, mask)
    p_cat, p_sub = network.predict_proba(network.encode([product], with_labels=False), mask)
    c, s = int(np.argmax(p_cat[0])), int(np.argmax(p_sub[0]))
    return network.taxonomy.categories[c], network.taxonomy.subcategories[s], p_cat[0], p_sub[0]


def _check_mask(network: ClassifierNetwork, mask: np.ndarray | None) -> None:
    if mask is not None and np.shape(mask) != network.mask.shape:
        raise ValueError(
            f"mask shape {np.shape(mask)} does not match network taxonomy {network.mask.shape}"
        )
