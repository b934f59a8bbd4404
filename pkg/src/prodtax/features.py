"""Tokenization, TF-IDF statistics, embedding tables and weighted title vectors."""

from __future__ import annotations

import hashlib
import math
import re
import unicodedata
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmbeddingFormatError

__all__ = [
    "LOCALES",
    "DocVector",
    "EmbeddingTable",
    "Vocabulary",
    "embed_corpus",
    "embed_title_weighted",
    "file_sha256",
    "fit_tfidf",
    "load_embeddings",
    "locale_lower",
    "save_embeddings",
    "tokenize",
    "write_vocabulary",
]

LOCALES = ("turkish", "generic")

TokenSequence = tuple[str, ...]

# letters/digits runs; underscore counts as punctuation
_TOKEN_RE = re.compile(r"[^\W_]+")


def locale_lower(text: str, locale: str = "turkish") -> str:
    """Lowercase ``text`` honouring the Turkish dotted/dotless i pair."""
    if locale not in LOCALES:
        raise ValueError(f"unknown locale {locale!r}; expected one of {LOCALES}")
    text = unicodedata.normalize("NFC", text)
    if locale == "turkish":
        text = text.replace("İ", "i").replace("I", "ı")
    return unicodedata.normalize("NFC", text.lower())


def tokenize(title: str, locale: str = "turkish") -> TokenSequence:
    """Split a title into lowercased word and number tokens.

    Punctuation and whitespace separate tokens and are discarded.

    >>> tokenize("Bounty 57 gram")
    ('bounty', '57', 'gram')
    >>> tokenize("Dr. Oetker", "generic")
    ('dr', 'oetker')
    """
    return tuple(_TOKEN_RE.findall(locale_lower(title, locale)))


@dataclass(frozen=True)
class Vocabulary:
    """Document frequencies over a title corpus.

    Tokens are indexed in sorted order so two fits on the same corpus are
    identical regardless of title order.
    """

    tokens: tuple[str, ...]
    document_frequency: np.ndarray
    document_count: int
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return (
            self.tokens == other.tokens
            and self.document_count == other.document_count
            and np.array_equal(self.document_frequency, other.document_frequency)
        )

    def df(self, token: str) -> int:
        i = self.index.get(token)
        return 0 if i is None else int(self.document_frequency[i])

    def idf(self, token: str) -> float:
        """Smoothed inverse document frequency ``ln((1+N)/(1+df)) + 1``."""
        return math.log((1 + self.document_count) / (1 + self.df(token))) + 1.0

    def idf_vector(self) -> np.ndarray:
        n = self.document_count
        return np.log((1.0 + n) / (1.0 + self.document_frequency)) + 1.0


def fit_tfidf(corpus: Iterable[Sequence[str]]) -> Vocabulary:
    docs = list(corpus)
    if not docs:
        raise ValueError("cannot fit TF-IDF on an empty corpus")
    df: Counter[str] = Counter()
    for tokens in docs:
        df.update(set(tokens))
    tokens = tuple(sorted(df))
    return Vocabulary(
        tokens=tokens,
        document_frequency=np.array([df[t] for t in tokens], dtype=np.int64),
        document_count=len(docs),
    )


def write_vocabulary(vocab: Vocabulary, path: str | Path, delimiter: str = "\t") -> None:
    """Export ``token, df, idf`` rows for inspection."""
    idf = vocab.idf_vector()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(delimiter.join(("token", "df", "idf")) + "\n")
        for i, tok in enumerate(vocab.tokens):
            fh.write(f"{tok}{delimiter}{vocab.document_frequency[i]}{delimiter}{float(idf[i])!r}\n")


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    tokens: tuple[str, ...]
    vectors: np.ndarray
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[1] < 1:
            raise ValueError("embedding vectors must form a (V, d) array with d >= 1")
        if vectors.shape[0] != len(self.tokens):
            raise ValueError("token count does not match vector rows")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding table contains non-finite entries")
        index = {}
        for i, tok in enumerate(self.tokens):
            if tok in index:
                raise ValueError(f"duplicate token {tok!r}")
            index[tok] = i
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "index", index)

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def vector(self, token: str) -> np.ndarray:
        return self.vectors[self.index[token]]


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _is_int(s: str) -> bool:
    try:
        int(s)
    except ValueError:
        return False
    return True


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Read a plain-text embedding file.

    Both the word2vec text layout (first line ``V d``) and the headerless
    GloVe layout are accepted; the header is recognised when line 1 holds
    exactly two integers. Binary and compressed files are rejected.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4096)
    if head[:2] == b"\x1f\x8b" or b"\x00" in head:
        raise EmbeddingFormatError(
            f"{path} looks binary or compressed; only plain-text embeddings are supported"
        )
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise EmbeddingFormatError(f"{path} is not UTF-8 text ({exc.reason})") from exc

    tokens: list[str] = []
    rows: list[list[float]] = []
    seen: set[str] = set()
    dim: int | None = None
    declared: int | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if lineno == 1 and len(parts) == 2 and all(_is_int(p) for p in parts):
            declared, dim = int(parts[0]), int(parts[1])
            if dim < 1:
                raise EmbeddingFormatError("declared dimension must be >= 1", lineno)
            continue
        token, values = parts[0], parts[1:]
        if dim is None:
            dim = len(values)
            if dim < 1:
                raise EmbeddingFormatError("row has no vector values", lineno)
        if len(values) != dim:
            raise EmbeddingFormatError(
                f"vector for {token!r} has {len(values)} values, expected {dim}", lineno
            )
        if token in seen:
            raise EmbeddingFormatError(f"duplicate token {token!r}", lineno)
        try:
            vec = [float(v) for v in values]
        except ValueError as exc:
            raise EmbeddingFormatError(f"non-numeric vector entry ({exc})", lineno) from exc
        if not all(math.isfinite(v) for v in vec):
            raise EmbeddingFormatError(f"non-finite vector entry for {token!r}", lineno)
        seen.add(token)
        tokens.append(token)
        rows.append(vec)
    if declared is not None and declared != len(tokens):
        raise EmbeddingFormatError(f"header declares {declared} vectors but file holds {len(tokens)}")
    if dim is None:
        raise EmbeddingFormatError(f"{path} contains no vectors")
    vectors = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    return EmbeddingTable(tokens=tuple(tokens), vectors=vectors)


def save_embeddings(table: EmbeddingTable, path: str | Path, header: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"{len(table)} {table.dimension}\n")
        for tok, vec in zip(table.tokens, table.vectors):
            fh.write(tok + " " + " ".join(repr(float(v)) for v in vec) + "\n")


@dataclass(frozen=True, eq=False)
class DocVector:
    values: np.ndarray
    oov_ratio: float


def embed_title_weighted(
    tokens: Sequence[str], vocab: Vocabulary, table: EmbeddingTable
) -> DocVector:
    """TF-IDF weighted mean of the token embeddings of one title.

    Tokens missing from the vocabulary or the table are skipped and counted
    in ``oov_ratio``; a title with no usable token maps to the zero vector.
    """
    counts = Counter(tokens)
    total = sum(counts.values())
    acc = np.zeros(table.dimension)
    weight_sum = 0.0
    used = 0
    # sorted so the float summation order ignores token order
    for tok in sorted(counts):
        if tok not in vocab.index or tok not in table.index:
            continue
        w = counts[tok] * vocab.idf(tok)
        acc += w * table.vectors[table.index[tok]]
        weight_sum += w
        used += counts[tok]
    if used == 0:
        return DocVector(values=np.zeros(table.dimension), oov_ratio=1.0)
    return DocVector(values=acc / weight_sum, oov_ratio=1.0 - used / total)


def embed_corpus(
    corpus: Iterable[Sequence[str]], vocab: Vocabulary, table: EmbeddingTable
) -> np.ndarray:
    """Stack weighted title vectors into an ``(n, d)`` matrix."""
    rows = [embed_title_weighted(toks, vocab, table).values for toks in corpus]
    if not rows:
        return np.zeros((0, table.dimension))
    return np.vstack(rows)
