"""Single-file, versioned model container.

Layout (integers little-endian)::

    magic  b"PRODTAX\\x00"
    u16 major, u16 minor
    section*   : 4-byte tag, u64 payload length, payload
    footer     : b"SHA2" + sha256 over every preceding byte

Sections: ``HEAD`` (JSON: family, encoder settings, metadata, embedding
references), ``TAXO`` (JSON taxonomy), ``VOCB`` (JSON token lists and
document frequencies), ``PARM`` (named float64/int64 arrays) and, when
embeddings are inlined, ``EMBD`` (named arrays plus a JSON token list).

Minor 0 containers lack ``secondary_locale`` and ``frozen`` in ``HEAD``;
they load with those fields defaulted.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from .corpus import Taxonomy
from .errors import ContainerError, IncompatibleVersionError
from .features import EmbeddingTable, Vocabulary, file_sha256, load_embeddings
from .linear import LinearModel
from .neural import ClassifierNetwork, EncoderConfig
from .pipeline import LinearClassifier

__all__ = ["FORMAT_VERSION", "load_model", "read_sections", "save_model"]

MAGIC = b"PRODTAX\x00"
FORMAT_VERSION = (1, 1)
_FOOTER_TAG = b"SHA2"
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i8")}
_DTYPE_CODES = {np.dtype("<f8"): 0, np.dtype("<i8"): 1}


def _pack_arrays(arrays: Mapping[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dtype = np.dtype("<i8") if np.issubdtype(arr.dtype, np.integer) else np.dtype("<f8")
        arr = np.ascontiguousarray(arr, dtype=dtype)
        raw_name = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw_name)))
        buf.write(raw_name)
        buf.write(struct.pack("<BI", _DTYPE_CODES[dtype], arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes(order="C"))
    return buf.getvalue()


def _unpack_arrays(payload: bytes) -> dict[str, np.ndarray]:
    view = memoryview(payload)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise ContainerError("truncated array section")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    arrays = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        code, ndim = struct.unpack("<BI", take(5))
        if code not in _DTYPES:
            raise ContainerError(f"unknown dtype code {code} for array {name!r}")
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        dtype = _DTYPES[code]
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        arrays[name] = np.frombuffer(bytes(take(size * dtype.itemsize)), dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    return arrays


def _json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def _write(path: Path, sections: list[tuple[bytes, bytes]], version: tuple[int, int]) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HH", *version))
    for tag, payload in sections:
        buf.write(tag)
        buf.write(struct.pack("<Q", len(payload)))
        buf.write(payload)
    body = buf.getvalue()
    path.write_bytes(body + _FOOTER_TAG + hashlib.sha256(body).digest())


def read_sections(path: str | Path) -> tuple[tuple[int, int], dict[str, bytes]]:
    """Validate the envelope of a container and return its raw sections."""
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 4 + 36 or data[: len(MAGIC)] != MAGIC:
        raise ContainerError(f"{path} is not a model container (bad magic or truncated)")
    major, minor = struct.unpack("<HH", data[len(MAGIC) : len(MAGIC) + 4])
    if major != FORMAT_VERSION[0] or minor > FORMAT_VERSION[1]:
        raise IncompatibleVersionError(
            f"container format {major}.{minor} is not supported (this build reads "
            f"{FORMAT_VERSION[0]}.0 to {FORMAT_VERSION[0]}.{FORMAT_VERSION[1]})"
        )
    body, footer = data[:-36], data[-36:]
    if footer[:4] != _FOOTER_TAG or hashlib.sha256(body).digest() != footer[4:]:
        raise ContainerError(f"{path} failed the content hash check (corrupt or truncated)")
    sections: dict[str, bytes] = {}
    pos = len(MAGIC) + 4
    while pos < len(body):
        if pos + 12 > len(body):
            raise ContainerError("truncated section header")
        tag = body[pos : pos + 4].decode("ascii", errors="replace")
        (length,) = struct.unpack("<Q", body[pos + 4 : pos + 12])
        pos += 12
        if pos + length > len(body):
            raise ContainerError(f"section {tag} runs past the end of the file")
        sections[tag] = body[pos : pos + length]
        pos += length
    return (major, minor), sections


def _embedding_refs(paths: Mapping[str, str | Path | None] | None) -> dict:
    return {
        source: {"path": str(Path(p).resolve()), "sha256": file_sha256(p)}
        for source, p in (paths or {}).items()
        if p is not None
    }


def save_model(
    model: LinearClassifier | ClassifierNetwork,
    path: str | Path,
    metadata: Mapping | None = None,
    embedding_paths: Mapping[str, str | Path] | None = None,
    inline_embeddings: bool = False,
    minor_version: int = FORMAT_VERSION[1],
) -> None:
    """Write ``model`` to ``path``.

    Linear models need their embedding tables at prediction time: either
    pass ``embedding_paths`` (stored as path + sha256) or set
    ``inline_embeddings``. Neural networks carry their fine-tuned embedding
    rows among the parameters; paths are recorded for provenance only.
    """
    path = Path(path)
    head: dict = {"family": model.family, "metadata": dict(metadata or {})}
    sections: list[tuple[bytes, bytes]] = []
    if isinstance(model, ClassifierNetwork):
        head.update(
            encoder=model.encoder.to_dict(),
            masking=model.masking,
            independent_heads=model.independent_heads,
            dense_size=model.dense_size,
            locale=model.locale,
        )
        if minor_version >= 1:
            head.update(secondary_locale=model.secondary_locale, frozen=sorted(model.frozen))
        head["embeddings"] = _embedding_refs(embedding_paths)
        vocab = {"tower_tokens": [list(t) for t in model.tower_tokens]}
        params = model.params
        embd = None
    elif isinstance(model, LinearClassifier):
        head.update(locale=model.locale, C=model.category_model.C)
        if minor_version >= 1:
            head["secondary_locale"] = model.secondary_locale
        refs = _embedding_refs(embedding_paths)
        head["embeddings"] = {} if inline_embeddings else {s: r for s, r in refs.items() if s in model.tables}
        missing = [s for s in model.tables if s not in head["embeddings"]]
        if missing and not inline_embeddings:
            raise ContainerError(
                f"no embedding file reference for {', '.join(missing)}; pass embedding_paths or inline_embeddings"
            )
        vocab = {
            source: {"tokens": list(v.tokens), "df": v.document_frequency.tolist(), "n": v.document_count}
            for source, v in model.vocabularies.items()
        }
        vocab["labels"] = {
            "category": list(model.category_model.labels),
            "subcategory": list(model.subcategory_model.labels),
        }
        params = {
            "category.W": model.category_model.weights,
            "category.b": model.category_model.biases,
            "subcategory.W": model.subcategory_model.weights,
            "subcategory.b": model.subcategory_model.biases,
        }
        embd = None
        if inline_embeddings:
            embd = {
                "tokens": {s: list(t.tokens) for s, t in model.tables.items()},
                "arrays": {s: t.vectors for s, t in model.tables.items()},
            }
    else:
        raise TypeError(f"cannot persist {type(model).__name__}")

    sections.append((b"HEAD", _json(head)))
    sections.append((b"TAXO", _json(model.taxonomy.to_dict())))
    sections.append((b"VOCB", _json(vocab)))
    sections.append((b"PARM", _pack_arrays(params)))
    if embd is not None:
        tokens = _json(embd["tokens"])
        sections.append((b"EMBD", struct.pack("<Q", len(tokens)) + tokens + _pack_arrays(embd["arrays"])))
    _write(path, sections, (FORMAT_VERSION[0], minor_version))


def _resolve_embedding(ref: Mapping, container: Path) -> EmbeddingTable:
    candidates = [Path(ref["path"]), container.parent / Path(ref["path"]).name]
    for cand in candidates:
        if cand.exists():
            digest = file_sha256(cand)
            if digest != ref["sha256"]:
                raise ContainerError(f"embedding file {cand} changed since the model was saved (sha256 mismatch)")
            return load_embeddings(cand)
    raise ContainerError(f"embedding file {ref['path']} referenced by the model was not found")


def load_model(path: str | Path) -> tuple[LinearClassifier | ClassifierNetwork, dict]:
    """Read a container; returns the model and its metadata dict."""
    path = Path(path)
    (_major, minor), sections = read_sections(path)
    try:
        head = json.loads(sections["HEAD"])
        taxonomy = Taxonomy.from_dict(json.loads(sections["TAXO"]))
        vocab = json.loads(sections["VOCB"])
    except KeyError as exc:
        raise ContainerError(f"container is missing section {exc}") from None
    params = _unpack_arrays(sections["PARM"])
    meta = dict(head.get("metadata", {}))
    meta["format_version"] = f"{_major}.{minor}"
    meta["embeddings"] = head.get("embeddings", {})
    if head["family"] == "neural":
        net = ClassifierNetwork(
            taxonomy=taxonomy,
            encoder=EncoderConfig(**head["encoder"]),
            tower_tokens=[tuple(t) for t in vocab["tower_tokens"]],
            params=params,
            masking=bool(head["masking"]),
            independent_heads=bool(head["independent_heads"]),
            dense_size=int(head["dense_size"]),
            locale=head["locale"],
            secondary_locale=head.get("secondary_locale", "generic"),
            frozen=frozenset(head.get("frozen", ())),
        )
        return net, meta
    if head["family"] == "linear":
        sources = [s for s in ("primary", "secondary") if s in vocab]
        vocabularies = {
            s: Vocabulary(tuple(vocab[s]["tokens"]), np.array(vocab[s]["df"], dtype=np.int64), int(vocab[s]["n"]))
            for s in sources
        }
        if "EMBD" in sections:
            raw = sections["EMBD"]
            (n,) = struct.unpack("<Q", raw[:8])
            tokens = json.loads(raw[8 : 8 + n])
            arrays = _unpack_arrays(raw[8 + n :])
            tables = {s: EmbeddingTable(tuple(tokens[s]), arrays[s]) for s in sources}
        else:
            tables = {s: _resolve_embedding(head["embeddings"][s], path) for s in sources}
        C = float(head.get("C", 1.0))
        clf = LinearClassifier(
            taxonomy=taxonomy,
            category_model=LinearModel(params["category.W"], params["category.b"], tuple(vocab["labels"]["category"]), C),
            subcategory_model=LinearModel(
                params["subcategory.W"], params["subcategory.b"], tuple(vocab["labels"]["subcategory"]), C
            ),
            vocabularies=vocabularies,
            tables=tables,
            locale=head["locale"],
            secondary_locale=head.get("secondary_locale", "generic"),
        )
        return clf, meta
    raise ContainerError(f"unknown model family {head['family']!r}")
