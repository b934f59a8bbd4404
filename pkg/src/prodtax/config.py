"""Run configuration: defaults, ``key=value`` config files and CLI flag overrides.

Precedence is flag > config file > default. Config-file keys are the long
flag names without the leading dashes (``learning-rate = 0.001``); ``#``
starts a comment.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError, DataError
from .neural.network import ENCODER_VARIANTS, TOWER_KINDS

__all__ = ["COMMANDS", "RunConfig", "parse_bool", "read_config_file", "resolve_config"]

COMMANDS = ("stats", "train", "crossval", "eval", "predict", "audit", "synth")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_bool(text: str | bool) -> bool:
    if isinstance(text, bool):
        return text
    low = text.strip().lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


@dataclass
class RunConfig:
    command: str = "train"
    data: str | None = None
    external: list[str] = field(default_factory=list)
    col_title: str = "title"
    col_title2: str | None = None
    col_category: str = "category"
    col_subcategory: str = "subcategory"
    delimiter: str = ","
    namespace_subcategories: bool = False
    locale: str = "turkish"
    model: str = "neural"
    encoder: str | None = None
    tower: str = "bi_recurrent"
    hidden_size: int = 200
    dense_size: int = 100
    max_length: int = 32
    mask: bool | None = None
    bilingual: bool = False
    independent_heads: bool = False
    embeddings_primary: str | None = None
    embeddings_secondary: str | None = None
    inline_embeddings: bool = False
    freeze_embeddings: bool = False
    embedding_dim: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 100
    patience: int = 10
    C: float = 1.0
    linear_epochs: int = 30
    seed: int = 0
    out: str | None = None
    folds: int = 5
    train_fraction: float = 0.9
    crossval: bool = False
    model_path: str | None = None
    title: list[str] = field(default_factory=list)
    input: str | None = None
    probabilities: bool = False
    limit: int = 50
    ngram: int = 2
    min_count: int = 1
    top: int = 20
    histogram: str | None = None
    titles_per_subcategory: int = 200

    @property
    def masking(self) -> bool:
        return self.model == "neural" if self.mask is None else self.mask

    @property
    def encoder_variant(self) -> str:
        if self.encoder is not None:
            return self.encoder
        return "dual_tower" if self.bilingual else "mean_pool"

    def validate(self) -> RunConfig:
        """Raise a named error for every invalid combination, before any work."""
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.model not in ("linear", "neural"):
            raise ConfigError(f"--model must be linear or neural, not {self.model!r}")
        if self.encoder is not None and self.encoder not in ENCODER_VARIANTS:
            raise ConfigError(f"--encoder must be one of {', '.join(ENCODER_VARIANTS)}")
        if self.tower not in TOWER_KINDS:
            raise ConfigError(f"--tower must be one of {', '.join(TOWER_KINDS)}")
        if self.locale not in ("turkish", "generic"):
            raise ConfigError("--locale must be turkish or generic")
        if self.mask and self.model != "neural":
            raise ConfigError("--mask requires --model neural")
        if self.model == "linear" and self.encoder is not None:
            raise ConfigError("--encoder only applies to --model neural")
        trains = self.command in ("train", "crossval")
        if self.bilingual and trains:
            if not self.embeddings_secondary:
                raise ConfigError("--bilingual requires --embeddings-secondary")
            if not self.col_title2:
                raise ConfigError("--bilingual requires --col-title2")
            if self.model == "neural" and self.encoder_variant != "dual_tower":
                raise ConfigError("--bilingual with the neural model requires --encoder dual_tower")
        elif self.encoder_variant == "dual_tower" and not self.bilingual:
            raise ConfigError("--encoder dual_tower requires --bilingual")
        if self.model == "linear" and trains and not self.embeddings_primary:
            raise ConfigError("--model linear requires --embeddings-primary")
        for name in ("hidden_size", "dense_size", "max_length", "embedding_dim", "batch_size", "max_epochs",
                     "patience", "linear_epochs", "limit", "ngram", "min_count", "top", "titles_per_subcategory"):
            if getattr(self, name) < 1:
                raise ConfigError(f"--{name.replace('_', '-')} must be >= 1")
        if self.learning_rate <= 0 or self.C <= 0:
            raise ConfigError("--learning-rate and --C must be positive")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("--train-fraction must lie strictly between 0 and 1")
        if self.folds < 2:
            raise ConfigError("--folds must be >= 2")
        if len(self.delimiter) != 1:
            raise ConfigError("--delimiter must be a single character")

        needs_data = self.command in ("stats", "train", "crossval", "audit")
        if needs_data and not self.data:
            raise ConfigError(f"`{self.command}` requires --data")
        if self.command in ("eval", "predict", "audit") and not self.model_path:
            raise ConfigError(f"`{self.command}` requires --model-path")
        if self.command == "eval" and not self.external:
            raise ConfigError("`eval` requires at least one external dataset path")
        if self.command == "predict" and not (self.title or self.input):
            raise ConfigError("`predict` requires --title or --input")
        if self.command == "synth" and not self.out:
            raise ConfigError("`synth` requires --out")

        for label, path in (("--data", self.data), ("--model-path", self.model_path), ("--input", self.input),
                            ("--embeddings-primary", self.embeddings_primary),
                            ("--embeddings-secondary", self.embeddings_secondary)):
            if path and self.command != "synth" and not Path(path).exists():
                raise DataError(f"{label} file not found: {path}")
        for path in self.external:
            if not Path(path).exists():
                raise DataError(f"external dataset not found: {path}")
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, value: Any) -> Any:
    kind = str(_FIELDS[name].type)
    if value is None:
        return None
    if name == "delimiter" and value in ("\\t", "tab", "TAB"):
        return "\t"
    try:
        if kind.startswith("bool"):
            return parse_bool(value)
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind.startswith("list"):
            return list(value) if isinstance(value, (list, tuple)) else [s for s in str(value).split(",") if s]
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {value!r}") from exc
    return value


def read_config_file(path: str | Path) -> dict[str, Any]:
    values: dict[str, Any] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        name = key.lstrip("-").replace("-", "_")
        if name == "c":
            name = "C"
        if name not in _FIELDS or name == "command":
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[name] = _coerce(name, value)
    return values


def resolve_config(command: str, flags: dict[str, Any], config_path: str | None = None) -> RunConfig:
    """Merge defaults, the optional config file and explicitly given flags."""
    merged: dict[str, Any] = {}
    if config_path:
        merged.update(read_config_file(config_path))
    merged.update({k: _coerce(k, v) for k, v in flags.items() if k in _FIELDS})
    merged["command"] = command
    return RunConfig(**merged).validate()
