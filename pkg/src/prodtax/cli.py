"""Command-line entry point: ``prodtax {stats,train,crossval,eval,predict,audit,synth}``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 training or
numeric failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from .corpus import Dataset, Product, Schema, corpus_stats, load_dataset, load_products, train_val_split
from .errors import ConfigError, ProdtaxError
from .evaluation import (
    CrossvalResult,
    cross_platform_eval,
    evaluate_model,
    misprediction_report,
    render_audit,
    render_crossval,
    render_platform_table,
    run_crossval,
)
from .features import load_embeddings
from .metrics import MetricsReport
from .neural import EncoderConfig, TrainConfig
from .persistence import load_model, save_model
from .pipeline import ModelSpec
from .config import RunConfig, resolve_config

log = logging.getLogger("prodtax")

MODEL_FILE = "model.ptx"

# placeholder labels for unlabeled prediction inputs
_UNLABELED = "-"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_shared(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    g = p.add_argument_group("data")
    g.add_argument("--data", default=S, help="labeled dataset (delimiter-separated, header row)")
    g.add_argument("--config", default=S, help="key = value config file; flags take precedence")
    g.add_argument("--col-title", default=S, help="header of the primary title column (default: title)")
    g.add_argument("--col-title2", default=S, help="header of the secondary-language title column")
    g.add_argument("--col-category", default=S, help="header of the category column (default: category)")
    g.add_argument("--col-subcategory", default=S, help="header of the subcategory column (default: subcategory)")
    g.add_argument("--delimiter", default=S, help="field delimiter (default ','; use 'tab' for TSV)")
    g.add_argument("--namespace-subcategories", action="store_true", default=S,
                   help="prefix subcategories with their category so labels may repeat across categories")
    g.add_argument("--locale", choices=("turkish", "generic"), default=S, help="lowercasing rules for primary titles")
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=("linear", "neural"), default=S, help="model family (default: neural)")
    g.add_argument("--encoder", choices=("mean_pool", "bi_recurrent", "dual_tower"), default=S)
    g.add_argument("--tower", choices=("mean_pool", "bi_recurrent"), default=S, help="tower encoder inside dual_tower")
    g.add_argument("--hidden-size", type=int, default=S, help="LSTM units per direction (default 200)")
    g.add_argument("--dense-size", type=int, default=S, help="shared dense layer width (default 100)")
    g.add_argument("--max-length", type=int, default=S, help="token cap per title (default 32)")
    g.add_argument("--mask", action=argparse.BooleanOptionalAction, default=S,
                   help="masked subcategory softmax (default: on for neural)")
    g.add_argument("--bilingual", action="store_true", default=S)
    g.add_argument("--independent-heads", action="store_true", default=S,
                   help="separate encoder + dense layer per head")
    g.add_argument("--embeddings-primary", default=S, metavar="PATH")
    g.add_argument("--embeddings-secondary", default=S, metavar="PATH")
    g.add_argument("--inline-embeddings", action="store_true", default=S,
                   help="bundle embedding vectors into the saved model")
    g.add_argument("--freeze-embeddings", action="store_true", default=S)
    g.add_argument("--embedding-dim", type=int, default=S, help="dimension when no embedding file is given")
    g = p.add_argument_group("training")
    g.add_argument("--learning-rate", type=float, default=S, help="Adam step size (default 1e-3)")
    g.add_argument("--batch-size", type=int, default=S)
    g.add_argument("--max-epochs", type=int, default=S)
    g.add_argument("--patience", type=int, default=S, help="early stopping patience in epochs")
    g.add_argument("--C", type=float, default=S, help="SVM regularization constant (default 1.0)")
    g.add_argument("--linear-epochs", type=int, default=S)
    g.add_argument("--train-fraction", type=float, default=S, help="train share of the train/validation split")
    g.add_argument("--folds", type=int, default=S)
    g.add_argument("--seed", type=int, default=S)
    g.add_argument("--out", default=S, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="prodtax", description="Two-level product title classification")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("stats", help="title length distribution and frequent n-grams")
    _add_shared(p)
    p.add_argument("--ngram", type=int, default=argparse.SUPPRESS)
    p.add_argument("--min-count", type=int, default=argparse.SUPPRESS)
    p.add_argument("--top", type=int, default=argparse.SUPPRESS)
    p.add_argument("--histogram", default=argparse.SUPPRESS, help="write title-length counts to this file")

    p = sub.add_parser("train", help="train a model and save it")
    _add_shared(p)
    p.add_argument("--crossval", action="store_true", default=argparse.SUPPRESS,
                   help="run k-fold cross-validation before the final fit")

    p = sub.add_parser("crossval", help="stratified k-fold cross-validation report")
    _add_shared(p)

    p = sub.add_parser("eval", help="evaluate a saved model on other retailers' catalogs")
    _add_shared(p)
    p.add_argument("--model-path", default=argparse.SUPPRESS)
    p.add_argument("external", nargs="+", help="external dataset files")

    p = sub.add_parser("predict", help="predict (category, subcategory) for titles")
    _add_shared(p)
    p.add_argument("--model-path", default=argparse.SUPPRESS)
    p.add_argument("--title", action="append", default=argparse.SUPPRESS)
    p.add_argument("--input", default=argparse.SUPPRESS,
                   help="file with one title per line (tab separates an optional secondary title)")
    p.add_argument("--probabilities", action="store_true", default=argparse.SUPPRESS)

    p = sub.add_parser("audit", help="list mispredicted products, most confident first")
    _add_shared(p)
    p.add_argument("--model-path", default=argparse.SUPPRESS)
    p.add_argument("--limit", type=int, default=argparse.SUPPRESS)

    p = sub.add_parser("synth", help="write a seeded synthetic catalog and embedding files")
    _add_shared(p)
    p.add_argument("--titles-per-subcategory", type=int, default=argparse.SUPPRESS)
    return parser


def _schema(cfg: RunConfig) -> Schema:
    return Schema(cfg.col_title, cfg.col_category, cfg.col_subcategory, cfg.col_title2)


def _load(cfg: RunConfig, path: str | None = None) -> Dataset:
    return load_dataset(path or cfg.data, _schema(cfg), cfg.delimiter, cfg.namespace_subcategories)


def _out_dir(cfg: RunConfig) -> Path | None:
    if not cfg.out:
        return None
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def model_spec(cfg: RunConfig) -> ModelSpec:
    tables = {}
    if cfg.embeddings_primary:
        tables["primary"] = load_embeddings(cfg.embeddings_primary)
    if cfg.bilingual and cfg.embeddings_secondary:
        tables["secondary"] = load_embeddings(cfg.embeddings_secondary)
    return ModelSpec(
        family=cfg.model,
        encoder=EncoderConfig(
            variant=cfg.encoder_variant if cfg.model == "neural" else "mean_pool",
            hidden_size=cfg.hidden_size,
            tower=cfg.tower,
            max_length=cfg.max_length,
        ),
        masking=cfg.masking,
        independent_heads=cfg.independent_heads,
        train=TrainConfig(
            learning_rate=cfg.learning_rate,
            batch_size=cfg.batch_size,
            max_epochs=cfg.max_epochs,
            early_stopping_patience=cfg.patience,
            seed=cfg.seed,
        ),
        dense_size=cfg.dense_size,
        C=cfg.C,
        linear_epochs=cfg.linear_epochs,
        locale=cfg.locale,
        bilingual=cfg.bilingual,
        embedding_dim=cfg.embedding_dim,
        freeze_embeddings=cfg.freeze_embeddings,
        tables=tables,
    )


def _model_name(cfg: RunConfig) -> str:
    if cfg.model == "linear":
        return "linear-svm" + ("-bilingual" if cfg.bilingual else "")
    name = cfg.encoder_variant
    return name + ("-masked" if cfg.masking else "")


def render_report(report: MetricsReport) -> str:
    rows = [
        ("accuracy (cat)", report.accuracy_cat),
        ("accuracy (sub)", report.accuracy_sub),
        ("WAF1 (cat)", report.waf1_cat),
        ("WAF1 (sub)", report.waf1_sub),
        ("ranking metric", report.rank_metric),
        ("consistency rate", report.hierarchy_consistency_rate),
    ]
    width = max(len(name) for name, _ in rows)
    return "".join(f"{name.ljust(width)}  {100 * v:6.2f}\n" for name, v in rows) + f"n = {report.n}\n"


# -- commands -----------------------------------------------------------------


def cmd_stats(cfg: RunConfig) -> str:
    ds = _load(cfg)
    st = corpus_stats(ds, cfg.ngram, cfg.min_count, cfg.locale)
    q = st.length_quantiles
    lines = [
        f"titles: {st.title_count}",
        f"mean title length: {st.mean_title_length:.2f} tokens",
        "length quantiles: " + ", ".join(f"{k}={v:g}" for k, v in q.items()),
        f"categories: {ds.taxonomy.n_categories}, subcategories: {ds.taxonomy.n_subcategories}",
        f"{cfg.ngram}-grams with count >= {cfg.min_count}: {len(st.ngram_counts)}",
    ]
    lines += [f"  {' '.join(g)}\t{c}" for g, c in st.top_ngrams(cfg.top)]
    if cfg.histogram:
        counts: dict[int, int] = {}
        for n in st.lengths:
            counts[n] = counts.get(n, 0) + 1
        with open(cfg.histogram, "w", encoding="utf-8") as fh:
            fh.write("length,count\n")
            fh.writelines(f"{n},{counts[n]}\n" for n in sorted(counts))
    return "\n".join(lines) + "\n"


def cmd_crossval(cfg: RunConfig, dataset: Dataset | None = None, spec: ModelSpec | None = None) -> str:
    dataset = dataset or _load(cfg)
    spec = spec or model_spec(cfg)
    result: CrossvalResult = run_crossval(spec, dataset, cfg.folds, cfg.seed, cfg.train_fraction)
    name = _model_name(cfg)
    text = render_crossval({name: result})
    out = _out_dir(cfg)
    if out:
        (out / "crossval.txt").write_text(text, encoding="utf-8")
        (out / "crossval.csv").write_text(render_crossval({name: result}, delimiter=","), encoding="utf-8")
    return text


def cmd_train(cfg: RunConfig, created_at: str | None = None) -> str:
    dataset = _load(cfg)
    spec = model_spec(cfg)
    parts = []
    if cfg.crossval:
        parts.append(f"{cfg.folds}-fold cross-validation\n" + cmd_crossval(cfg, dataset, spec))
    train, val = train_val_split(dataset, cfg.train_fraction, cfg.seed)
    model, history = spec.fit(train, val, cfg.seed)
    report = evaluate_model(model, val)
    out = _out_dir(cfg)
    if out:
        meta = {
            "seed": cfg.seed,
            "config": {k: v for k, v in vars(cfg).items() if k not in ("command", "out")},
            "validation": report.summary(),
            "created_at": created_at or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        }
        paths = {"primary": cfg.embeddings_primary}
        if cfg.bilingual:
            paths["secondary"] = cfg.embeddings_secondary
        save_model(model, out / MODEL_FILE, meta, embedding_paths=paths, inline_embeddings=cfg.inline_embeddings)
        if history is not None:
            (out / "training_log.tsv").write_text(history.to_tsv(), encoding="utf-8")
    if history is not None:
        parts.append(f"best epoch {history.best_epoch} of {len(history.epochs)}")
    parts.append("validation metrics (%)\n" + render_report(report))
    if out:
        parts.append(f"saved {out / MODEL_FILE}")
    return "\n".join(parts) + "\n"


def cmd_eval(cfg: RunConfig) -> str:
    model, _meta = load_model(cfg.model_path)
    externals = {}
    for path in cfg.external:
        products = load_products(path, _schema(cfg), cfg.delimiter, cfg.namespace_subcategories)
        externals[Path(path).stem] = products
    rows = cross_platform_eval(model, model.taxonomy, externals)
    text = render_platform_table(rows)
    out = _out_dir(cfg)
    if out:
        (out / "cross_platform.txt").write_text(text, encoding="utf-8")
        (out / "cross_platform.csv").write_text(render_platform_table(rows, delimiter=","), encoding="utf-8")
    return text


def _predict_inputs(cfg: RunConfig) -> list[tuple[str, str | None]]:
    items: list[tuple[str, str | None]] = [(t, None) for t in cfg.title]
    if cfg.input:
        for line in Path(cfg.input).read_text(encoding="utf-8").splitlines():
            primary, _, secondary = line.partition("\t")
            items.append((primary, secondary or None))
    return items


def cmd_predict(cfg: RunConfig) -> str:
    model, _meta = load_model(cfg.model_path)
    items = _predict_inputs(cfg)
    header = ["title", "category", "subcategory"] + (["sub_probability"] if cfg.probabilities else [])
    rows = []
    valid = [(i, Product(str(i), t, _UNLABELED, _UNLABELED, s)) for i, (t, s) in enumerate(items) if t.strip()]
    preds = dict(zip((i for i, _ in valid), model.predict([p for _, p in valid])))
    for i, (title, _secondary) in enumerate(items):
        if i not in preds:
            rows.append([title, "ERROR: empty title", ""] + ([""] if cfg.probabilities else []))
            continue
        q = preds[i]
        rows.append([title, q.category, q.subcategory] + ([f"{q.confidence:.4f}"] if cfg.probabilities else []))
    return "\n".join("\t".join(r) for r in [header] + rows) + "\n"


def cmd_audit(cfg: RunConfig) -> str:
    model, _meta = load_model(cfg.model_path)
    products = load_products(cfg.data, _schema(cfg), cfg.delimiter, cfg.namespace_subcategories)
    entries = misprediction_report(model, products, cfg.limit)
    text = render_audit(entries, delimiter=cfg.delimiter)
    out = _out_dir(cfg)
    if out:
        (out / "audit.csv").write_text(text, encoding="utf-8")
    return text


def cmd_synth(cfg: RunConfig) -> str:
    from .synthetic import make_corpus, write_corpus

    corpus = make_corpus(titles_per_subcategory=cfg.titles_per_subcategory, bilingual=cfg.bilingual, seed=cfg.seed)
    paths = write_corpus(corpus, cfg.out)
    return "".join(f"{k}: {v}\n" for k, v in paths.items())


COMMANDS = {
    "stats": cmd_stats,
    "train": cmd_train,
    "crossval": cmd_crossval,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "audit": cmd_audit,
    "synth": cmd_synth,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    verbose = args.pop("verbose")
    logging.basicConfig(level=logging.DEBUG if verbose > 1 else logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    config_path = args.pop("config", None)
    try:
        cfg = resolve_config(command, args, config_path)
        sys.stdout.write(COMMANDS[command](cfg))
    except ProdtaxError as exc:
        print(f"prodtax {command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, UnicodeDecodeError) as exc:
        print(f"prodtax {command}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"prodtax {command}: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
