"""Command-line entry point: prepare, stats, train, tune, predict, extract-dx."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import DEFAULT_SEED, ConfigError, RunConfig, build_config, read_config_file
from .corpus import (Corpus, CorpusError, Label, corpus_stats, filter_by_length, load_corpus,
                     note_record, with_extracted_demographics)
from .dxextract import (DxError, MalformedAnnotationError, StubTransport, TransportError,
                        build_prompt, extract_with_transport, load_prompt_defaults, load_rules,
                        normalize_diagnosis)
from .features import FeatureError, build_vocabulary, to_matrix, vectorize_all
from .models import ModelFileError, UnsupportedFamilyError, canonical_family, fit, load_model
from .models.io import dumps_model
from .preprocess import Document, load_lexicon, load_stopwords, preprocess_pipeline
from .resample import ResampleError, oversample, stratified_split
from .surrogate import SurrogateSpec, generate_corpus
from .tune import (GridError, bundled_grid, evaluate, grid_search, load_grid, performance_table,
                   timing_report)

log = logging.getLogger("psychnotes")


class MetadataMismatch(ValueError):
    pass


# exception type -> error category printed on failure (first match wins)
ERROR_CATEGORIES = (
    (ConfigError, "config"),
    (CorpusError, "input"),
    (GridError, "grid"),
    (UnsupportedFamilyError, "unsupported-family"),
    (ModelFileError, "model"),
    (MetadataMismatch, "metadata-mismatch"),
    (MalformedAnnotationError, "malformed-annotation"),
    (TransportError, "transport"),
    (DxError, "prompt"),
    (FeatureError, "data"),
    (ResampleError, "data"),
    (OSError, "io"),
    (json.JSONDecodeError, "input"),
    (ValueError, "invalid"),
)


def error_category(exc: BaseException) -> str:
    for kind, name in ERROR_CATEGORIES:
        if isinstance(exc, kind):
            return name
    return "internal"


# --------------------------------------------------------------- output helpers

class Outputs:
    def __init__(self, cfg: RunConfig, command: str):
        self.dir = Path(cfg.out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.meta = {"version": __version__, "config_hash": cfg.fingerprint(), "command": command}

    def path(self, name: str) -> Path:
        return self.dir / name

    def json(self, name: str, obj: dict) -> Path:
        p = self.path(name)
        p.write_text(json.dumps({"_meta": self.meta, **obj}, indent=2, sort_keys=True,
                                ensure_ascii=False, allow_nan=False) + "\n", encoding="utf-8")
        return p

    def jsonl(self, name: str, records) -> Path:
        p = self.path(name)
        with p.open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps({"_meta": self.meta}, sort_keys=True) + "\n")
            for rec in records:
                fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
        return p

    def text(self, name: str, body: str) -> Path:
        p = self.path(name)
        head = f"# psychnotes {self.meta['version']} config {self.meta['config_hash']}\n"
        p.write_text(head + body, encoding="utf-8")
        return p


def _say(msg: str) -> None:
    print(msg, flush=True)


# --------------------------------------------------------------- preprocessing state

def _resources(cfg: RunConfig):
    stop = load_stopwords(cfg.stopwords, cfg.retained)
    lex = load_lexicon(cfg.lexicon)
    return stop, lex


def _preprocessing_meta(cfg: RunConfig, stop, lex) -> dict:
    return {
        "stopwords": {"source": stop.source, "retained": cfg.retained or "bundled",
                      "sha256": stop.digest},
        "lexicon": {"source": lex.source, "sha256": lex.digest},
    }


def _resources_from_meta(cfg: RunConfig, meta: dict):
    """Reload the stopword list and lexicon a model was trained with."""
    pre = meta.get("preprocessing")
    if not pre:
        raise MetadataMismatch("model file records no preprocessing data")
    sw_src = cfg.stopwords or _meta_path(pre["stopwords"]["source"])
    retained = cfg.retained or _meta_path(pre["stopwords"].get("retained", "bundled"))
    lx_src = cfg.lexicon or _meta_path(pre["lexicon"]["source"])
    stop = load_stopwords(sw_src, retained)
    lex = load_lexicon(lx_src)
    if stop.digest != pre["stopwords"]["sha256"]:
        raise MetadataMismatch("stopword list differs from the one the model was trained with")
    if lex.digest != pre["lexicon"]["sha256"]:
        raise MetadataMismatch("lemma lexicon differs from the one the model was trained with")
    return stop, lex


def _meta_path(source: str) -> Optional[str]:
    return None if source == "bundled" or source.startswith("bundled:") else source


def _load_prepared(path):
    """Prepared corpus plus its token lists and the header metadata."""
    corpus = load_corpus(path)
    docs, header = [], {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            rec = json.loads(raw)
            if "_meta" in rec:
                header = rec["_meta"]
                continue
            if not isinstance(rec.get("tokens"), list):
                raise CorpusError("prepared record lacks a token list", lineno)
            docs.append(Document(str(rec["id"]), tuple(rec["tokens"])))
    if "preprocessing" not in header:
        raise CorpusError("not a prepared dataset (missing header); run `prepare` first", 1)
    return corpus, docs, header


def _require(cfg: RunConfig, key: str, flag: str):
    if getattr(cfg, key) is None:
        raise ConfigError(f"{flag} is required")
    return getattr(cfg, key)


# --------------------------------------------------------------- commands

def cmd_surrogate(cfg: RunConfig) -> int:
    out = Outputs(cfg, "surrogate")
    corpus = generate_corpus(cfg.seed, SurrogateSpec(n_f43=cfg.n_f43, n_f41=cfg.n_f41))
    path = out.jsonl("corpus.jsonl", (note_record(ln) for ln in corpus))
    _say(f"surrogate: wrote {len(corpus)} notes to {path}")
    return 0


def cmd_prepare(cfg: RunConfig) -> int:
    corpus = load_corpus(_require(cfg, "corpus", "--corpus"))
    kept = filter_by_length(corpus, cfg.min_chars)
    stop, lex = _resources(cfg)
    out = Outputs(cfg, "prepare")
    records = []
    for ln in kept:
        ln = with_extracted_demographics(ln)
        rec = note_record(ln)
        rec["tokens"] = list(preprocess_pipeline(ln.note, stop, lex).tokens)
        records.append(rec)
    out.meta = {**out.meta, "preprocessing": _preprocessing_meta(cfg, stop, lex),
                "min_chars": cfg.min_chars, "kept": len(kept),
                "dropped": len(corpus) - len(kept)}
    path = out.jsonl("prepared.jsonl", records)
    _say(f"prepare: kept {len(kept)} of {len(corpus)} notes, dropped {len(corpus) - len(kept)} "
         f"shorter than {cfg.min_chars} chars -> {path}")
    return 0


def cmd_stats(cfg: RunConfig) -> int:
    src = cfg.prepared or _require(cfg, "corpus", "--corpus or --prepared")
    corpus = load_corpus(src)
    corpus = Corpus(tuple(with_extracted_demographics(ln) for ln in corpus))
    report = corpus_stats(corpus)
    out = Outputs(cfg, "stats")
    out.json("stats.json", report.to_dict())
    out.text("stats.txt", report.render())
    sys.stdout.write(report.render())
    return 0


class _Experiment:
    """Split, vocabulary and vectors shared by train and tune."""

    def __init__(self, cfg: RunConfig):
        corpus, docs, header = _load_prepared(_require(cfg, "prepared", "--prepared"))
        self.header = header
        self.labels = np.array([int(l) for l in corpus.labels], dtype=np.intp)
        self.split = stratified_split([int(l) for l in corpus.labels], cfg.test_fraction, cfg.seed)
        train, test = list(self.split.train), list(self.split.test)
        self.vocab = build_vocabulary([docs[i] for i in train], cfg.min_df, cfg.max_df_ratio)
        self.train_vecs = vectorize_all([docs[i] for i in train], self.vocab)
        self.X_test = to_matrix(vectorize_all([docs[i] for i in test], self.vocab), len(self.vocab))
        self.y_train = self.labels[train]
        self.y_test = self.labels[test]
        self.ids_test = [corpus.notes[i].note.id for i in test]

    def oversampled_train(self, cfg: RunConfig):
        res = oversample(cfg.oversampler, self.train_vecs, self.y_train.tolist(), cfg.seed)
        return to_matrix(list(res.vectors), len(self.vocab)), np.asarray(res.labels, dtype=np.intp)

    def model_metadata(self, out: Outputs, cfg: RunConfig, extra: dict) -> dict:
        return {"provenance": out.meta, "preprocessing": self.header["preprocessing"],
                "oversampler": cfg.oversampler, "seed": cfg.seed,
                "test_fraction": cfg.test_fraction, **extra}


def _write_split(out: Outputs, split) -> None:
    out.json("split.json", json.loads(split.to_json()))


def cmd_train(cfg: RunConfig) -> int:
    family = canonical_family(cfg.family)
    exp = _Experiment(cfg)
    out = Outputs(cfg, "train")
    X, y = exp.oversampled_train(cfg)
    params = cfg.hyperparams()
    model = fit(family, X, y, params, cfg.seed)
    report = evaluate(model, exp.X_test, exp.y_test)
    _write_split(out, exp.split)
    meta = exp.model_metadata(out, cfg, {"hyperparameters": params,
                                         "test_accuracy": report.accuracy})
    out.path("model.json").write_text(dumps_model(model, exp.vocab, meta), encoding="utf-8")
    out.json("report.json", {
        "family": family, "hyperparameters": params, "oversampler": cfg.oversampler,
        "n_train": int(exp.y_train.size), "n_train_resampled": int(y.size),
        "n_test": int(exp.y_test.size), "vocabulary_size": len(exp.vocab),
        "test": report.to_dict(),
    })
    _say(f"train: {family} test accuracy {report.accuracy:.4f}, "
         f"weighted F1 {report.weighted_f1:.4f} -> {out.dir}")
    return 0


def _grid_for(cfg: RunConfig):
    ref = _require(cfg, "grid", "--grid")
    if Path(ref).exists():
        return load_grid(ref)
    try:
        return bundled_grid(ref)
    except FileNotFoundError:
        raise ConfigError(f"grid {ref!r} is neither a file nor a bundled grid name") from None


def cmd_tune(cfg: RunConfig) -> int:
    grid = _grid_for(cfg)
    family = canonical_family(grid.family)
    exp = _Experiment(cfg)
    out = Outputs(cfg, "tune")
    X_cv = to_matrix(exp.train_vecs, len(exp.vocab))
    log.info("tune: %d configurations for %s", grid.total_combinations, family)
    search = grid_search(family, grid, X_cv, exp.y_train, cfg.folds, cfg.seed,
                         cfg.select_metric, cfg.oversampler, cfg.jobs,
                         progress=lambda i, n: log.debug("config %d/%d", i, n))
    n_failed = sum(not r.ok for r in search.results)
    if search.best is None:
        raise ValueError(f"all {len(search.results)} configurations failed")
    X, y = exp.oversampled_train(cfg)
    best = search.best
    model = fit(family, X, y, best.config, cfg.seed)
    report = evaluate(model, exp.X_test, exp.y_test)
    _write_split(out, exp.split)
    out.json("results.json", {"grid": grid.to_json(), **search.to_dict(include_timing=False)})
    timing = timing_report({family: search.results})
    out.text("timing.txt", timing.render())
    out.json("timing.json", {"families": timing.to_json(),
                             "per_config_seconds": [r.seconds for r in search.results]})
    meta = exp.model_metadata(out, cfg, {"hyperparameters": best.config,
                                         "test_accuracy": report.accuracy})
    out.path("model.json").write_text(dumps_model(model, exp.vocab, meta), encoding="utf-8")
    table = performance_table({(cfg.oversampler, family): report})
    out.text("performance.txt", table)
    out.json("report.json", {
        "family": family, "oversampler": cfg.oversampler, "select_metric": cfg.select_metric,
        "combinations": len(search.results), "failed": n_failed,
        "best_ordinal": best.ordinal, "best_config": best.config, "cv_mean": best.mean,
        "cv_std": best.std, "n_train": int(exp.y_train.size), "n_test": int(exp.y_test.size),
        "vocabulary_size": len(exp.vocab), "test": report.to_dict(),
        "note": "oversampling is applied inside each training fold only",
    })
    sys.stdout.write(table)
    _say(f"tune: {len(search.results)} configurations ({n_failed} failed), best #{best.ordinal} "
         f"cv {cfg.select_metric} {best.mean[cfg.select_metric]:.4f}, "
         f"test accuracy {report.accuracy:.4f} -> {out.dir}")
    return 0


def cmd_predict(cfg: RunConfig) -> int:
    model, vocab, meta = load_model(_require(cfg, "model", "--model"))
    if vocab is None:
        raise MetadataMismatch("model file carries no vocabulary")
    if getattr(model, "n_features", len(vocab)) != len(vocab):
        raise MetadataMismatch("vocabulary size does not match the model's feature count")
    stop, lex = _resources_from_meta(cfg, meta)
    notes = load_corpus(_require(cfg, "notes", "--notes"), require_label=False)
    docs = [preprocess_pipeline(ln.note, stop, lex) for ln in notes]
    X = to_matrix(vectorize_all(docs, vocab), len(vocab)) if docs else np.zeros((0, len(vocab)))
    labels = model.predict(X) if len(docs) else []
    scores = model.decision_scores(X) if len(docs) else []
    out = Outputs(cfg, "predict")
    records = [{"id": ln.note.id, "label": Label(int(p)).code, "score": float(s)}
               for ln, p, s in zip(notes, labels, scores)]
    path = out.jsonl("predictions.jsonl", records)
    known = [(int(ln.label), int(p)) for ln, p in zip(notes, labels) if ln.label is not None]
    summary = f"predict: {len(records)} notes -> {path}"
    if known:
        acc = sum(a == b for a, b in known) / len(known)
        summary += f" (accuracy {acc:.4f} on {len(known)} labelled notes)"
    _say(summary)
    return 0


def cmd_extract_dx(cfg: RunConfig) -> int:
    notes = load_corpus(_require(cfg, "notes", "--notes"), require_label=False)
    defaults = load_prompt_defaults(cfg.prompt)
    rules = load_rules(cfg.rules)
    prompts = [build_prompt(defaults.example_note, defaults.example_answer, ln.note.text,
                            defaults.role, defaults.task, note_id=ln.note.id) for ln in notes]
    out = Outputs(cfg, "extract-dx")
    if cfg.transport == "none":
        path = out.jsonl("prompts.jsonl", (p.to_json() for p in prompts))
        _say(f"extract-dx: built {len(prompts)} prompts (no transport) -> {path}")
        return 0
    transport = StubTransport.from_file(_require(cfg, "stub", "--stub"))
    records = []
    for p in prompts:
        try:
            ann = extract_with_transport(transport, p)
        except MalformedAnnotationError as exc:
            raise MalformedAnnotationError(f"note {p.note_id}: {exc.reason}", exc.offset,
                                           exc.raw) from None
        records.append({"id": p.note_id, "spans": list(ann.raw_spans),
                        "classes": [normalize_diagnosis(s, rules).value for s in ann.raw_spans],
                        "retries": ann.retries})
    path = out.jsonl("dx.jsonl", records)
    _say(f"extract-dx: annotated {len(records)} notes -> {path}")
    return 0


COMMANDS = {
    "surrogate": cmd_surrogate,
    "prepare": cmd_prepare,
    "stats": cmd_stats,
    "train": cmd_train,
    "tune": cmd_tune,
    "predict": cmd_predict,
    "extract-dx": cmd_extract_dx,
}

# flag -> (config key, type, help); which subcommands take it
_OPTIONS = {
    "--corpus": ("corpus", str, "raw corpus file (.jsonl or .csv)", ("prepare", "stats")),
    "--prepared": ("prepared", str, "prepared.jsonl written by `prepare`",
                   ("stats", "train", "tune")),
    "--model": ("model", str, "model.json to predict with", ("predict",)),
    "--notes": ("notes", str, "notes file (.jsonl or .csv)", ("predict", "extract-dx")),
    "--min-chars": ("min_chars", int, "length filter threshold", ("prepare",)),
    "--test-fraction": ("test_fraction", float, "held-out share per class", ("train", "tune")),
    "--oversampler": ("oversampler", str, "none | random | smote", ("train", "tune")),
    "--family": ("family", str, "decision_tree | random_forest | svm | xgboost", ("train",)),
    "--params": ("params", str, "hyperparameters as a JSON object", ("train",)),
    "--params-file": ("params_file", str, "hyperparameters JSON file", ("train",)),
    "--grid": ("grid", str, "grid file or bundled grid name", ("tune",)),
    "--select-metric": ("select_metric", str, "accuracy | f1_weighted | f1_macro", ("tune",)),
    "--folds": ("folds", int, "cross-validation folds", ("tune",)),
    "--min-df": ("min_df", int, "minimum document frequency", ("train", "tune")),
    "--max-df-ratio": ("max_df_ratio", float, "maximum document-frequency ratio",
                       ("train", "tune")),
    "--stopwords": ("stopwords", str, "stopword file", ("prepare", "predict")),
    "--retained": ("retained", str, "clinical terms never removed", ("prepare", "predict")),
    "--lexicon": ("lexicon", str, "lemma lexicon file", ("prepare", "predict")),
    "--rules": ("rules", str, "diagnosis rule table", ("extract-dx",)),
    "--prompt": ("prompt", str, "prompt defaults JSON", ("extract-dx",)),
    "--transport": ("transport", str, "stub | none", ("extract-dx",)),
    "--stub": ("stub", str, "stub responses JSON (note id -> reply)", ("extract-dx",)),
    "--n-f43": ("n_f43", int, "F43 notes to generate", ("surrogate",)),
    "--n-f41": ("n_f41", int, "F41 notes to generate", ("surrogate",)),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="psychnotes",
                                     description="F41/F43 clinical-note classification pipeline")
    parser.add_argument("--version", action="version", version=f"psychnotes {__version__}")
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="INI config file; flags override its values")
    shared.add_argument("--seed", type=int, help=f"random seed (default {DEFAULT_SEED})")
    shared.add_argument("--jobs", type=int, help="worker processes for tune")
    shared.add_argument("--out", help="output directory (default ./out)")
    shared.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[shared])
        for flag, (key, kind, help_text, cmds) in _OPTIONS.items():
            if name in cmds:
                sp.add_argument(flag, dest=key, type=kind, help=help_text)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else {}
    flags = {k: v for k, v in vars(args).items()
             if k not in ("config", "command", "verbose") and v is not None}
    return build_config(file_values, flags).resolve_paths()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except Exception as exc:  # every failure becomes one parsable line
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"error: {error_category(exc)}: {msg}", file=sys.stderr)
        if args.verbose >= 2:
            raise
        return 1


if __name__ == "__main__":
    sys.exit(main())
