"""Command-line entry point.

Subcommands: prepare, train, evaluate, predict, gradcheck, sweep.

Exit codes are stable: 0 success; 1 sweep finished with failed runs;
2 malformed corpus; 3 configuration error; 4 data/embedding/checkpoint
mismatch; 5 gradient check failure.  User errors print a message, never a
stack trace.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import (
    ConfigError,
    ExperimentConfig,
    MismatchError,
    config_from_dict,
    load_config,
    train_fraction_ratio,
)
from .corpus import (
    CATEGORY_NAMES,
    CorpusError,
    Document,
    SplitSpec,
    class_histogram,
    load_jsonl,
    segment,
    split_train_valid,
)
from .embedding import EmbeddingError, HashedEmbedder, embed_pad_after, embed_pad_before, export_hashed
from .model import (
    GEOMETRY_PRESETS,
    GeometrySpec,
    build_model,
    build_vocab,
)
from .nncore import (
    CheckpointError,
    cross_entropy_clipped,
    grad_check,
    load_checkpoint,
    save_checkpoint,
)
from .trainer import (
    RunRecord,
    RunResult,
    emit_metrics_csv,
    evaluate_model,
    encode_token_ids,
    prepare_frozen_inputs,
    record_from_dict,
    run_experiment,
    write_run_record,
)

GRADCHECK_THRESHOLD = 1e-4
GRADCHECK_MAX_HIDDEN = 32


def _parse_geometry(text: str) -> GeometrySpec:
    if text in GEOMETRY_PRESETS:
        return GeometrySpec.parse(text)
    if "x" in text:
        s, w = text.lower().split("x", 1)
        return GeometrySpec(int(s), int(w))
    raise ConfigError(
        f"geometry must be a preset ({', '.join(GEOMETRY_PRESETS)}) or SxW, got {text!r}"
    )


# ---------------------------------------------------------------------------
# prepare
# ---------------------------------------------------------------------------


def cmd_prepare(args) -> int:
    docs = load_jsonl(args.corpus)
    labeled = [d for d in docs if d.label is not None]
    counts = class_histogram(labeled)
    width = max(len(name) for name in CATEGORY_NAMES)
    for name, count in zip(CATEGORY_NAMES, counts):
        print(f"{name:<{width}}  {count}")
    print(f"{'total':<{width}}  {len(docs)}")
    if len(labeled) != len(docs):
        print(f"(unlabeled: {len(docs) - len(labeled)})")

    if args.emb_out:
        geometry = _parse_geometry(args.geometry)
        written = export_hashed(docs, geometry.shape, args.dim, args.emb_out)
        print(
            f"wrote {written} embedding records "
            f"(geometry {geometry.sentences}x{geometry.words}, dim {args.dim}) "
            f"to {args.emb_out}"
        )
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _write_run_dir(result: RunResult, run_dir: Path) -> None:
    from .report import save_curves

    run_dir.mkdir(parents=True, exist_ok=True)
    record = result.record
    with open(run_dir / "config.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(record.config, fh, indent=2, sort_keys=True)
        fh.write("\n")
    emit_metrics_csv(record, run_dir / "metrics.csv")
    write_run_record(record, run_dir / "run_record.json")
    save_checkpoint(run_dir / "model.prm1", result.model.tensors())
    vocab = getattr(result.model, "vocab", None)
    if vocab is not None:
        with open(run_dir / "vocab.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(vocab, fh, ensure_ascii=False, sort_keys=True)
            fh.write("\n")
    save_curves(record, run_dir / "curves.png", title=record.config.get("name", ""))


def cmd_train(args) -> int:
    config = load_config(args.config, args.override)
    result = run_experiment(config, log=print)
    run_dir = Path(args.out) / config.name
    _write_run_dir(result, run_dir)
    final = result.record.final
    print(
        f"done: {result.train_size} train / {result.valid_size} valid docs, "
        f"{final.optimizer_steps} steps/epoch"
    )
    print(
        f"final: acc {final.train_acc:.4f}  loss {final.train_loss:.4f}  "
        f"val_acc {final.val_acc:.4f}  val_loss {final.val_loss:.4f}"
    )
    print(f"run directory: {run_dir}")
    return 0


# ---------------------------------------------------------------------------
# evaluate / predict
# ---------------------------------------------------------------------------


def _load_run(run_dir: Path):
    config_path = run_dir / "config.json"
    if not config_path.exists():
        raise ConfigError(f"no config.json in {run_dir}")
    with open(config_path, "r", encoding="utf-8") as fh:
        config = config_from_dict(json.load(fh))
    vocab = None
    if config.model.version == "ver_0":
        vocab_path = run_dir / "vocab.json"
        if not vocab_path.exists():
            raise MismatchError(f"ver_0 run is missing vocab.json in {run_dir}")
        with open(vocab_path, "r", encoding="utf-8") as fh:
            vocab = {str(k): int(v) for k, v in json.load(fh).items()}
    model = build_model(config.model, vocab=vocab)
    from .model import load_tensors_into

    load_tensors_into(model, load_checkpoint(run_dir / "model.prm1"))
    return config, model


def _model_inputs(docs: List[Document], config: ExperimentConfig, model) -> np.ndarray:
    if config.model.version == "ver_0":
        return encode_token_ids(docs, model)
    return prepare_frozen_inputs(docs, config)


def cmd_evaluate(args) -> int:
    config, model = _load_run(Path(args.run))
    if args.corpus:
        docs = load_jsonl(args.corpus)
    else:
        docs = config.corpus.load()
    if args.split != "all":
        split = SplitSpec(train_fraction=config.train.train_fraction, seed=config.seed)
        train_docs, valid_docs = split_train_valid(docs, split)
        docs = train_docs if args.split == "train" else valid_docs
    if not docs:
        raise MismatchError("no documents to evaluate")
    unlabeled = [d.id for d in docs if d.label is None]
    if unlabeled:
        raise CorpusError(f"unlabeled documents: {unlabeled[:3]}")
    inputs = _model_inputs(docs, config, model)
    targets = np.asarray([d.label.index for d in docs], dtype=np.int64)
    acc, loss = evaluate_model(model, inputs, targets)
    print(f"documents: {len(docs)} ({args.split})")
    print(f"accuracy:  {acc:.6g}")
    print(f"loss:      {loss:.6g}")
    return 0


def cmd_predict(args) -> int:
    config, model = _load_run(Path(args.run))
    if config.embedding.kind == "precomputed":
        raise MismatchError(
            "this run uses precomputed embeddings; ad-hoc documents cannot be "
            "embedded (train with a hashed provider for interactive prediction)"
        )
    if args.input:
        with open(args.input, "r", encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = sys.stdin.read()
    doc = Document(id="<input>", text=text)
    grid = segment(doc, config.model.geometry.shape)
    if config.model.version == "ver_0":
        dist = model.forward_doc(grid)
    else:
        provider = HashedEmbedder(config.embedding.dim)
        embed = (
            embed_pad_before
            if config.model.padding_strategy == "pad_before"
            else embed_pad_after
        )
        dist = model.forward_doc(embed(grid, provider).values)
    print(dist.label.name)
    for name, p in zip(CATEGORY_NAMES, dist.probs):
        print(f"{name} {float(p):.8g}")
    return 0


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------


def _gradcheck_config(version: str) -> ExperimentConfig:
    return config_from_dict(
        {
            "name": f"gradcheck-{version}",
            "seed": 7,
            "model": {
                "version": version,
                "geometry": {"sentences": 3, "words": 4},
                "hidden_words": 4,
                "hidden_sentences": 4,
                "dense_size": 5,
            },
            "embedding": {"kind": "lookup-trainable" if version == "ver_0" else "hashed",
                          "dim": 8},
            "corpus": {"synthetic": {"docs_per_class": 1, "vocab_per_class": 6,
                                     "shared_vocab_size": 6, "overlap": 0.25,
                                     "sentences": [2, 3], "words": [2, 4], "seed": 3}},
            "train": {"epochs": 1, "batch_size": 4},
        }
    )


def run_gradcheck(config: ExperimentConfig, n_coords: int = 250,
                  inject_fault: bool = False):
    """Build the configured model at float64 on a small synthetic batch and
    compare analytic gradients against central differences."""
    if (config.model.hidden_words > GRADCHECK_MAX_HIDDEN
            or config.model.hidden_sentences > GRADCHECK_MAX_HIDDEN):
        raise ConfigError(
            f"gradcheck refuses hidden sizes above {GRADCHECK_MAX_HIDDEN}"
        )
    docs = config.corpus.load()
    docs = docs[: max(4, config.train.batch_size)]
    geometry = config.model.geometry
    if config.model.version == "ver_0":
        vocab = build_vocab(segment(d, geometry.shape) for d in docs)
        model = build_model(config.model, vocab=vocab, dtype=np.float64)
        inputs = encode_token_ids(docs, model)
    else:
        model = build_model(config.model, dtype=np.float64)
        inputs = prepare_frozen_inputs(docs, config).astype(np.float64)
    targets = np.asarray([d.label.index for d in docs], dtype=np.int64)

    def loss_fn() -> float:
        probs, _ = model.forward_batch(inputs)
        return float(np.mean(cross_entropy_clipped(probs, targets)))

    probs, tape = model.forward_batch(inputs)
    analytic = model.backward_batch(tape, probs, targets)
    if inject_fault:
        analytic["dense2.w"] = analytic["dense2.w"] * 2.0
    return grad_check(loss_fn, model.tensors(), analytic,
                      n_coords=n_coords, seed=config.seed)


def cmd_gradcheck(args) -> int:
    if args.config:
        configs = [load_config(args.config, args.override)]
    else:
        configs = [_gradcheck_config(v) for v in ("ver_0", "ver_2")]
    failed = False
    for config in configs:
        report = run_gradcheck(config, inject_fault=args.inject_fault)
        print(f"{config.model.version}  geometry "
              f"{config.model.geometry.sentences}x{config.model.geometry.words}  "
              f"dim {config.embedding.dim}  hidden {config.model.hidden_words}")
        for name, err in sorted(report.per_tensor.items()):
            print(f"  {name:<14} {err:.3e}")
        status = "ok" if report.ok(GRADCHECK_THRESHOLD) else "FAIL"
        print(f"  max {report.max_error:.3e} over {report.coords_checked} "
              f"coordinates  [{status}]")
        if not report.ok(GRADCHECK_THRESHOLD):
            name, idx, a, n = report.worst
            print(f"  worst coordinate: {name}[{idx}] analytic={a:.6e} "
                  f"numeric={n:.6e}", file=sys.stderr)
            failed = True
    return 5 if failed else 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _sweep_one(raw_config: Dict, out_dir: str) -> Tuple[str, Optional[Dict], str]:
    """Run one sweep entry; returns (name, record dict or None, error message)."""
    name = str(raw_config.get("name", "run"))
    try:
        config = config_from_dict(raw_config)
        result = run_experiment(config)
        _write_run_dir(result, Path(out_dir) / config.name)
        return config.name, result.record.as_dict(), ""
    except (CorpusError, ConfigError, MismatchError, EmbeddingError,
            CheckpointError, ValueError) as exc:
        return name, None, str(exc)


def cmd_sweep(args) -> int:
    from .report import save_comparison

    try:
        with open(args.manifest, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read manifest {args.manifest}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(manifest, list):
        raise ConfigError("sweep manifest must be a JSON array of configs")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries: List[Tuple[str, Optional[Dict], str]] = []
    if args.jobs > 1 and len(manifest) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_sweep_one, raw, str(out_dir)) for raw in manifest]
            entries = [f.result() for f in futures]
    else:
        entries = [_sweep_one(raw, str(out_dir)) for raw in manifest]

    header = ("version,corpus_size,valid_split,epoch,batch_size,"
              "accuracy,val_acc,loss,val_loss")
    lines = [header]
    records: List[Tuple[str, RunRecord]] = []
    failures: List[Tuple[str, str]] = []
    for name, record_dict, error in entries:
        if record_dict is None:
            failures.append((name, error))
            print(f"run {name!r} failed: {error}", file=sys.stderr)
            continue
        record = record_from_dict(record_dict)
        records.append((name, record))
        cfg = record.config
        final = record.final
        ratio = train_fraction_ratio(Fraction(cfg["train"]["train_fraction"]))
        lines.append(
            f"{cfg['model']['version']},{record.corpus_size},{ratio},"
            f"{cfg['train']['epochs']},{cfg['train']['batch_size']},"
            f"{final.train_acc:.6g},{final.val_acc:.6g},"
            f"{final.train_loss:.6g},{final.val_loss:.6g}"
        )
    with open(out_dir / "comparison.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    save_comparison(records, out_dir / "comparison.png")
    print(f"sweep complete: {len(records)} succeeded, {len(failures)} failed")
    print(f"comparison table: {out_dir / 'comparison.csv'}")
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# parser and entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hierdoc",
        description="Hierarchical two-level LSTM news-category classifier",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="validate a corpus and print its class histogram")
    p.add_argument("--corpus", required=True, help="JSONL corpus path")
    p.add_argument("--geometry", default="DE_600",
                   help="preset name or SxW (used for the embedding cache)")
    p.add_argument("--dim", type=int, default=768, help="hashed embedding dim")
    p.add_argument("--emb-out", default=None,
                   help="write a hashed-embedding EMB1 cache to this path")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="run one training experiment")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", default="runs", help="output directory (default ./runs)")
    p.add_argument("-o", "--override", action="append", default=[],
                   metavar="KEY=VALUE", help="dotted config override, e.g. "
                   "train.batch_size=1")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a finished run on a corpus")
    p.add_argument("--run", required=True, help="run directory from `train`")
    p.add_argument("--corpus", default=None,
                   help="JSONL corpus (default: the run's configured corpus)")
    p.add_argument("--split", choices=("train", "valid", "all"), default="valid")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="classify one document from stdin or a file")
    p.add_argument("--run", required=True, help="run directory from `train`")
    p.add_argument("--input", default=None, help="text file (default: stdin)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--config", default=None,
                   help="experiment config JSON (default: built-in toy "
                        "configs for ver_0 and ver_2)")
    p.add_argument("-o", "--override", action="append", default=[],
                   metavar="KEY=VALUE")
    p.add_argument("--inject-fault", action="store_true",
                   help="corrupt one analytic gradient to prove the checker "
                        "catches it")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sweep", help="run a manifest of experiments and compare")
    p.add_argument("--manifest", required=True, help="JSON array of experiment configs")
    p.add_argument("--out", default="runs", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CorpusError as exc:
        print(f"corpus error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except (MismatchError, EmbeddingError, CheckpointError) as exc:
        print(f"mismatch error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
