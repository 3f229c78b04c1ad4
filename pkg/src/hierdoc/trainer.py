"""Training and evaluation harness: epoch loop with per-batch optimizer
steps, deterministic epoch shuffles, per-epoch metric records, and the
metrics CSV behind the comparison curves.

Train accuracy and loss are measured on the fly, from the same forward
passes that produce the gradients (before each batch's update); validation
metrics come from a separate pure evaluation pass after each epoch.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import ExperimentConfig, MismatchError, config_to_dict
from .corpus import Document, SplitSpec, segment, split_train_valid
from .embedding import (
    EmbeddingError,
    HashedEmbedder,
    embed_pad_after,
    embed_pad_before,
    load_precomputed,
)
from .model import (
    Classifier,
    FlatBiLstmClassifier,
    build_model,
    build_vocab,
)
from .nncore import (
    clip_global_norm,
    cross_entropy_clipped,
    make_optimizer,
)
from .rng import SplitMix64

LOSS_EPS = 1e-7

#: Fixed evaluation batch size; part of the determinism contract (batch
#: composition affects float32 summation order).
EVAL_BATCH = 64


@dataclass
class EpochMetrics:
    epoch: int  # 1-based
    train_acc: float
    train_loss: float
    val_acc: float
    val_loss: float
    wall_time: float
    optimizer_steps: int

    def as_dict(self) -> Dict[str, object]:
        # wall_time is intentionally not serialized: recorded outputs must be
        # byte-identical across reruns of the same seed.
        return {
            "epoch": self.epoch,
            "train_acc": self.train_acc,
            "train_loss": self.train_loss,
            "val_acc": self.val_acc,
            "val_loss": self.val_loss,
            "optimizer_steps": self.optimizer_steps,
        }


@dataclass
class RunRecord:
    config: Dict[str, object]
    metrics: List[EpochMetrics]
    corpus_fingerprint: str
    corpus_size: int = 0

    @property
    def final(self) -> EpochMetrics:
        return self.metrics[-1]

    def as_dict(self) -> Dict[str, object]:
        return {
            "config": self.config,
            "corpus_fingerprint": self.corpus_fingerprint,
            "corpus_size": self.corpus_size,
            "metrics": [m.as_dict() for m in self.metrics],
        }


def record_from_dict(data: Dict[str, object]) -> RunRecord:
    metrics = [
        EpochMetrics(
            epoch=int(m["epoch"]),
            train_acc=float(m["train_acc"]),
            train_loss=float(m["train_loss"]),
            val_acc=float(m["val_acc"]),
            val_loss=float(m["val_loss"]),
            wall_time=0.0,
            optimizer_steps=int(m["optimizer_steps"]),
        )
        for m in data["metrics"]
    ]
    return RunRecord(
        config=data["config"],
        metrics=metrics,
        corpus_fingerprint=str(data["corpus_fingerprint"]),
        corpus_size=int(data.get("corpus_size", 0)),
    )


@dataclass
class RunResult:
    record: RunRecord
    model: Classifier
    train_size: int
    valid_size: int


def corpus_fingerprint(docs: Sequence[Document]) -> str:
    """Content hash of the corpus (ids, texts, labels, in order)."""
    h = hashlib.sha256()
    for doc in docs:
        label = -1 if doc.label is None else doc.label.index
        h.update(f"{doc.id}\x00{doc.text}\x00{label}\x1e".encode("utf-8"))
    return h.hexdigest()


def _targets(docs: Sequence[Document]) -> np.ndarray:
    return np.asarray([doc.label.index for doc in docs], dtype=np.int64)


def prepare_frozen_inputs(
    docs: Sequence[Document], config: ExperimentConfig
) -> np.ndarray:
    """Embedding matrices for ver_1/ver_2 as one (N, S*W, dim) float32 array."""
    geometry = config.model.geometry
    strategy = config.model.padding_strategy
    n = len(docs)
    out = np.empty((n, geometry.rows, config.embedding.dim), dtype=np.float32)
    if config.embedding.kind == "precomputed":
        try:
            table = load_precomputed(
                config.embedding.source_path, docs, geometry.shape,
                expected_dim=config.embedding.dim,
            )
        except EmbeddingError as exc:
            raise MismatchError(str(exc)) from exc
        for k, doc in enumerate(docs):
            out[k] = table[doc.id].values
        return out
    provider = HashedEmbedder(config.embedding.dim)
    embed = embed_pad_before if strategy == "pad_before" else embed_pad_after
    for k, doc in enumerate(docs):
        out[k] = embed(segment(doc, geometry.shape), provider).values
    return out


def encode_token_ids(
    docs: Sequence[Document], model: FlatBiLstmClassifier
) -> np.ndarray:
    """Lookup id grids for ver_0 as one (N, S*W) int32 array."""
    geometry = model.config.geometry
    out = np.empty((len(docs), geometry.rows), dtype=np.int32)
    for k, doc in enumerate(docs):
        out[k] = model.encode(segment(doc, geometry.shape))
    return out


def train_epoch(
    model: Classifier,
    inputs: np.ndarray,
    targets: np.ndarray,
    batch_size: int,
    optimizer,
    shuffle_seed: int,
    clip_norm: Optional[float] = None,
) -> Tuple[float, float, int]:
    """One pass over the train set: seeded shuffle, one optimizer step per
    batch (short final batch kept), mean-of-batch loss gradients.

    Returns (accuracy, mean loss, optimizer steps), with accuracy and loss
    measured from the pre-update forward pass of each batch.
    """
    n = len(targets)
    if n == 0:
        raise ValueError("empty train set")
    order = list(range(n))
    SplitMix64(shuffle_seed).shuffle(order)
    correct = 0
    loss_sum = 0.0
    steps = 0
    tensors = model.tensors()
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        x = inputs[idx]
        y = targets[idx]
        probs, tape = model.forward_batch(x)
        losses = cross_entropy_clipped(probs, y, LOSS_EPS)
        loss_sum += float(np.sum(losses, dtype=np.float64))
        correct += int(np.sum(probs.argmax(axis=1) == y))
        grads = model.backward_batch(tape, probs, y, LOSS_EPS)
        if clip_norm is not None:
            clip_global_norm(grads, clip_norm)
        optimizer.step(tensors, grads)
        steps += 1
    return correct / n, loss_sum / n, steps


def evaluate_model(
    model: Classifier, inputs: np.ndarray, targets: np.ndarray
) -> Tuple[float, float]:
    """Accuracy and mean clipped cross-entropy; never mutates parameters."""
    n = len(targets)
    if n == 0:
        raise ValueError("empty evaluation set")
    correct = 0
    loss_sum = 0.0
    for start in range(0, n, EVAL_BATCH):
        x = inputs[start : start + EVAL_BATCH]
        y = targets[start : start + EVAL_BATCH]
        probs, _ = model.forward_batch(x)
        losses = cross_entropy_clipped(probs, y, LOSS_EPS)
        loss_sum += float(np.sum(losses, dtype=np.float64))
        correct += int(np.sum(probs.argmax(axis=1) == y))
    return correct / n, loss_sum / n


def run_experiment(config: ExperimentConfig, log=None) -> RunResult:
    """Full pipeline: load corpus, split, embed/encode per version, train for
    the configured epochs, and record per-epoch metrics.

    Deterministic for a fixed (config, seed): identical metric sequences on
    every run.
    """
    docs = config.corpus.load()
    fingerprint = corpus_fingerprint(docs)
    split = SplitSpec(train_fraction=config.train.train_fraction, seed=config.seed)
    train_docs, valid_docs = split_train_valid(docs, split)
    if not train_docs or not valid_docs:
        raise MismatchError(
            f"split produced {len(train_docs)} train / {len(valid_docs)} valid "
            "documents; need at least one of each"
        )

    if config.model.version == "ver_0":
        geometry = config.model.geometry
        vocab = build_vocab(segment(doc, geometry.shape) for doc in train_docs)
        model = build_model(config.model, vocab=vocab)
        train_inputs = encode_token_ids(train_docs, model)
        valid_inputs = encode_token_ids(valid_docs, model)
    else:
        model = build_model(config.model)
        train_inputs = prepare_frozen_inputs(train_docs, config)
        valid_inputs = prepare_frozen_inputs(valid_docs, config)

    train_targets = _targets(train_docs)
    valid_targets = _targets(valid_docs)

    opt_cfg = config.train.optimizer
    if opt_cfg.kind == "adam":
        optimizer = make_optimizer(
            "adam", opt_cfg.learning_rate,
            beta1=opt_cfg.beta1, beta2=opt_cfg.beta2, eps=opt_cfg.eps,
        )
    else:
        optimizer = make_optimizer("sgd", opt_cfg.learning_rate)

    metrics: List[EpochMetrics] = []
    for epoch in range(config.train.epochs):
        started = time.perf_counter()
        acc, loss, steps = train_epoch(
            model, train_inputs, train_targets, config.train.batch_size,
            optimizer, config.epoch_shuffle_seed(epoch), opt_cfg.clip_norm,
        )
        val_acc, val_loss = evaluate_model(model, valid_inputs, valid_targets)
        elapsed = time.perf_counter() - started
        entry = EpochMetrics(
            epoch=epoch + 1,
            train_acc=acc,
            train_loss=loss,
            val_acc=val_acc,
            val_loss=val_loss,
            wall_time=elapsed,
            optimizer_steps=steps,
        )
        metrics.append(entry)
        if log is not None:
            log(
                f"epoch {entry.epoch}/{config.train.epochs}  "
                f"acc {acc:.4f}  loss {loss:.4f}  "
                f"val_acc {val_acc:.4f}  val_loss {val_loss:.4f}  "
                f"steps {steps}  {elapsed:.1f}s"
            )

    record = RunRecord(
        config=config_to_dict(config),
        metrics=metrics,
        corpus_fingerprint=fingerprint,
        corpus_size=len(docs),
    )
    return RunResult(
        record=record,
        model=model,
        train_size=len(train_docs),
        valid_size=len(valid_docs),
    )


def format_sig(x: float, digits: int = 6) -> str:
    return format(float(x), f".{digits}g")


def emit_metrics_csv(record: RunRecord, path: Union[str, Path]) -> None:
    """One row per epoch, floats at 6 significant digits."""
    lines = ["epoch,train_acc,train_loss,val_acc,val_loss"]
    for m in record.metrics:
        lines.append(
            f"{m.epoch},{format_sig(m.train_acc)},{format_sig(m.train_loss)},"
            f"{format_sig(m.val_acc)},{format_sig(m.val_loss)}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_run_record(record: RunRecord, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(record.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
