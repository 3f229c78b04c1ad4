"""Classifier assembly: three model variants mapping a document to a
distribution over the eight categories.

* ver_0 — trainable lookup embeddings, one BiLSTM over the flattened token
  sequence, dense/softmax head.
* ver_1 — frozen embeddings with the pad-before strategy, word-level LSTM
  per sentence, sentence-level LSTM, dense/softmax head.
* ver_2 — same network as ver_1 but pad-after embeddings (zero pad rows).

The word LSTM runs many-to-many: a sentence vector is the concatenation of
all its per-word hidden states, so the sentence LSTM's input width grows
with the words-per-sentence geometry.  The sentence LSTM runs many-to-one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Tuple, Union

import numpy as np

from .corpus import NUM_CATEGORIES, PAD_TOKEN, CategoryLabel, SegmentGrid
from .nncore import (
    CheckpointError,
    Tensors,
    cross_entropy_grad_logits,
    dense_backward_batch,
    dense_forward_batch,
    init_dense_params,
    init_lookup_table,
    init_lstm_params,
    lstm_backward,
    lstm_forward,
    softmax,
)
from .rng import seed_stream

VERSION_TAGS = ("ver_0", "ver_1", "ver_2")

#: Padding strategy is bound to the version tag.
PADDING_BY_VERSION = {"ver_0": None, "ver_1": "pad_before", "ver_2": "pad_after"}

GEOMETRY_PRESETS: Dict[str, Tuple[int, int]] = {
    "DE_1": (1, 1),
    "DE_150": (15, 10),
    "DE_600": (30, 20),
    "DE_1000_A": (100, 10),
    "DE_1000_B": (10, 100),
}

PAD_ID = 0
UNK_ID = 1


@dataclass(frozen=True)
class GeometrySpec:
    """Document geometry: sentences per document x words per sentence."""

    sentences: int
    words: int

    def __post_init__(self) -> None:
        if self.sentences < 1 or self.words < 1:
            raise ValueError(f"geometry must be >= (1, 1), got {self}")

    @property
    def rows(self) -> int:
        return self.sentences * self.words

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.sentences, self.words)

    @classmethod
    def parse(cls, value) -> "GeometrySpec":
        """Accept a preset name, an (S, W) pair, or {"sentences", "words"}."""
        if isinstance(value, GeometrySpec):
            return value
        if isinstance(value, str):
            if value not in GEOMETRY_PRESETS:
                raise ValueError(
                    f"unknown geometry preset {value!r}; "
                    f"known: {', '.join(GEOMETRY_PRESETS)}"
                )
            s, w = GEOMETRY_PRESETS[value]
            return cls(s, w)
        if isinstance(value, dict):
            return cls(int(value["sentences"]), int(value["words"]))
        s, w = value
        return cls(int(s), int(w))


@dataclass
class ModelConfig:
    """Architecture hyperparameters shared by all versions.

    ``hidden_words`` is the word-level LSTM width for ver_1/ver_2 and the
    (per-direction) BiLSTM width for ver_0.  ``init_seed`` fully determines
    the initial weights.
    """

    version: str
    geometry: GeometrySpec
    embedding_dim: int
    hidden_words: int = 128
    hidden_sentences: int = 128
    dense_size: int = 64
    dense_activation: str = "linear"  # linear | relu
    sentence_pooling: str = "concat"  # concat | final
    init_seed: int = 0

    def __post_init__(self) -> None:
        if self.version not in VERSION_TAGS:
            raise ValueError(f"unknown version {self.version!r}")
        if self.sentence_pooling not in ("concat", "final"):
            raise ValueError(f"unknown sentence_pooling {self.sentence_pooling!r}")
        if self.dense_activation not in ("linear", "relu"):
            raise ValueError(f"unknown dense_activation {self.dense_activation!r}")
        for name in ("embedding_dim", "hidden_words", "hidden_sentences", "dense_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def padding_strategy(self) -> Optional[str]:
        return PADDING_BY_VERSION[self.version]

    @property
    def sentence_input_dim(self) -> int:
        if self.sentence_pooling == "concat":
            return self.geometry.words * self.hidden_words
        return self.hidden_words


@dataclass(frozen=True)
class ClassDistribution:
    """Probabilities over the eight categories in canonical order."""

    probs: np.ndarray

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.probs))

    @property
    def label(self) -> CategoryLabel:
        return CategoryLabel.from_index(self.argmax)


def predict(probs: Union[np.ndarray, ClassDistribution]) -> CategoryLabel:
    """Argmax category; ties break toward the lowest index."""
    if isinstance(probs, ClassDistribution):
        return probs.label
    return CategoryLabel.from_index(int(np.argmax(np.asarray(probs))))


class HierarchicalClassifier:
    """Word LSTM -> sentence vectors -> sentence LSTM -> dense head (ver_1/ver_2)."""

    def __init__(self, config: ModelConfig, dtype=np.float32) -> None:
        if config.version not in ("ver_1", "ver_2"):
            raise ValueError("HierarchicalClassifier serves ver_1 and ver_2")
        self.config = config
        self.dtype = np.dtype(dtype)
        seeds = seed_stream(config.init_seed)
        self.word_lstm = init_lstm_params(
            config.embedding_dim, config.hidden_words, seeds, self.dtype
        )
        self.sent_lstm = init_lstm_params(
            config.sentence_input_dim, config.hidden_sentences, seeds, self.dtype
        )
        self.dense1 = init_dense_params(
            config.hidden_sentences, config.dense_size, seeds,
            activation=config.dense_activation, dtype=self.dtype,
        )
        self.dense2 = init_dense_params(
            config.dense_size, NUM_CATEGORIES, seeds,
            activation="softmax", dtype=self.dtype,
        )

    def tensors(self) -> Tensors:
        return {
            "word_lstm.w": self.word_lstm.w,
            "word_lstm.u": self.word_lstm.u,
            "word_lstm.b": self.word_lstm.b,
            "sent_lstm.w": self.sent_lstm.w,
            "sent_lstm.u": self.sent_lstm.u,
            "sent_lstm.b": self.sent_lstm.b,
            "dense1.w": self.dense1.w,
            "dense1.b": self.dense1.b,
            "dense2.w": self.dense2.w,
            "dense2.b": self.dense2.b,
        }

    def forward_batch(self, inputs: np.ndarray):
        """inputs: (B, S*W, dim) embedding rows, sentence-major.

        Returns (probs (B, 8), tape).
        """
        cfg = self.config
        s_count, w_count = cfg.geometry.shape
        inputs = np.asarray(inputs, dtype=self.dtype)
        if inputs.ndim != 3 or inputs.shape[1] != cfg.geometry.rows:
            raise ValueError(
                f"input shape {inputs.shape} does not match geometry "
                f"({s_count}x{w_count} = {cfg.geometry.rows} rows)"
            )
        if inputs.shape[2] != cfg.embedding_dim:
            raise ValueError(
                f"embedding dim {inputs.shape[2]} != model dim {cfg.embedding_dim}"
            )
        batch = inputs.shape[0]

        word_in = inputs.reshape(batch * s_count, w_count, cfg.embedding_dim)
        word_hs, word_tape = lstm_forward(word_in, self.word_lstm)
        if cfg.sentence_pooling == "concat":
            sent_in = word_hs.reshape(batch, s_count, w_count * cfg.hidden_words)
        else:
            sent_in = word_hs[:, -1, :].reshape(batch, s_count, cfg.hidden_words)
        sent_hs, sent_tape = lstm_forward(sent_in, self.sent_lstm)
        doc = sent_hs[:, -1, :]
        a1, d1_cache = dense_forward_batch(doc, self.dense1)
        logits = a1 @ self.dense2.w.T + self.dense2.b
        probs = softmax(logits)
        tape = (word_tape, sent_tape, d1_cache, a1, batch)
        return probs, tape

    def backward_batch(self, tape, probs: np.ndarray, targets: np.ndarray,
                       eps: float = 1e-7) -> Tensors:
        """Gradients of the mean clipped cross-entropy over the batch."""
        word_tape, sent_tape, d1_cache, a1, batch = tape
        cfg = self.config
        s_count, w_count = cfg.geometry.shape

        dlogits = cross_entropy_grad_logits(probs, targets, eps) / batch
        dw2 = dlogits.T @ a1
        db2 = dlogits.sum(axis=0)
        d_a1 = dlogits @ self.dense2.w
        d_doc, dw1, db1 = dense_backward_batch(d_a1, d1_cache, self.dense1)

        d_sent_hs = np.zeros(
            (batch, s_count, cfg.hidden_sentences), dtype=self.dtype
        )
        d_sent_hs[:, -1, :] = d_doc
        d_sent_in, sent_grads = lstm_backward(d_sent_hs, sent_tape, self.sent_lstm)

        if cfg.sentence_pooling == "concat":
            d_word_hs = d_sent_in.reshape(batch * s_count, w_count, cfg.hidden_words)
        else:
            d_word_hs = np.zeros(
                (batch * s_count, w_count, cfg.hidden_words), dtype=self.dtype
            )
            d_word_hs[:, -1, :] = d_sent_in.reshape(batch * s_count, cfg.hidden_words)
        _, word_grads = lstm_backward(d_word_hs, word_tape, self.word_lstm)

        return {
            "word_lstm.w": word_grads.w,
            "word_lstm.u": word_grads.u,
            "word_lstm.b": word_grads.b,
            "sent_lstm.w": sent_grads.w,
            "sent_lstm.u": sent_grads.u,
            "sent_lstm.b": sent_grads.b,
            "dense1.w": dw1,
            "dense1.b": db1,
            "dense2.w": dw2,
            "dense2.b": db2,
        }

    def forward_doc(self, matrix: np.ndarray) -> ClassDistribution:
        probs, _ = self.forward_batch(np.asarray(matrix)[None, :, :])
        return ClassDistribution(probs=probs[0])


def build_vocab(grids: Iterable[SegmentGrid]) -> Dict[str, int]:
    """Token -> id for the trainable lookup; ids 0 and 1 are reserved for
    the pad and unknown rows.  Sorted for run-to-run stability."""
    tokens = sorted({token for grid in grids for token in grid.real_tokens()})
    return {token: k + 2 for k, token in enumerate(tokens)}


class FlatBiLstmClassifier:
    """Trainable lookup + single BiLSTM over the flattened grid (ver_0)."""

    def __init__(self, config: ModelConfig, vocab: Dict[str, int], dtype=np.float32) -> None:
        if config.version != "ver_0":
            raise ValueError("FlatBiLstmClassifier serves ver_0")
        self.config = config
        self.vocab = vocab
        self.dtype = np.dtype(dtype)
        vocab_size = len(vocab) + 2
        seeds = seed_stream(config.init_seed)
        self.lookup = init_lookup_table(vocab_size, config.embedding_dim, seeds, self.dtype)
        self.fwd_lstm = init_lstm_params(
            config.embedding_dim, config.hidden_words, seeds, self.dtype
        )
        self.bwd_lstm = init_lstm_params(
            config.embedding_dim, config.hidden_words, seeds, self.dtype
        )
        self.dense1 = init_dense_params(
            2 * config.hidden_words, config.dense_size, seeds,
            activation=config.dense_activation, dtype=self.dtype,
        )
        self.dense2 = init_dense_params(
            config.dense_size, NUM_CATEGORIES, seeds,
            activation="softmax", dtype=self.dtype,
        )

    def tensors(self) -> Tensors:
        return {
            "lookup.table": self.lookup,
            "fwd_lstm.w": self.fwd_lstm.w,
            "fwd_lstm.u": self.fwd_lstm.u,
            "fwd_lstm.b": self.fwd_lstm.b,
            "bwd_lstm.w": self.bwd_lstm.w,
            "bwd_lstm.u": self.bwd_lstm.u,
            "bwd_lstm.b": self.bwd_lstm.b,
            "dense1.w": self.dense1.w,
            "dense1.b": self.dense1.b,
            "dense2.w": self.dense2.w,
            "dense2.b": self.dense2.b,
        }

    def encode(self, grid: SegmentGrid) -> np.ndarray:
        """Flattened grid slots to lookup ids; pads -> PAD_ID, OOV -> UNK_ID."""
        if grid.geometry != self.config.geometry.shape:
            raise ValueError(
                f"grid geometry {grid.geometry} != model geometry "
                f"{self.config.geometry.shape}"
            )
        ids = np.empty(self.config.geometry.rows, dtype=np.int32)
        for k, token in enumerate(grid.flat_slots()):
            if token == PAD_TOKEN:
                ids[k] = PAD_ID
            else:
                ids[k] = self.vocab.get(token, UNK_ID)
        return ids

    def forward_batch(self, ids: np.ndarray):
        """ids: (B, S*W) int token ids.  Returns (probs, tape)."""
        ids = np.asarray(ids)
        if ids.ndim != 2 or ids.shape[1] != self.config.geometry.rows:
            raise ValueError(
                f"ids shape {ids.shape} does not match geometry rows "
                f"{self.config.geometry.rows}"
            )
        batch = ids.shape[0]
        x = self.lookup[ids]  # (B, T, dim)
        fwd_hs, fwd_tape = lstm_forward(x, self.fwd_lstm)
        bwd_hs, bwd_tape = lstm_forward(x[:, ::-1, :], self.bwd_lstm)
        doc = np.concatenate([fwd_hs[:, -1, :], bwd_hs[:, -1, :]], axis=1)
        a1, d1_cache = dense_forward_batch(doc, self.dense1)
        logits = a1 @ self.dense2.w.T + self.dense2.b
        probs = softmax(logits)
        tape = (ids, fwd_tape, bwd_tape, d1_cache, a1, batch)
        return probs, tape

    def backward_batch(self, tape, probs: np.ndarray, targets: np.ndarray,
                       eps: float = 1e-7) -> Tensors:
        ids, fwd_tape, bwd_tape, d1_cache, a1, batch = tape
        steps = self.config.geometry.rows
        hidden = self.config.hidden_words

        dlogits = cross_entropy_grad_logits(probs, targets, eps) / batch
        dw2 = dlogits.T @ a1
        db2 = dlogits.sum(axis=0)
        d_a1 = dlogits @ self.dense2.w
        d_doc, dw1, db1 = dense_backward_batch(d_a1, d1_cache, self.dense1)

        d_fwd_hs = np.zeros((batch, steps, hidden), dtype=self.dtype)
        d_fwd_hs[:, -1, :] = d_doc[:, :hidden]
        d_x_fwd, fwd_grads = lstm_backward(d_fwd_hs, fwd_tape, self.fwd_lstm)

        d_bwd_hs = np.zeros((batch, steps, hidden), dtype=self.dtype)
        d_bwd_hs[:, -1, :] = d_doc[:, hidden:]
        d_x_bwd, bwd_grads = lstm_backward(d_bwd_hs, bwd_tape, self.bwd_lstm)

        d_x = d_x_fwd + d_x_bwd[:, ::-1, :]
        d_lookup = np.zeros_like(self.lookup)
        np.add.at(d_lookup, ids, d_x)

        return {
            "lookup.table": d_lookup,
            "fwd_lstm.w": fwd_grads.w,
            "fwd_lstm.u": fwd_grads.u,
            "fwd_lstm.b": fwd_grads.b,
            "bwd_lstm.w": bwd_grads.w,
            "bwd_lstm.u": bwd_grads.u,
            "bwd_lstm.b": bwd_grads.b,
            "dense1.w": dw1,
            "dense1.b": db1,
            "dense2.w": dw2,
            "dense2.b": db2,
        }

    def forward_doc(self, grid: SegmentGrid) -> ClassDistribution:
        probs, _ = self.forward_batch(self.encode(grid)[None, :])
        return ClassDistribution(probs=probs[0])


Classifier = Union[HierarchicalClassifier, FlatBiLstmClassifier]


def build_model(
    config: ModelConfig,
    vocab: Optional[Dict[str, int]] = None,
    dtype=np.float32,
) -> Classifier:
    if config.version == "ver_0":
        if vocab is None:
            raise ValueError("ver_0 requires a vocabulary")
        return FlatBiLstmClassifier(config, vocab, dtype)
    return HierarchicalClassifier(config, dtype)


def _lstm_param_count(input_dim: int, hidden: int) -> int:
    return 4 * (hidden * input_dim + hidden * hidden + hidden)


def _dense_param_count(in_dim: int, out_dim: int) -> int:
    return out_dim * in_dim + out_dim


def count_params(config: ModelConfig, vocab_size: Optional[int] = None) -> int:
    """Closed-form trainable parameter count for a model configuration.

    ver_0 needs the lookup's vocab_size (reserved rows included).
    """
    head = _dense_param_count(
        2 * config.hidden_words if config.version == "ver_0" else config.hidden_sentences,
        config.dense_size,
    ) + _dense_param_count(config.dense_size, NUM_CATEGORIES)
    if config.version == "ver_0":
        if vocab_size is None:
            raise ValueError("ver_0 parameter count requires vocab_size")
        return (
            vocab_size * config.embedding_dim
            + 2 * _lstm_param_count(config.embedding_dim, config.hidden_words)
            + head
        )
    return (
        _lstm_param_count(config.embedding_dim, config.hidden_words)
        + _lstm_param_count(config.sentence_input_dim, config.hidden_sentences)
        + head
    )


def load_tensors_into(model: Classifier, tensors: Tensors) -> None:
    """Copy checkpoint tensors into a freshly built model, validating names
    and shapes."""
    own = model.tensors()
    missing = sorted(set(own) - set(tensors))
    extra = sorted(set(tensors) - set(own))
    if missing or extra:
        raise CheckpointError(
            f"checkpoint tensor mismatch: missing {missing or 'none'}, "
            f"unexpected {extra or 'none'}"
        )
    for name, target in own.items():
        src = tensors[name]
        if tuple(src.shape) != tuple(target.shape):
            raise CheckpointError(
                f"checkpoint tensor {name!r} has shape {src.shape}, "
                f"model expects {target.shape}"
            )
        target[...] = src.astype(target.dtype)
