"""Experiment configuration: one JSON schema shared by train, sweep and
gradcheck, with dotted-key command-line overrides.

Seed scheme: the top-level ``seed`` drives everything unless overridden.
The train/validation split uses it directly; the weight initialization seed
is derive_seed(seed, 0) when ``model.init_seed`` is absent; the shuffle for
epoch e (0-based) uses derive_seed(seed, 1 + e).  The HIERDOC_SEED
environment variable overrides the top-level seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from .corpus import Document, load_jsonl
from .model import GeometrySpec, ModelConfig
from .rng import derive_seed
from .synth import SyntheticSpec, generate_corpus

SEED_ENV_VAR = "HIERDOC_SEED"


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class MismatchError(ValueError):
    """Data, embedding file, or checkpoint inconsistent with the configuration."""


@dataclass
class EmbeddingConfig:
    kind: str = "hashed"  # hashed | precomputed | lookup-trainable
    dim: int = 768
    source_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in ("hashed", "precomputed", "lookup-trainable"):
            raise ConfigError(f"unknown embedding kind {self.kind!r}")
        if self.dim < 1:
            raise ConfigError("embedding dim must be >= 1")
        if self.kind == "precomputed" and not self.source_path:
            raise ConfigError("precomputed embeddings require source_path")


@dataclass
class CorpusConfig:
    path: Optional[str] = None
    synthetic: Optional[SyntheticSpec] = None

    def __post_init__(self) -> None:
        if (self.path is None) == (self.synthetic is None):
            raise ConfigError("corpus needs exactly one of 'path' or 'synthetic'")

    def load(self) -> List[Document]:
        if self.path is not None:
            return load_jsonl(self.path)
        return generate_corpus(self.synthetic)


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")


@dataclass
class TrainSettings:
    epochs: int = 10
    batch_size: int = 10
    train_fraction: Fraction = field(default_factory=lambda: Fraction(4, 5))
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if isinstance(self.train_fraction, float):
            # str() round-trips the decimal literal, so 0.8 -> 4/5 exactly.
            self.train_fraction = Fraction(str(self.train_fraction))
        elif not isinstance(self.train_fraction, Fraction):
            self.train_fraction = Fraction(self.train_fraction)
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must be in (0, 1)")


@dataclass
class ExperimentConfig:
    name: str
    model: ModelConfig
    embedding: EmbeddingConfig
    corpus: CorpusConfig
    train: TrainSettings
    seed: int = 0

    def __post_init__(self) -> None:
        version = self.model.version
        kind = self.embedding.kind
        if version == "ver_0":
            if kind != "lookup-trainable":
                raise ConfigError(
                    "ver_0 trains its own lookup embeddings; set embedding.kind "
                    "to 'lookup-trainable'"
                )
        elif kind == "lookup-trainable":
            raise ConfigError(f"{version} needs frozen embeddings (hashed or precomputed)")
        if version == "ver_1" and kind == "precomputed":
            # EMB1 files store real-token vectors only; there is no stored
            # vector for the pad marker, so the pad-before strategy cannot
            # be reconstructed from them.
            raise ConfigError("ver_1 (pad-before) requires a per-token provider, not "
                              "a precomputed embedding file")
        if self.model.embedding_dim != self.embedding.dim:
            raise ConfigError(
                f"model.embedding_dim {self.model.embedding_dim} != "
                f"embedding.dim {self.embedding.dim}"
            )

    @property
    def init_seed(self) -> int:
        return self.model.init_seed

    def epoch_shuffle_seed(self, epoch: int) -> int:
        return derive_seed(self.seed, 1 + epoch)


def _require(obj: Dict[str, Any], key: str, where: str) -> Any:
    if key not in obj:
        raise ConfigError(f"missing {where}.{key}")
    return obj[key]


def config_from_dict(raw: Dict[str, Any]) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from parsed JSON."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    try:
        seed = int(os.environ.get(SEED_ENV_VAR, raw.get("seed", 0)))

        model_raw = dict(_require(raw, "model", "config"))
        embedding_raw = dict(raw.get("embedding", {}))
        corpus_raw = dict(_require(raw, "corpus", "config"))
        train_raw = dict(raw.get("train", {}))

        if "geometry" not in model_raw:
            raise ConfigError("missing model.geometry")
        geometry = GeometrySpec.parse(model_raw.pop("geometry"))
        version = model_raw.pop("version", None)
        if version is None:
            raise ConfigError("missing model.version")
        if version == "ver_0" and "kind" not in embedding_raw:
            embedding_raw["kind"] = "lookup-trainable"
        embedding = EmbeddingConfig(**embedding_raw)
        init_seed = model_raw.pop("init_seed", None)
        if init_seed is None:
            init_seed = derive_seed(seed, 0)
        model = ModelConfig(
            version=version,
            geometry=geometry,
            embedding_dim=embedding.dim,
            init_seed=int(init_seed),
            **model_raw,
        )

        synthetic = corpus_raw.pop("synthetic", None)
        if synthetic is not None:
            synthetic = SyntheticSpec(**{
                k: tuple(v) if isinstance(v, list) else v
                for k, v in dict(synthetic).items()
            })
        corpus = CorpusConfig(path=corpus_raw.pop("path", None), synthetic=synthetic)
        if corpus_raw:
            raise ConfigError(f"unknown corpus keys: {sorted(corpus_raw)}")

        optimizer_raw = train_raw.pop("optimizer", {})
        optimizer = OptimizerConfig(**dict(optimizer_raw))
        train = TrainSettings(optimizer=optimizer, **train_raw)

        return ExperimentConfig(
            name=str(raw.get("name", "run")),
            model=model,
            embedding=embedding,
            corpus=corpus,
            train=train,
            seed=seed,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(config: ExperimentConfig) -> Dict[str, Any]:
    """JSON-serializable snapshot with all defaults and derived seeds resolved."""
    model = config.model
    corpus: Dict[str, Any] = {}
    if config.corpus.path is not None:
        corpus["path"] = config.corpus.path
    else:
        spec = config.corpus.synthetic
        corpus["synthetic"] = {
            "docs_per_class": spec.docs_per_class,
            "vocab_per_class": spec.vocab_per_class,
            "shared_vocab_size": spec.shared_vocab_size,
            "overlap": spec.overlap,
            "sentences": list(spec.sentences),
            "words": list(spec.words),
            "seed": spec.seed,
        }
    opt = config.train.optimizer
    return {
        "name": config.name,
        "seed": config.seed,
        "model": {
            "version": model.version,
            "geometry": {
                "sentences": model.geometry.sentences,
                "words": model.geometry.words,
            },
            "hidden_words": model.hidden_words,
            "hidden_sentences": model.hidden_sentences,
            "dense_size": model.dense_size,
            "dense_activation": model.dense_activation,
            "sentence_pooling": model.sentence_pooling,
            "init_seed": model.init_seed,
        },
        "embedding": {
            "kind": config.embedding.kind,
            "dim": config.embedding.dim,
            "source_path": config.embedding.source_path,
        },
        "corpus": corpus,
        "train": {
            "epochs": config.train.epochs,
            "batch_size": config.train.batch_size,
            "train_fraction": str(config.train.train_fraction),
            "optimizer": {
                "kind": opt.kind,
                "learning_rate": opt.learning_rate,
                "beta1": opt.beta1,
                "beta2": opt.beta2,
                "eps": opt.eps,
                "clip_norm": opt.clip_norm,
            },
        },
    }


def apply_overrides(raw: Dict[str, Any], overrides: List[str]) -> Dict[str, Any]:
    """Apply ``dotted.key=value`` overrides; values parse as JSON when
    possible, else as strings.  Intermediate objects are created as needed."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        dotted, text = item.split("=", 1)
        keys = dotted.split(".")
        if not all(keys):
            raise ConfigError(f"bad override key {dotted!r}")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = raw
        for key in keys[:-1]:
            nxt = node.get(key)
            if not isinstance(nxt, dict):
                nxt = {}
                node[key] = nxt
            node = nxt
        node[keys[-1]] = value
    return raw


def load_config(path: Union[str, Path], overrides: Optional[List[str]] = None) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if overrides:
        raw = apply_overrides(raw, overrides)
    return config_from_dict(raw)


def train_fraction_ratio(fraction: Fraction) -> str:
    """Human format for a split, e.g. Fraction(4, 5) -> "8:2"."""
    tens = fraction * 10
    if tens.denominator == 1:
        return f"{tens.numerator}:{10 - tens.numerator}"
    return f"{fraction.numerator}:{fraction.denominator - fraction.numerator}"
