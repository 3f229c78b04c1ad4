"""hierdoc: hierarchical two-level LSTM news-category classifier.

Documents are segmented into a fixed sentences-by-words token grid,
embedded into per-token vectors, encoded word -> sentence -> document by
two stacked LSTMs (or one BiLSTM for the lookup-embedding variant), and
classified into eight categories by a dense/softmax head.  All numerics
are implemented from scratch on numpy with exact backpropagation through
time, and every stochastic choice is deterministic under a seed.
"""

from .corpus import (
    CATEGORY_NAMES,
    NUM_CATEGORIES,
    PAD_TOKEN,
    CategoryLabel,
    CorpusError,
    Document,
    SegmentGrid,
    SplitSpec,
    class_histogram,
    load_jsonl,
    segment,
    split_train_valid,
    tokenize,
    write_jsonl,
)
from .embedding import (
    EmbeddingError,
    EmbeddingMatrix,
    HashedEmbedder,
    embed_pad_after,
    embed_pad_before,
    hashed_embed,
    load_precomputed,
    read_embeddings,
    write_embeddings,
)
from .model import (
    GEOMETRY_PRESETS,
    ClassDistribution,
    FlatBiLstmClassifier,
    GeometrySpec,
    HierarchicalClassifier,
    ModelConfig,
    build_model,
    build_vocab,
    count_params,
    predict,
)
from .config import (
    ConfigError,
    EmbeddingConfig,
    ExperimentConfig,
    MismatchError,
    load_config,
)
from .trainer import (
    EpochMetrics,
    RunRecord,
    emit_metrics_csv,
    evaluate_model,
    run_experiment,
    train_epoch,
)

__version__ = "0.1.0"
