"""bert-export: offline per-token transformer embeddings in EMB1 format."""

from .exporter import (
    ALIGNMENT_RULE,
    CONTEXT_MODES,
    DEFAULT_MODEL,
    ExportConfig,
    ExportResult,
    export,
    read_corpus,
)
from .segmentation import segment_rows, token_count, tokenize

__version__ = "0.1.0"
