"""Run a pretrained bidirectional-transformer encoder over a JSONL corpus
and write per-token vectors as an EMB1 file plus a JSON manifest.

Alignment: the corpus tokenizer's tokens are fed to the encoder as
pre-split words; each token's vector is the hidden state of its first
subword (first-subword alignment).  A document whose tokens cannot all be
aligned (e.g. truncation ate them, or the subword tokenizer dropped a
token) is skipped and logged, never silently mangled.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .emb1 import write_records
from .segmentation import segment_rows

logger = logging.getLogger("bert_export")

DEFAULT_MODEL = "bert-base-chinese"

ALIGNMENT_RULE = "first_subword"

CONTEXT_MODES = ("per_sentence", "per_document")


@dataclass
class ExportConfig:
    corpus_path: str
    output_path: str
    geometry: Tuple[int, int]
    model_id: str = DEFAULT_MODEL
    context_mode: str = "per_sentence"
    batch_rows: int = 32
    device: str = "cpu"

    def __post_init__(self) -> None:
        if self.context_mode not in CONTEXT_MODES:
            raise ValueError(f"context_mode must be one of {CONTEXT_MODES}")
        s, w = self.geometry
        if s < 1 or w < 1:
            raise ValueError(f"geometry must be >= (1, 1), got {self.geometry}")


@dataclass
class ExportResult:
    records: int
    skipped: List[str]
    dim: int
    output_path: str
    manifest_path: str


class AlignmentError(RuntimeError):
    """A token in the pre-split input has no subword in the encoding."""


def read_corpus(path) -> List[Tuple[str, str]]:
    """Minimal JSONL corpus reader: (id, text) pairs in file order."""
    docs: List[Tuple[str, str]] = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: malformed JSON ({exc.msg})") from None
            doc_id = obj.get("id")
            text = obj.get("text")
            if not isinstance(doc_id, str) or not doc_id:
                raise ValueError(f"line {lineno}: missing or invalid 'id'")
            if not isinstance(text, str):
                raise ValueError(f"line {lineno}: missing or invalid 'text'")
            if doc_id in seen:
                raise ValueError(f"line {lineno}: duplicate id {doc_id!r}")
            seen.add(doc_id)
            docs.append((doc_id, text))
    return docs


def _load_encoder(model_id: str, device: str):
    # Imported lazily: segmentation/emb1 stay usable without torch installed.
    import torch
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(model_id)
    model = AutoModel.from_pretrained(model_id)
    model.to(device)
    model.eval()
    torch.set_grad_enabled(False)
    return tokenizer, model


def _max_length(tokenizer, model) -> int:
    limit = getattr(model.config, "max_position_embeddings", None) or 512
    tok_limit = getattr(tokenizer, "model_max_length", None)
    if tok_limit and tok_limit < 10**9:
        limit = min(limit, tok_limit)
    return int(limit)


def _encode_word_groups(
    groups: List[List[str]], tokenizer, model, device: str, max_length: int
) -> List[np.ndarray]:
    """Encode pre-split word groups; returns one (len(group), dim) matrix of
    first-subword hidden states per group.  Raises AlignmentError if any
    word ends up without a subword."""
    enc = tokenizer(
        groups,
        is_split_into_words=True,
        padding=True,
        truncation=True,
        max_length=max_length,
        return_tensors="pt",
    )
    inputs = {k: v.to(device) for k, v in enc.items()}
    hidden = model(**inputs).last_hidden_state.cpu().numpy()

    out: List[np.ndarray] = []
    for k, group in enumerate(groups):
        word_ids = enc.word_ids(k)
        first: dict = {}
        for pos, wid in enumerate(word_ids):
            if wid is not None and wid not in first:
                first[wid] = pos
        missing = [w for w in range(len(group)) if w not in first]
        if missing:
            raise AlignmentError(
                f"{len(missing)} of {len(group)} words have no subword "
                f"(first missing: index {missing[0]}, {group[missing[0]]!r})"
            )
        rows = np.stack([hidden[k, first[w]] for w in range(len(group))])
        out.append(rows.astype(np.float32))
    return out


def _document_vectors(
    rows: List[List[str]], tokenizer, model, config: ExportConfig, max_length: int
) -> np.ndarray:
    dim = model.config.hidden_size
    if not rows:
        return np.zeros((0, dim), dtype=np.float32)
    if config.context_mode == "per_document":
        flat = [token for row in rows for token in row]
        return _encode_word_groups([flat], tokenizer, model, config.device,
                                   max_length)[0]
    pieces: List[np.ndarray] = []
    for start in range(0, len(rows), config.batch_rows):
        batch = rows[start : start + config.batch_rows]
        pieces.extend(
            _encode_word_groups(batch, tokenizer, model, config.device, max_length)
        )
    return np.concatenate(pieces, axis=0)


def export(config: ExportConfig) -> ExportResult:
    """Export the whole corpus; returns counts and the manifest location."""
    docs = read_corpus(config.corpus_path)
    tokenizer, model = _load_encoder(config.model_id, config.device)
    dim = int(model.config.hidden_size)
    max_length = _max_length(tokenizer, model)

    records: List[Tuple[str, np.ndarray]] = []
    skipped: List[str] = []
    for doc_id, text in docs:
        rows = segment_rows(text, config.geometry)
        try:
            vectors = _document_vectors(rows, tokenizer, model, config, max_length)
        except AlignmentError as exc:
            logger.warning("skipping %s: %s", doc_id, exc)
            skipped.append(doc_id)
            continue
        expected = sum(len(row) for row in rows)
        if vectors.shape != (expected, dim):
            logger.warning(
                "skipping %s: got %s vectors for %d tokens", doc_id,
                vectors.shape, expected,
            )
            skipped.append(doc_id)
            continue
        records.append((doc_id, vectors))

    write_records(config.output_path, dim, records)
    manifest_path = str(Path(config.output_path).with_suffix(".manifest.json"))
    manifest = {
        "model_id": config.model_id,
        "context_mode": config.context_mode,
        "alignment": ALIGNMENT_RULE,
        "geometry": list(config.geometry),
        "dim": dim,
        "corpus_path": str(config.corpus_path),
        "records": len(records),
        "skipped": skipped,
    }
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
    return ExportResult(
        records=len(records),
        skipped=skipped,
        dim=dim,
        output_path=str(config.output_path),
        manifest_path=manifest_path,
    )
