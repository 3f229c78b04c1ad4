"""Token embedding providers and the EMB1 per-document embedding container.

Two padding strategies turn a SegmentGrid into the (S*W, dim) input matrix:

* pad-before: the pad marker is embedded like any other token, so pad rows
  carry the provider's "[PAD]" vector;
* pad-after: only real tokens are embedded and pad rows are exact zeros.

EMB1 is a little-endian binary container for precomputed per-document
embeddings (e.g. features exported from a pretrained encoder):

    header:  magic b"EMB1" | u32 version=1 | u32 dim | u64 record_count
    record:  u32 id_len | id UTF-8 bytes | u32 token_count
             | token_count*dim float32 values, row-major

Records hold vectors for real tokens only, in reading order; pad slots are
reconstructed as zero rows on load.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from .corpus import Document, SegmentGrid, segment
from .rng import bulk_symmetric, fnv1a64

EMB1_MAGIC = b"EMB1"
EMB1_VERSION = 1

DEFAULT_DIM = 768


class EmbeddingError(ValueError):
    """Invalid embedding input or EMB1 container."""


@dataclass
class EmbeddingMatrix:
    """Dense per-document input: one row per grid slot, row-major by sentence.

    ``pad_mask[i]`` is True where slot i holds a real token.  Under the
    pad-after strategy every masked-out row is exactly zero.
    """

    values: np.ndarray  # (S*W, dim) float32
    pad_mask: np.ndarray  # (S*W,) bool
    geometry: Tuple[int, int]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def hashed_embed(token: str, dim: int) -> np.ndarray:
    """Deterministic pseudo-random unit vector for a token.

    The FNV-1a 64-bit hash of the token's UTF-8 bytes seeds a splitmix64
    stream; `dim` draws are mapped to [-1, 1) via the top-53-bit conversion
    and the vector is L2-normalized.  The norm uses the correctly-rounded
    sum of squares (fsum), so the result is bit-identical on every platform
    and in any reimplementation of this algorithm.
    """
    if not token:
        raise EmbeddingError("cannot embed an empty token")
    if dim < 1:
        raise EmbeddingError(f"dim must be >= 1, got {dim}")
    vec = bulk_symmetric(fnv1a64(token.encode("utf-8")), dim)
    norm = math.sqrt(math.fsum((vec * vec).tolist()))
    return vec / norm


class HashedEmbedder:
    """Provider of hashed token embeddings with a per-token cache."""

    def __init__(self, dim: int = DEFAULT_DIM) -> None:
        if dim < 1:
            raise EmbeddingError(f"dim must be >= 1, got {dim}")
        self.dim = dim
        self._cache: Dict[str, np.ndarray] = {}

    def embed(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            vec = hashed_embed(token, self.dim).astype(np.float32)
            self._cache[token] = vec
        return vec


def embed_pad_before(grid: SegmentGrid, provider) -> EmbeddingMatrix:
    """Embed every grid slot, pads included: the provider is called on the
    literal pad marker, so pad rows are its (nonzero) "[PAD]" vector."""
    s_count, w_count = grid.geometry
    values = np.empty((s_count * w_count, provider.dim), dtype=np.float32)
    pos = 0
    for i, row in enumerate(grid.rows):
        for j, token in enumerate(row):
            try:
                values[pos] = provider.embed(token)
            except Exception as exc:
                raise EmbeddingError(
                    f"provider failed on token at sentence {i}, word {j}: {exc}"
                ) from exc
            pos += 1
    return EmbeddingMatrix(values=values, pad_mask=_pad_mask(grid), geometry=grid.geometry)


def embed_pad_after(grid: SegmentGrid, provider) -> EmbeddingMatrix:
    """Embed only real tokens; pad slots become exact zero rows."""
    s_count, w_count = grid.geometry
    values = np.zeros((s_count * w_count, provider.dim), dtype=np.float32)
    for i, (row, length) in enumerate(zip(grid.rows, grid.row_lengths)):
        base = i * w_count
        for j in range(length):
            try:
                values[base + j] = provider.embed(row[j])
            except Exception as exc:
                raise EmbeddingError(
                    f"provider failed on token at sentence {i}, word {j}: {exc}"
                ) from exc
    return EmbeddingMatrix(values=values, pad_mask=_pad_mask(grid), geometry=grid.geometry)


def _pad_mask(grid: SegmentGrid) -> np.ndarray:
    s_count, w_count = grid.geometry
    mask = np.zeros(s_count * w_count, dtype=bool)
    for i, length in enumerate(grid.row_lengths):
        mask[i * w_count : i * w_count + length] = True
    return mask


def write_embeddings(
    path: Union[str, Path],
    records: Sequence[Tuple[str, int, np.ndarray]],
) -> None:
    """Write (doc_id, token_count, matrix) records as an EMB1 file.

    All matrices must share one dim and each must have token_count rows.
    """
    dim = None
    for doc_id, token_count, matrix in records:
        matrix = np.asarray(matrix)
        if matrix.ndim != 2:
            raise EmbeddingError(f"record {doc_id!r}: matrix must be 2-D")
        if matrix.shape[0] != token_count:
            raise EmbeddingError(
                f"record {doc_id!r}: token_count {token_count} != rows {matrix.shape[0]}"
            )
        if dim is None:
            dim = matrix.shape[1]
        elif matrix.shape[1] != dim:
            raise EmbeddingError(
                f"record {doc_id!r}: dim {matrix.shape[1]} != {dim}"
            )
    if dim is None:
        dim = 0

    with open(path, "wb") as fh:
        fh.write(EMB1_MAGIC)
        fh.write(struct.pack("<IIQ", EMB1_VERSION, dim, len(records)))
        for doc_id, token_count, matrix in records:
            id_bytes = doc_id.encode("utf-8")
            fh.write(struct.pack("<I", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(struct.pack("<I", token_count))
            fh.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())


def read_embeddings(path: Union[str, Path]) -> Tuple[int, List[Tuple[str, np.ndarray]]]:
    """Read an EMB1 file; returns (dim, [(doc_id, (token_count, dim) matrix)])."""
    with open(path, "rb") as fh:
        data = fh.read()

    def take(n: int, offset: int) -> Tuple[bytes, int]:
        if offset + n > len(data):
            raise EmbeddingError("truncated EMB1 file")
        return data[offset : offset + n], offset + n

    magic, off = take(4, 0)
    if magic != EMB1_MAGIC:
        raise EmbeddingError(f"bad magic {magic!r}, expected {EMB1_MAGIC!r}")
    header, off = take(16, off)
    version, dim, count = struct.unpack("<IIQ", header)
    if version != EMB1_VERSION:
        raise EmbeddingError(f"unsupported EMB1 version {version}")

    records: List[Tuple[str, np.ndarray]] = []
    for _ in range(count):
        raw, off = take(4, off)
        (id_len,) = struct.unpack("<I", raw)
        raw, off = take(id_len, off)
        doc_id = raw.decode("utf-8")
        raw, off = take(4, off)
        (token_count,) = struct.unpack("<I", raw)
        raw, off = take(token_count * dim * 4, off)
        matrix = np.frombuffer(raw, dtype="<f4").reshape(token_count, dim).copy()
        records.append((doc_id, matrix))
    if off != len(data):
        raise EmbeddingError(f"{len(data) - off} trailing bytes after last record")
    return dim, records


def load_precomputed(
    path: Union[str, Path],
    corpus: Sequence[Document],
    geometry: Tuple[int, int],
    expected_dim: int | None = None,
) -> Dict[str, EmbeddingMatrix]:
    """Assemble per-document matrices from an EMB1 file with pad-after
    semantics (zero rows for pad slots).

    Validates the container against the corpus: the dim (when expected_dim
    is given), presence of every document, and per-document token counts
    against the segmentation of the same geometry.
    """
    dim, records = read_embeddings(path)
    if expected_dim is not None and dim != expected_dim:
        raise EmbeddingError(f"embedding dim {dim} does not match expected {expected_dim}")
    by_id = dict(records)
    if len(by_id) != len(records):
        raise EmbeddingError("duplicate doc ids in EMB1 file")

    s_count, w_count = geometry
    out: Dict[str, EmbeddingMatrix] = {}
    for doc in corpus:
        if doc.id not in by_id:
            raise EmbeddingError(f"document {doc.id!r} missing from embedding file")
        grid = segment(doc, geometry)
        vectors = by_id[doc.id]
        if vectors.shape[0] != grid.token_count:
            raise EmbeddingError(
                f"document {doc.id!r}: {vectors.shape[0]} stored vectors but "
                f"segmentation has {grid.token_count} tokens"
            )
        values = np.zeros((s_count * w_count, dim), dtype=np.float32)
        pos = 0
        for i, length in enumerate(grid.row_lengths):
            base = i * w_count
            values[base : base + length] = vectors[pos : pos + length]
            pos += length
        out[doc.id] = EmbeddingMatrix(
            values=values, pad_mask=_pad_mask(grid), geometry=geometry
        )
    return out


def export_hashed(
    docs: Iterable[Document],
    geometry: Tuple[int, int],
    dim: int,
    path: Union[str, Path],
) -> int:
    """Precompute hashed embeddings for real tokens and write an EMB1 cache.

    Returns the number of records written.
    """
    provider = HashedEmbedder(dim)
    records: List[Tuple[str, int, np.ndarray]] = []
    for doc in docs:
        grid = segment(doc, geometry)
        vectors = np.empty((grid.token_count, dim), dtype=np.float32)
        for k, token in enumerate(grid.real_tokens()):
            vectors[k] = provider.embed(token)
        records.append((doc.id, grid.token_count, vectors))
    write_embeddings(path, records)
    return len(records)
