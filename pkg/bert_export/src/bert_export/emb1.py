"""EMB1 writer: the little-endian per-document embedding container consumed
by the training pipeline.

    header:  magic b"EMB1" | u32 version=1 | u32 dim | u64 record_count
    record:  u32 id_len | id UTF-8 bytes | u32 token_count
             | token_count*dim float32 values, row-major
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

MAGIC = b"EMB1"
VERSION = 1


def write_records(
    path: Union[str, Path],
    dim: int,
    records: List[Tuple[str, np.ndarray]],
) -> None:
    """Write (doc_id, (token_count, dim) float32 matrix) records."""
    for doc_id, matrix in records:
        if matrix.ndim != 2 or matrix.shape[1] != dim:
            raise ValueError(
                f"record {doc_id!r}: expected (*, {dim}) matrix, got {matrix.shape}"
            )
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIQ", VERSION, dim, len(records)))
        for doc_id, matrix in records:
            id_bytes = doc_id.encode("utf-8")
            fh.write(struct.pack("<I", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(struct.pack("<I", matrix.shape[0]))
            fh.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())
