"""Corpus ingestion: labeled documents, CJK-aware tokenization, fixed-size
sentence/word grids, and deterministic train/validation splits.

The eight news categories have a fixed canonical order; class indices used
anywhere else in the package refer to positions in ``CATEGORY_NAMES``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

from .rng import SplitMix64

CATEGORY_NAMES: Tuple[str, ...] = (
    "Technology",
    "Entertainment",
    "Fashion",
    "Politics",
    "Sports",
    "International",
    "Finance",
    "Health",
)

NUM_CATEGORIES = len(CATEGORY_NAMES)

#: Reserved padding marker.  ``tokenize`` can never emit it: a literal
#: "[PAD]" in source text is escaped to "\\[PAD]".
PAD_TOKEN = "[PAD]"
_PAD_ESCAPED = "\\[PAD]"

#: Default sentence boundary characters for news text.
SENTENCE_DELIMITERS = frozenset("。！？!?.;；\n")

# CJK Unified Ideographs plus Extension A.  Pragmatic cutoff: covers the
# characters that occur in mainstream Chinese news text.
_CJK_RANGES = ((0x4E00, 0x9FFF), (0x3400, 0x4DBF))


class CorpusError(ValueError):
    """Malformed corpus input (bad JSONL, unknown category, duplicate id, ...)."""


@dataclass(frozen=True)
class CategoryLabel:
    """One of the eight news categories; index and name are a bijection."""

    index: int
    name: str

    def __post_init__(self) -> None:
        if not 0 <= self.index < NUM_CATEGORIES:
            raise CorpusError(f"category index out of range: {self.index}")
        if CATEGORY_NAMES[self.index] != self.name:
            raise CorpusError(
                f"category name {self.name!r} does not match index {self.index}"
            )

    @classmethod
    def from_name(cls, name: str) -> "CategoryLabel":
        try:
            return cls(CATEGORY_NAMES.index(name), name)
        except ValueError:
            raise CorpusError(f"unknown category: {name!r}") from None

    @classmethod
    def from_index(cls, index: int) -> "CategoryLabel":
        if not 0 <= index < NUM_CATEGORIES:
            raise CorpusError(f"category index out of range: {index}")
        return cls(index, CATEGORY_NAMES[index])


@dataclass(frozen=True)
class Document:
    """A unit of classifiable text; ``label`` is None for unlabeled input."""

    id: str
    text: str
    label: Optional[CategoryLabel] = None

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusError("document id must be nonempty")


@dataclass
class SegmentGrid:
    """An S x W grid of tokens: S sentence rows, each padded to W slots.

    ``rows[i][j]`` is a real token for j < row_lengths[i] and PAD_TOKEN
    afterwards.
    """

    rows: List[List[str]]
    row_lengths: List[int]
    geometry: Tuple[int, int]

    @property
    def token_count(self) -> int:
        """Number of real (non-pad) tokens."""
        return sum(self.row_lengths)

    def real_tokens(self) -> Iterable[str]:
        """Real tokens in reading order (row-major)."""
        for row, length in zip(self.rows, self.row_lengths):
            yield from row[:length]

    def flat_slots(self) -> Iterable[str]:
        """All S*W slots in reading order, pads included."""
        for row in self.rows:
            yield from row


@dataclass
class SplitSpec:
    """Deterministic train/validation split: seeded shuffle, then cut at
    ceil(train_fraction * n).

    ``train_fraction`` is kept as an exact rational so that e.g. 8/10 of 10
    documents is exactly 8 regardless of float rounding.
    """

    train_fraction: Fraction = field(default_factory=lambda: Fraction(4, 5))
    seed: int = 0

    def __post_init__(self) -> None:
        if isinstance(self.train_fraction, float):
            # str() round-trips the decimal literal, so 0.8 -> 4/5 exactly.
            self.train_fraction = Fraction(str(self.train_fraction))
        elif not isinstance(self.train_fraction, Fraction):
            self.train_fraction = Fraction(self.train_fraction)
        if not 0 < self.train_fraction < 1:
            raise ValueError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}"
            )

    def train_count(self, n: int) -> int:
        return math.ceil(self.train_fraction * n)


def is_cjk(ch: str) -> bool:
    """True for code points in the CJK Unified Ideographs blocks."""
    code = ord(ch)
    return any(lo <= code <= hi for lo, hi in _CJK_RANGES)


def tokenize(text: str) -> List[str]:
    """Split text into tokens: one token per CJK character, one token per
    maximal run of other non-whitespace characters; whitespace separates
    tokens and is discarded.

    Total on any input.  A literal "[PAD]" token is escaped so the reserved
    pad marker can never be produced.
    """
    tokens: List[str] = []
    run: List[str] = []
    for ch in text:
        if ch.isspace():
            if run:
                tokens.append("".join(run))
                run.clear()
        elif is_cjk(ch):
            if run:
                tokens.append("".join(run))
                run.clear()
            tokens.append(ch)
        else:
            run.append(ch)
    if run:
        tokens.append("".join(run))
    return [_PAD_ESCAPED if t == PAD_TOKEN else t for t in tokens]


def split_sentences(
    text: str, delimiters: frozenset = SENTENCE_DELIMITERS
) -> List[str]:
    """Split text at delimiter characters; delimiters are consumed."""
    pieces: List[str] = []
    start = 0
    for i, ch in enumerate(text):
        if ch in delimiters:
            pieces.append(text[start:i])
            start = i + 1
    pieces.append(text[start:])
    return pieces


def segment(
    doc: Document,
    geometry: Tuple[int, int],
    delimiters: frozenset = SENTENCE_DELIMITERS,
) -> SegmentGrid:
    """Segment a document into an exact S x W token grid.

    Sentences are the delimiter-separated pieces of the text; pieces with no
    tokens are skipped.  Each kept sentence is truncated to W tokens, rows
    beyond S are dropped, short rows are padded with PAD_TOKEN and missing
    rows are all-pad.
    """
    s_count, w_count = geometry
    if s_count < 1 or w_count < 1:
        raise ValueError(f"geometry must be >= (1, 1), got {geometry}")

    rows: List[List[str]] = []
    lengths: List[int] = []
    for piece in split_sentences(doc.text, delimiters):
        if len(rows) == s_count:
            break
        tokens = tokenize(piece)
        if not tokens:
            continue
        kept = tokens[:w_count]
        lengths.append(len(kept))
        kept.extend([PAD_TOKEN] * (w_count - len(kept)))
        rows.append(kept)
    while len(rows) < s_count:
        rows.append([PAD_TOKEN] * w_count)
        lengths.append(0)
    return SegmentGrid(rows=rows, row_lengths=lengths, geometry=(s_count, w_count))


def load_jsonl(path: Union[str, Path]) -> List[Document]:
    """Load a UTF-8 JSONL corpus: one object per line with keys ``id``,
    ``text`` and optional ``category``.

    Blank lines are ignored.  Raises CorpusError with the offending line
    number for malformed JSON, missing/invalid fields, unknown categories,
    or duplicate ids.
    """
    docs: List[Document] = []
    seen: set = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise CorpusError(f"line {lineno}: expected a JSON object")
            doc_id = obj.get("id")
            text = obj.get("text")
            if not isinstance(doc_id, str) or not doc_id:
                raise CorpusError(f"line {lineno}: missing or invalid 'id'")
            if not isinstance(text, str):
                raise CorpusError(f"line {lineno}: missing or invalid 'text'")
            if doc_id in seen:
                raise CorpusError(f"line {lineno}: duplicate id {doc_id!r}")
            seen.add(doc_id)
            label = None
            if "category" in obj and obj["category"] is not None:
                try:
                    label = CategoryLabel.from_name(obj["category"])
                except CorpusError as exc:
                    raise CorpusError(f"line {lineno}: {exc}") from None
            docs.append(Document(id=doc_id, text=text, label=label))
    return docs


def write_jsonl(docs: Iterable[Document], path: Union[str, Path]) -> None:
    """Write documents in the JSONL corpus format (inverse of load_jsonl)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            obj = {"id": doc.id, "text": doc.text}
            if doc.label is not None:
                obj["category"] = doc.label.name
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def split_train_valid(
    docs: Sequence[Document], spec: SplitSpec
) -> Tuple[List[Document], List[Document]]:
    """Deterministic split: Fisher-Yates shuffle driven by splitmix64(spec.seed),
    then the first ceil(train_fraction * n) documents are the train set.
    """
    for doc in docs:
        if doc.label is None:
            raise CorpusError(f"unlabeled document in split input: {doc.id!r}")
    order = list(docs)
    SplitMix64(spec.seed).shuffle(order)
    cut = spec.train_count(len(order))
    return order[:cut], order[cut:]


def class_histogram(docs: Iterable[Document]) -> List[int]:
    """Per-category document counts, indexed by canonical category order."""
    counts = [0] * NUM_CATEGORIES
    for doc in docs:
        if doc.label is None:
            raise CorpusError(f"unlabeled document in histogram input: {doc.id!r}")
        counts[doc.label.index] += 1
    return counts
