"""Tokenization and sentence segmentation, re-implemented to the training
pipeline's corpus contract so exported token counts line up exactly:

* every CJK character (U+4E00-U+9FFF, U+3400-U+4DBF) is its own token;
* maximal runs of other non-whitespace characters are single tokens;
* whitespace separates tokens and is discarded;
* a literal "[PAD]" token is escaped to "\\[PAD]";
* sentences split on the fixed delimiter set, empty pieces are skipped,
  each sentence keeps at most W tokens and a document keeps at most S
  sentences.
"""

from __future__ import annotations

from typing import List, Tuple

SENTENCE_DELIMITERS = frozenset("。！？!?.;；\n")

_PAD_MARKER = "[PAD]"
_PAD_ESCAPED = "\\[PAD]"


def _is_cjk(ch: str) -> bool:
    code = ord(ch)
    return 0x4E00 <= code <= 0x9FFF or 0x3400 <= code <= 0x4DBF


def tokenize(text: str) -> List[str]:
    tokens: List[str] = []
    run: List[str] = []
    for ch in text:
        if ch.isspace():
            if run:
                tokens.append("".join(run))
                run.clear()
        elif _is_cjk(ch):
            if run:
                tokens.append("".join(run))
                run.clear()
            tokens.append(ch)
        else:
            run.append(ch)
    if run:
        tokens.append("".join(run))
    return [_PAD_ESCAPED if t == _PAD_MARKER else t for t in tokens]


def segment_rows(text: str, geometry: Tuple[int, int]) -> List[List[str]]:
    """Kept sentences as truncated token lists (no padding); at most S rows
    of at most W tokens each."""
    s_count, w_count = geometry
    if s_count < 1 or w_count < 1:
        raise ValueError(f"geometry must be >= (1, 1), got {geometry}")
    rows: List[List[str]] = []
    start = 0
    pieces: List[str] = []
    for i, ch in enumerate(text):
        if ch in SENTENCE_DELIMITERS:
            pieces.append(text[start:i])
            start = i + 1
    pieces.append(text[start:])
    for piece in pieces:
        if len(rows) == s_count:
            break
        tokens = tokenize(piece)
        if tokens:
            rows.append(tokens[:w_count])
    return rows


def token_count(text: str, geometry: Tuple[int, int]) -> int:
    return sum(len(row) for row in segment_rows(text, geometry))
