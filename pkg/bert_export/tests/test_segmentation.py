"""Segmentation rule parity with the training pipeline's corpus contract."""

import json

from bert_export.segmentation import segment_rows, token_count, tokenize

from conftest import CORPUS, COUNTS


class TestTokenize:
    def test_cjk_per_character(self):
        assert tokenize("台灣 ok") == ["台", "灣", "ok"]

    def test_empty(self):
        assert tokenize("") == []

    def test_whitespace_words(self):
        assert tokenize("abc def") == ["abc", "def"]

    def test_pad_marker_escaped(self):
        assert tokenize("[PAD]") == ["\\[PAD]"]


class TestSegmentRows:
    def test_rows_truncate_and_drop(self):
        text = "。".join("字" * 12 for _ in range(8)) + "。"
        rows = segment_rows(text, (6, 10))
        assert len(rows) == 6
        assert all(len(row) == 10 for row in rows)

    def test_empty_pieces_skipped(self):
        rows = segment_rows("一。。二。", (5, 3))
        assert [len(r) for r in rows] == [1, 1]

    def test_empty_text(self):
        assert segment_rows("", (3, 4)) == []


def test_token_counts_match_frozen_fixture():
    payload = json.loads(COUNTS.read_text(encoding="utf-8"))
    geometry = tuple(payload["geometry"])
    got = {}
    with open(CORPUS, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                got[obj["id"]] = token_count(obj["text"], geometry)
    assert got == payload["counts"]
