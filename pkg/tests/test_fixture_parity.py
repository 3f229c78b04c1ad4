"""The shared segmentation-parity fixture: frozen per-document token counts
that the embedding exporter's re-implemented rules must reproduce."""

import json
from pathlib import Path

from hierdoc.corpus import load_jsonl, segment

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def test_token_counts_match_frozen_fixture():
    payload = json.loads((FIXTURES / "zh_news_10.token_counts.json").read_text())
    geometry = tuple(payload["geometry"])
    docs = load_jsonl(FIXTURES / "zh_news_10.jsonl")
    assert len(docs) == 10
    got = {doc.id: segment(doc, geometry).token_count for doc in docs}
    assert got == payload["counts"]
