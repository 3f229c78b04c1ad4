"""Shared fixtures: a tiny 768-dim bidirectional-transformer encoder built
locally (no hub access) with a character vocabulary covering the corpus
fixture, exercised through the same transformers code paths as a real
pretrained checkpoint."""

import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).resolve().parents[2] / "fixtures"
CORPUS = FIXTURES / "zh_news_10.jsonl"
COUNTS = FIXTURES / "zh_news_10.token_counts.json"


def _fixture_vocab():
    from bert_export.segmentation import tokenize

    tokens = set()
    with open(CORPUS, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                tokens.update(tokenize(json.loads(line)["text"]))
    specials = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    return specials + sorted(tokens)


@pytest.fixture(scope="session")
def tiny_encoder_dir(tmp_path_factory):
    import torch
    from transformers import BertConfig, BertModel, BertTokenizer

    target = tmp_path_factory.mktemp("tiny-encoder")
    vocab = _fixture_vocab()
    vocab_path = target / "vocab.txt"
    vocab_path.write_text("\n".join(vocab) + "\n", encoding="utf-8")
    try:
        tokenizer = BertTokenizer(vocab=str(vocab_path), do_lower_case=False)
    except TypeError:
        # transformers < 5 constructor name
        tokenizer = BertTokenizer(vocab_file=str(vocab_path), do_lower_case=False)

    torch.manual_seed(1234)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=768,
        num_hidden_layers=2,
        num_attention_heads=12,
        intermediate_size=512,
        max_position_embeddings=128,
    )
    model = BertModel(config)
    model.eval()
    model.save_pretrained(target)
    tokenizer.save_pretrained(target)
    return target
