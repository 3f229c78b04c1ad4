"""Seeded synthetic news corpus: eight classes with per-class character
vocabularies and a controllable shared-vocabulary overlap.

Stands in for real scraped news at desk scale.  Class c draws its
characters from a private CJK block; with probability ``overlap`` a
character comes from a pool shared by all classes instead, so overlap 0
gives linearly separable classes and higher values blur them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

from .corpus import NUM_CATEGORIES, CategoryLabel, Document
from .rng import SplitMix64, derive_seed

_CJK_BASE = 0x4E00


@dataclass
class SyntheticSpec:
    docs_per_class: int = 50
    vocab_per_class: int = 40
    shared_vocab_size: int = 40
    overlap: float = 0.0
    sentences: Tuple[int, int] = (5, 10)  # inclusive min/max per document
    words: Tuple[int, int] = (4, 8)  # inclusive min/max per sentence
    seed: int = 0

    def __post_init__(self) -> None:
        if self.docs_per_class < 0:
            raise ValueError("docs_per_class must be >= 0")
        if self.vocab_per_class < 1 or self.shared_vocab_size < 1:
            raise ValueError("vocabulary sizes must be >= 1")
        if not 0.0 <= self.overlap <= 1.0:
            raise ValueError("overlap must be in [0, 1]")
        self.sentences = (int(self.sentences[0]), int(self.sentences[1]))
        self.words = (int(self.words[0]), int(self.words[1]))
        for lo, hi in (self.sentences, self.words):
            if lo < 1 or hi < lo:
                raise ValueError("ranges must satisfy 1 <= min <= max")


def _class_chars(spec: SyntheticSpec, cls: int) -> List[str]:
    base = _CJK_BASE + cls * spec.vocab_per_class
    return [chr(base + j) for j in range(spec.vocab_per_class)]


def _shared_chars(spec: SyntheticSpec) -> List[str]:
    base = _CJK_BASE + NUM_CATEGORIES * spec.vocab_per_class
    return [chr(base + j) for j in range(spec.shared_vocab_size)]


def _range_draw(rng: SplitMix64, lo: int, hi: int) -> int:
    return lo + rng.next_below(hi - lo + 1)


def generate_corpus(spec: SyntheticSpec) -> List[Document]:
    """Deterministic corpus of 8 * docs_per_class labeled documents."""
    shared = _shared_chars(spec)
    docs: List[Document] = []
    for cls in range(NUM_CATEGORIES):
        chars = _class_chars(spec, cls)
        label = CategoryLabel.from_index(cls)
        for i in range(spec.docs_per_class):
            rng = SplitMix64(derive_seed(spec.seed, cls * spec.docs_per_class + i))
            n_sentences = _range_draw(rng, *spec.sentences)
            sentences = []
            for _ in range(n_sentences):
                n_words = _range_draw(rng, *spec.words)
                out = []
                for _ in range(n_words):
                    from_shared = rng.next_unit() < spec.overlap
                    pool = shared if from_shared else chars
                    out.append(pool[rng.next_below(len(pool))])
                sentences.append("".join(out))
            docs.append(
                Document(
                    id=f"synth-{cls}-{i:04d}",
                    text="。".join(sentences) + "。",
                    label=label,
                )
            )
    return docs
