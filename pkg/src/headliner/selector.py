"""Word-saliency model and most-salient-sentence selection.

The paragraph is encoded as one token sequence; each word gets a saliency
probability, sentences are ranked by the mean probability over their span,
and the earliest maximal sentence wins.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Node, ParameterStore
from .chain import bce_with_logits
from .corpus import Paragraph
from .encoder import Embeddings


class SaliencyModel:
    """Sigmoid head over per-word encoder states."""

    def __init__(self, store: ParameterStore, embeddings: Embeddings, encoder,
                 prefix: str = "sel", rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.embeddings = embeddings
        self.encoder = encoder
        self.W_s = store.add(f"{prefix}.W_s", rng.uniform(-0.1, 0.1, encoder.out_dim))
        self.b_s = store.add(f"{prefix}.b_s", np.zeros(()))

    def _paragraph_embedding(self, paragraph: Paragraph,
                             contextual: np.ndarray | None = None) -> Node:
        parts = []
        offset = 0
        for sent in paragraph.sentences:
            ctx = None
            if contextual is not None:
                ctx = contextual[offset:offset + len(sent)]
            parts.append(self.embeddings.embed(sent, contextual=ctx))
            offset += len(sent)
        return parts[0] if len(parts) == 1 else ad.concat(parts, axis=0)

    def logits(self, paragraph: Paragraph, training: bool = False,
               rng: np.random.Generator | None = None,
               contextual: np.ndarray | None = None) -> Node:
        embedded = self._paragraph_embedding(paragraph, contextual)
        h = self.encoder.encode(embedded, training=training, rng=rng)
        return ad.add(ad.matmul(h, self.W_s), self.b_s)

    def loss(self, paragraph: Paragraph, rng: np.random.Generator | None = None,
             training: bool = True) -> Node:
        if paragraph.saliency_labels is None:
            raise ValueError(f"record {paragraph.record_id!r} has no saliency labels")
        z = self.logits(paragraph, training=training, rng=rng)
        return bce_with_logits(z, paragraph.saliency_labels)


def word_saliency(paragraph: Paragraph, model: SaliencyModel,
                  contextual: np.ndarray | None = None) -> np.ndarray:
    """One probability per word across the whole paragraph."""
    z = model.logits(paragraph, training=False, contextual=contextual)
    return 1.0 / (1.0 + np.exp(-z.value))


def sentence_saliency(sentence_length: int, word_probs, offset: int = 0) -> float:
    """Arithmetic mean of the sentence's word probabilities."""
    probs = np.asarray(word_probs, dtype=np.float64)
    span = probs[offset:offset + sentence_length]
    if len(span) != sentence_length:
        raise ValueError("word probabilities do not cover the sentence span")
    return float(span.mean())


def select_sentence(paragraph: Paragraph, model: SaliencyModel,
                    contextual: np.ndarray | None = None) -> int:
    """Index of the maximal-saliency sentence; earliest index on ties."""
    probs = word_saliency(paragraph, model, contextual=contextual)
    return select_by_probs(paragraph, probs)


def select_by_probs(paragraph: Paragraph, word_probs) -> int:
    best_idx, best_score = 0, -np.inf
    offset = 0
    for idx, sent in enumerate(paragraph.sentences):
        score = sentence_saliency(len(sent), word_probs, offset)
        if score > best_score:
            best_idx, best_score = idx, score
        offset += len(sent)
    return best_idx


def lead1_select(paragraph: Paragraph) -> int:
    """LEAD-1 baseline: always the first sentence."""
    return 0
