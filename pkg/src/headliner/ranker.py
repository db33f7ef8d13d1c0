"""Bidirectional language model and K-best candidate re-ranking.

The LM scores a candidate compression in both directions; the score is
length-normalized with lp(n) = ((5 + n) / 6)^alpha and combined with the
compressor's Viterbi score as combined = model_score + lambda * lm_norm.
The embedding table is shared with the output projection (weight tying).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node, ParameterStore
from .corpus import PAD_ID, Vocabulary
from .encoder import lstm_weights, run_lstm
from .semicrf import Segmentation


class LanguageModel:
    """Forward and backward LSTM LMs with a tied embedding/output matrix."""

    def __init__(self, store: ParameterStore, vocab: Vocabulary, dim: int = 64,
                 layers: int = 2, prefix: str = "lm",
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.vocab = vocab
        self.dim = dim
        self.layers = layers
        # one storage for both the embedding lookup and the output projection
        self.embedding = store.add(f"{prefix}.emb", rng.uniform(-0.1, 0.1, (len(vocab), dim)))
        self.b_l = store.add(f"{prefix}.b_l", np.zeros(len(vocab)))
        self.cells = {
            direction: [lstm_weights(store, f"{prefix}.{direction}.l{layer}", dim, dim, rng)
                        for layer in range(layers)]
            for direction in ("fw", "bw")
        }

    def _direction_logprobs(self, inputs: list[int], targets: list[int],
                            direction: str) -> Node:
        """Sum of log p(target_t | inputs_{1..t}) for one direction."""
        rows = [self.embedding[i] for i in inputs]
        for weights in self.cells[direction]:
            rows = run_lstm(rows, weights, self.dim)
        total = None
        for h, target in zip(rows, targets):
            logits = ad.add(ad.matmul(self.embedding, h), self.b_l)
            lp = ad.sub(logits[target], ad.logsumexp(logits))
            total = lp if total is None else ad.add(total, lp)
        return total

    def loglikelihood_node(self, token_ids: list[int]) -> Node:
        """Forward plus backward log-likelihood (autodiff node)."""
        if not token_ids:
            raise ValueError("cannot score an empty token sequence")
        fwd_inputs = [PAD_ID] + list(token_ids[:-1])
        fwd = self._direction_logprobs(fwd_inputs, list(token_ids), "fw")
        rev = list(reversed(token_ids))
        bwd_inputs = [PAD_ID] + rev[:-1]
        bwd = self._direction_logprobs(bwd_inputs, rev, "bw")
        return ad.add(fwd, bwd)

    def loss(self, token_ids: list[int]) -> Node:
        """Mean per-token, per-direction cross-entropy."""
        ll = self.loglikelihood_node(token_ids)
        return ad.mul(ll, ad.constant(-1.0 / (2 * len(token_ids))))


def lm_loglikelihood(lm: LanguageModel, token_ids: list[int]) -> float:
    return lm.loglikelihood_node(token_ids).item()


def length_penalty(length: int, alpha: float) -> float:
    """lp = ((5 + length) / 6)^alpha; identity for alpha = 0 or length = 1."""
    if length < 1:
        raise ValueError("length must be >= 1")
    return ((5.0 + length) / 6.0) ** alpha


@dataclass
class CompressionCandidate:
    segmentation: Segmentation
    model_score: float
    lm_score: float      # length-normalized LM log-likelihood
    combined: float
    text: list[str]      # kept surfaces, source order
    rank: int            # position in the original K-best list


def rerank(candidates: list[tuple[Segmentation, float]], surfaces: list[str],
           token_ids: list[int], lm: LanguageModel | None, lam: float,
           alpha: float) -> tuple[CompressionCandidate, list[CompressionCandidate]]:
    """Combine K-best Viterbi scores with normalized LM scores.

    Empty-text candidates are dropped; ties keep the original K-best order.
    """
    scored = []
    for rank, (segmentation, model_score) in enumerate(candidates):
        mask = segmentation.to_mask()
        kept_ids = [t for t, m in zip(token_ids, mask) if m]
        kept_text = [s for s, m in zip(surfaces, mask) if m]
        if not kept_text:
            continue
        if lm is not None and lam != 0.0:
            raw = lm_loglikelihood(lm, kept_ids)
        else:
            raw = 0.0
        lm_norm = raw / length_penalty(len(kept_ids), alpha)
        combined = model_score + lam * lm_norm
        scored.append(CompressionCandidate(segmentation, model_score, lm_norm,
                                           combined, kept_text, rank))
    if not scored:
        raise ValueError("no non-empty candidates to rank")
    ordered = sorted(scored, key=lambda c: (-c.combined, c.rank))
    return ordered[0], ordered


def perplexity(mean_nll: float) -> float:
    return float(np.exp(mean_nll))
