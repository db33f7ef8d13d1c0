"""Naive independent tagger and linear-chain CRF over keep/delete labels.

Labels: DELETE = 0, KEEP = 1.  All potentials live in log-space; the
partition function and NLL are autodiff nodes, decoding runs on plain
numpy values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node, ParameterStore

DELETE, KEEP = 0, 1
N_LABELS = 2


@dataclass
class PotentialTable:
    emissions: Node      # n x 2, log-space
    transitions: Node    # 2 x 2, log-space

    @property
    def n(self) -> int:
        return self.emissions.shape[0]


def potential_table(emissions, transitions) -> PotentialTable:
    """Wrap raw arrays (or nodes) as a PotentialTable."""
    return PotentialTable(ad.as_node(emissions), ad.as_node(transitions))


class ChainCRF:
    """Two-layer emission head plus a learned 2x2 transition matrix."""

    def __init__(self, store: ParameterStore, d_h: int, hidden: int = 64,
                 prefix: str = "crf", rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.W_e1 = store.add(f"{prefix}.W_e1", rng.uniform(-0.1, 0.1, (d_h, hidden)))
        self.b_e1 = store.add(f"{prefix}.b_e1", np.zeros(hidden))
        self.W_e2 = store.add(f"{prefix}.W_e2", rng.uniform(-0.1, 0.1, (hidden, N_LABELS)))
        self.b_e2 = store.add(f"{prefix}.b_e2", np.zeros(N_LABELS))
        self.T = store.add(f"{prefix}.T", np.zeros((N_LABELS, N_LABELS)))

    def emission_potentials(self, h: Node) -> Node:
        hidden = ad.tanh(ad.add(ad.matmul(h, self.W_e1), self.b_e1))
        return ad.add(ad.matmul(hidden, self.W_e2), self.b_e2)

    def potentials(self, h: Node) -> PotentialTable:
        return PotentialTable(self.emission_potentials(h), self.T)


def score_sequence(pot: PotentialTable, labels) -> Node:
    """Score(x, y): emissions along y plus transitions, first term omitted."""
    labels = np.asarray(labels, dtype=int)
    n = pot.n
    if len(labels) != n:
        raise ValueError(f"label length {len(labels)} != {n} positions")
    score = ad.sum_(pot.emissions[(np.arange(n), labels)])
    if n > 1:
        score = ad.add(score, ad.sum_(pot.transitions[(labels[:-1], labels[1:])]))
    return score


def crf_log_partition(pot: PotentialTable) -> Node:
    """log sum over all 2^n label sequences, by the forward recursion."""
    n = pot.n
    alpha = pot.emissions[0]
    for i in range(1, n):
        prev = ad.reshape(alpha, (N_LABELS, 1))
        step = ad.add(ad.add(prev, pot.transitions),
                      ad.reshape(pot.emissions[i], (1, N_LABELS)))
        alpha = ad.logsumexp(step, axis=0)
    return ad.logsumexp(alpha)


def crf_nll(pot: PotentialTable, gold) -> Node:
    return ad.sub(crf_log_partition(pot), score_sequence(pot, gold))


def crf_marginals(pot: PotentialTable) -> np.ndarray:
    """Per-position label marginals via forward-backward (values only)."""
    em = pot.emissions.value
    T = pot.transitions.value
    n = em.shape[0]
    alpha = np.zeros((n, N_LABELS))
    beta = np.zeros((n, N_LABELS))
    alpha[0] = em[0]
    for i in range(1, n):
        alpha[i] = _lse(alpha[i - 1][:, None] + T, axis=0) + em[i]
    for i in range(n - 2, -1, -1):
        beta[i] = _lse(T + em[i + 1][None, :] + beta[i + 1][None, :], axis=1)
    log_z = _lse(alpha[-1], axis=0)
    return np.exp(alpha + beta - log_z)


def _lse(a: np.ndarray, axis: int) -> np.ndarray:
    m = a.max(axis=axis, keepdims=True)
    out = m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def crf_viterbi(pot: PotentialTable) -> tuple[list[int], float]:
    """Exact argmax labeling.

    Ties resolve toward DELETE and toward the lower backpointer (argmax
    returns the first maximal index).
    """
    em = pot.emissions.value
    T = pot.transitions.value
    n = em.shape[0]
    delta = em[0].copy()
    back = np.zeros((n, N_LABELS), dtype=int)
    for i in range(1, n):
        scores = delta[:, None] + T  # prev x cur
        back[i] = scores.argmax(axis=0)
        delta = scores.max(axis=0) + em[i]
    best_last = int(delta.argmax())
    labels = [best_last]
    for i in range(n - 1, 0, -1):
        labels.append(int(back[i][labels[-1]]))
    labels.reverse()
    return labels, float(delta.max())


def decode_compression(pot: PotentialTable) -> list[int]:
    """Viterbi decode with the non-empty guard.

    An all-delete decode is replaced by keeping the single token with the
    highest keep-marginal (earliest position on ties).
    """
    mask, _ = crf_viterbi(pot)
    if not any(mask):
        marg = crf_marginals(pot)[:, KEEP]
        mask = [0] * len(mask)
        mask[int(marg.argmax())] = 1
    return mask


class NaiveTagger:
    """Position-independent keep/delete head: p(keep) = sigmoid(W_c . h_i + b_c)."""

    def __init__(self, store: ParameterStore, d_h: int, prefix: str = "naive",
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.W_c = store.add(f"{prefix}.W_c", rng.uniform(-0.1, 0.1, d_h))
        self.b_c = store.add(f"{prefix}.b_c", np.zeros(()))

    def logits(self, h: Node) -> Node:
        return ad.add(ad.matmul(h, self.W_c), self.b_c)

    def probabilities(self, h: Node) -> Node:
        return ad.sigmoid(self.logits(h))


def naive_tag(probs: np.ndarray) -> list[int]:
    """Keep iff p > 0.5; an empty result keeps the highest-probability token."""
    mask = [1 if p > 0.5 else 0 for p in probs]
    if not any(mask):
        mask[int(np.asarray(probs).argmax())] = 1
    return mask


def bce_with_logits(logits: Node, targets) -> Node:
    """Mean binary cross-entropy, computed stably from logits."""
    t = np.asarray(targets, dtype=np.float64)
    zeros = ad.constant(np.zeros(logits.shape))
    softplus = ad.logsumexp(ad.stack([logits, zeros], axis=0), axis=0)
    per_pos = ad.sub(softplus, ad.mul(logits, ad.constant(t)))
    return ad.mean(per_pos)
