"""Shared brute-force oracles and finite-difference checking for the tests.

These deliberately re-derive scores by direct enumeration / explicit sums,
independent of the DP implementations they are used to check.
"""
from __future__ import annotations

import itertools

import numpy as np

from headliner import autodiff as ad
from headliner.autodiff import ParameterStore
from headliner.corpus import AnnotatedToken, Sentence
from headliner.semicrf import TAG_O, Segment, SegmentScorer, expand_segment_tags


# ---- chain CRF oracles ---------------------------------------------------

def chain_enumerate_scores(em: np.ndarray, T: np.ndarray) -> list[float]:
    n = em.shape[0]
    scores = []
    for y in itertools.product(range(2), repeat=n):
        s = sum(em[i, y[i]] for i in range(n))
        s += sum(T[y[i - 1], y[i]] for i in range(1, n))
        scores.append(float(s))
    return scores


def chain_brute_log_partition(em, T) -> float:
    return float(np.logaddexp.reduce(chain_enumerate_scores(em, T)))


# ---- SCRF oracles --------------------------------------------------------

def enumerate_segmentations(n: int, max_len: int):
    def rec(start):
        if start > n:
            yield []
            return
        for length in range(1, min(max_len, n - start + 1) + 1):
            for label in (0, 1):
                for rest in rec(start + length):
                    yield [Segment(start, start + length - 1, label)] + rest

    yield from rec(1)


def brute_segmentation_score(scorer: SegmentScorer, h_values: np.ndarray,
                             segments: list[Segment]) -> float:
    """Explicit per-position emission sum plus full word-level tag chain."""
    W = scorer.W_e.value
    e_len = scorer.e_len.value
    total = 0.0
    for seg in segments:
        for i in range(seg.start, seg.end + 1):
            h_prime = np.concatenate([
                h_values[i - 1],
                h_values[seg.start - 1] - h_values[seg.end - 1],
                e_len[seg.length - 1],
            ])
            total += float(h_prime @ W[:, seg.label])
    T = scorer.T.value
    if scorer.transition_mode == "bieuo":
        tags = [TAG_O]
        for seg in segments:
            tags.extend(expand_segment_tags(seg.length, seg.label))
        tags.append(TAG_O)
        total += sum(float(T[a, b]) for a, b in zip(tags[:-1], tags[1:]))
    else:
        for a, b in zip(segments[:-1], segments[1:]):
            total += float(T[a.label, b.label])
    return total


def make_random_scrf(n: int, max_len: int, seed: int, d_h: int = 3,
                     mode: str = "bieuo", len_dim: int = 2):
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    scorer = SegmentScorer(store, d_h, max_len=max_len, len_dim=len_dim,
                           transition_mode=mode, rng=rng)
    scorer.T.value[...] = rng.normal(size=scorer.T.value.shape)
    h_values = rng.normal(size=(n, d_h))
    return scorer, store, h_values


# ---- finite differences --------------------------------------------------

def finite_difference_report(params, loss_fn, eps: float = 1e-4,
                             rel_tol: float = 1e-4) -> tuple[float, float]:
    """Compare analytic and central-difference gradients.

    Returns (fraction of coordinates within rel_tol, worst relative error).
    Near-zero coordinate pairs (both below 1e-8) count as agreeing.
    """
    loss = loss_fn()
    ad.backward(loss)
    analytic_grads = [param.grad.copy() for param in params]
    ok = 0
    total = 0
    worst = 0.0
    for param, analytic in zip(params, analytic_grads):
        for idx in np.ndindex(param.value.shape):
            param.value[idx] += eps
            up = loss_fn().item()
            param.value[idx] -= 2 * eps
            down = loss_fn().item()
            param.value[idx] += eps
            numeric = (up - down) / (2 * eps)
            a = analytic[idx]
            denom = abs(numeric) + abs(a)
            rel = 0.0 if denom < 1e-8 else abs(numeric - a) / denom
            worst = max(worst, rel)
            ok += rel < rel_tol
            total += 1
    return ok / total, worst


# ---- tiny corpus builders ------------------------------------------------

def make_sentence(surfaces, pos=None, keep=None) -> Sentence:
    pos = pos or ["X"] * len(surfaces)
    tokens = [AnnotatedToken(s, p, "dep", "x", "O") for s, p in zip(surfaces, pos)]
    return Sentence(tokens, keep_labels=keep)
