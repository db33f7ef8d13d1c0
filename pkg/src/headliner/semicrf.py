"""Semi-Markov CRF over labeled segmentations of a sentence.

A segmentation is an ordered, exhaustive cover of positions 1..n by
segments <start, end, label> with length at most L.  Segment emissions
combine per-position hidden states, the boundary difference
h_start - h_end, and a span-length embedding.  Transitions expand each
segment into word-level B/I/E/U tags crossed with the keep/delete label,
plus an O sentinel at the sentence boundaries; a plain 2x2 segment-label
transition matrix is available as a configuration switch.

Partition/NLL are autodiff graphs; Viterbi and K-best run on numpy values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node, ParameterStore
from .chain import DELETE, KEEP, N_LABELS

# word-level tag indices: role * 2 + label for roles B,I,E,U; O is the sentinel
ROLE_B, ROLE_I, ROLE_E, ROLE_U = 0, 1, 2, 3
TAG_O = 8
N_TAGS = 9


def tag_index(role: int, label: int) -> int:
    return role * N_LABELS + label


def expand_segment_tags(length: int, label: int) -> list[int]:
    """Word-level BIEUO tags for one segment (U for unit, else B I* E)."""
    if length == 1:
        return [tag_index(ROLE_U, label)]
    inner = [tag_index(ROLE_I, label)] * (length - 2)
    return [tag_index(ROLE_B, label)] + inner + [tag_index(ROLE_E, label)]


def first_tag(length: int, label: int) -> int:
    return tag_index(ROLE_U if length == 1 else ROLE_B, label)


def last_tag(length: int, label: int) -> int:
    return tag_index(ROLE_U if length == 1 else ROLE_E, label)


@dataclass(frozen=True)
class Segment:
    start: int  # 1-based, inclusive
    end: int    # 1-based, inclusive
    label: int

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass
class Segmentation:
    segments: list[Segment]

    def validate(self, n: int, max_len: int):
        if not self.segments:
            raise ValueError("empty segmentation")
        if self.segments[0].start != 1 or self.segments[-1].end != n:
            raise ValueError("segmentation must cover positions 1..n")
        for prev, cur in zip(self.segments, self.segments[1:]):
            if cur.start != prev.end + 1:
                raise ValueError("segments must be adjacent")
        for seg in self.segments:
            if seg.start > seg.end:
                raise ValueError("segment start exceeds end")
            if seg.length > max_len:
                raise ValueError(f"segment length {seg.length} exceeds L={max_len}")

    def to_mask(self) -> list[int]:
        mask = []
        for seg in self.segments:
            mask.extend([seg.label] * seg.length)
        return mask

    def key(self) -> tuple:
        return tuple((s.start, s.end, s.label) for s in self.segments)


def mask_to_segmentation(mask: list[int], max_len: int) -> Segmentation:
    """Maximal equal-label runs, split left-to-right at length L."""
    if not mask:
        raise ValueError("empty mask")
    segments = []
    start = 0
    for i in range(1, len(mask) + 1):
        if i == len(mask) or mask[i] != mask[start]:
            run_start = start
            while run_start < i:
                run_end = min(run_start + max_len, i)
                segments.append(Segment(run_start + 1, run_end, int(mask[start])))
                run_start = run_end
            start = i
    return Segmentation(segments)


class SegmentScorer:
    """Trainable segment emission and transition parameters."""

    def __init__(self, store: ParameterStore, d_h: int, max_len: int = 6,
                 len_dim: int = 30, transition_mode: str = "bieuo",
                 prefix: str = "scrf", rng: np.random.Generator | None = None):
        if transition_mode not in ("bieuo", "segment"):
            raise ValueError(f"unknown transition_mode {transition_mode!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d_h = d_h
        self.max_len = max_len
        self.len_dim = len_dim
        self.transition_mode = transition_mode
        width = 2 * d_h + len_dim
        self.W_e = store.add(f"{prefix}.W_e", rng.uniform(-0.1, 0.1, (width, N_LABELS)))
        self.e_len = store.add(f"{prefix}.e_len", rng.uniform(-0.1, 0.1, (max_len, len_dim)))
        if transition_mode == "bieuo":
            self.T = store.add(f"{prefix}.T", np.zeros((N_TAGS, N_TAGS)))
        else:
            self.T = store.add(f"{prefix}.T2", np.zeros((N_LABELS, N_LABELS)))

    # ---- autodiff (node) scoring ------------------------------------
    def emission_vector(self, h: Node, start: int, end: int) -> Node:
        """Emission scores for segment [start, end] (1-based), both labels."""
        if not (1 <= start <= end <= h.shape[0]):
            raise ValueError(f"invalid span ({start}, {end}) for n={h.shape[0]}")
        length = end - start + 1
        if length > self.max_len:
            raise ValueError(f"segment length {length} exceeds L={self.max_len}")
        span_sum = ad.sum_(h[start - 1:end], axis=0)
        diff = ad.sub(h[start - 1], h[end - 1])
        len_emb = self.e_len[length - 1]
        scale = ad.constant(float(length))
        h_prime = ad.concat([span_sum, ad.mul(scale, diff), ad.mul(scale, len_emb)], axis=0)
        return ad.matmul(h_prime, self.W_e)

    def segment_emission(self, h: Node, seg: Segment) -> Node:
        return self.emission_vector(h, seg.start, seg.end)[seg.label]

    def _intra_node(self, length: int, label: int) -> Node | None:
        if self.transition_mode == "segment" or length == 1:
            return None
        tags = expand_segment_tags(length, label)
        idx = (np.array(tags[:-1]), np.array(tags[1:]))
        return ad.sum_(self.T[idx])

    def _cross_node(self, prev: Segment | None, seg: Segment) -> Node | None:
        if self.transition_mode == "segment":
            if prev is None:
                return None
            return self.T[(prev.label, seg.label)]
        src = TAG_O if prev is None else last_tag(prev.length, prev.label)
        return self.T[(src, first_tag(seg.length, seg.label))]

    def _end_node(self, seg: Segment) -> Node | None:
        if self.transition_mode == "segment":
            return None
        return self.T[(last_tag(seg.length, seg.label), TAG_O)]

    def segment_transition(self, prev: Segment | None, seg: Segment) -> Node:
        """Boundary-crossing entry plus the intra-segment entries of `seg`."""
        if prev is not None and seg.start != prev.end + 1:
            raise ValueError("segments are not adjacent")
        terms = [t for t in (self._cross_node(prev, seg), self._intra_node(seg.length, seg.label))
                 if t is not None]
        if not terms:
            return ad.constant(0.0)
        total = terms[0]
        for t in terms[1:]:
            total = ad.add(total, t)
        return total

    def score_segmentation(self, h: Node, segmentation: Segmentation) -> Node:
        segmentation.validate(h.shape[0], self.max_len)
        total = None
        prev = None
        for seg in segmentation.segments:
            term = ad.add(self.segment_emission(h, seg), self.segment_transition(prev, seg))
            total = term if total is None else ad.add(total, term)
            prev = seg
        end = self._end_node(prev)
        if end is not None:
            total = ad.add(total, end)
        return total

    # ---- numpy value tables for decoding ----------------------------
    def value_tables(self, h_value: np.ndarray):
        """(emission[start-1, length-1, label], intra[length-1, label],
        cross[prev_tag, tag], end[tag]) as plain arrays."""
        n = h_value.shape[0]
        L = self.max_len
        W = self.W_e.value
        elen = self.e_len.value
        prefix = np.concatenate([np.zeros((1, h_value.shape[1])), np.cumsum(h_value, axis=0)])
        em = np.full((n, L, N_LABELS), -np.inf)
        for start in range(1, n + 1):
            for length in range(1, min(L, n - start + 1) + 1):
                end = start + length - 1
                span_sum = prefix[end] - prefix[start - 1]
                diff = h_value[start - 1] - h_value[end - 1]
                h_prime = np.concatenate([span_sum, length * diff, length * elen[length - 1]])
                em[start - 1, length - 1] = h_prime @ W
        intra = np.zeros((L, N_LABELS))
        if self.transition_mode == "bieuo":
            Tv = self.T.value
            for length in range(2, L + 1):
                for label in range(N_LABELS):
                    tags = expand_segment_tags(length, label)
                    intra[length - 1, label] = Tv[tags[:-1], tags[1:]].sum()
            cross = Tv
            end_scores = Tv[:, TAG_O]
        else:
            cross = self.T.value
            end_scores = np.zeros(N_TAGS)
        return em, intra, cross, end_scores

    def cross_value(self, cross: np.ndarray, prev: tuple | None, length: int, label: int) -> float:
        """Transition value into a (length, label) segment from prev state.

        prev is (label, unit_flag) or None for sentence start.
        """
        if self.transition_mode == "segment":
            if prev is None:
                return 0.0
            return float(cross[prev[0], label])
        src = TAG_O if prev is None else last_tag(1 if prev[1] else 2, prev[0])
        return float(cross[src, first_tag(length, label)])

    def end_value(self, end_scores: np.ndarray, state: tuple) -> float:
        if self.transition_mode == "segment":
            return 0.0
        return float(end_scores[last_tag(1 if state[1] else 2, state[0])])


def scrf_log_partition(h: Node, scorer: SegmentScorer) -> Node:
    """log sum over all valid labeled segmentations (semi-Markov forward)."""
    n = h.shape[0]
    L = scorer.max_len
    # per-position map: (label, unit_flag) -> alpha node
    alpha: list[dict[tuple, Node]] = [dict() for _ in range(n + 1)]
    cross_cache: dict[tuple, Node] = {}

    def cross(prev_state, length, label) -> Node | None:
        key = (prev_state, length == 1, label)
        if key not in cross_cache:
            if scorer.transition_mode == "segment":
                if prev_state is None:
                    cross_cache[key] = None
                else:
                    cross_cache[key] = scorer.T[(prev_state[0], label)]
            else:
                src = TAG_O if prev_state is None else last_tag(1 if prev_state[1] else 2,
                                                                prev_state[0])
                cross_cache[key] = scorer.T[(src, first_tag(length, label))]
        return cross_cache[key]

    for j in range(1, n + 1):
        terms: dict[tuple, list[Node]] = {}
        for length in range(1, min(L, j) + 1):
            start = j - length + 1
            em2 = scorer.emission_vector(h, start, j)
            for label in range(N_LABELS):
                base = em2[label]
                intra = scorer._intra_node(length, label)
                if intra is not None:
                    base = ad.add(base, intra)
                state = (label, length == 1)
                bucket = terms.setdefault(state, [])
                if start == 1:
                    c = cross(None, length, label)
                    bucket.append(base if c is None else ad.add(base, c))
                else:
                    for prev_state, prev_alpha in alpha[start - 1].items():
                        c = cross(prev_state, length, label)
                        term = ad.add(prev_alpha, base)
                        if c is not None:
                            term = ad.add(term, c)
                        bucket.append(term)
        for state, bucket in terms.items():
            alpha[j][state] = bucket[0] if len(bucket) == 1 else ad.logsumexp(
                ad.stack(bucket, axis=0), axis=0)

    finals = []
    for state, node in alpha[n].items():
        if scorer.transition_mode == "bieuo":
            src = last_tag(1 if state[1] else 2, state[0])
            node = ad.add(node, scorer.T[(src, TAG_O)])
        finals.append(node)
    return ad.logsumexp(ad.stack(finals, axis=0), axis=0)


def scrf_nll(h: Node, scorer: SegmentScorer, gold: Segmentation) -> Node:
    gold.validate(h.shape[0], scorer.max_len)
    return ad.sub(scrf_log_partition(h, scorer), scorer.score_segmentation(h, gold))


def _decode_order(j: int, L: int):
    """Candidate order fixing the tie-break: shorter segment, DELETE first."""
    for length in range(1, min(L, j) + 1):
        for label in (DELETE, KEEP):
            yield length, label


def scrf_viterbi(h: Node | np.ndarray, scorer: SegmentScorer) -> tuple[Segmentation, float]:
    """Exact argmax segmentation with deterministic tie-breaking."""
    hv = h.value if isinstance(h, Node) else np.asarray(h, dtype=np.float64)
    n = hv.shape[0]
    L = scorer.max_len
    em, intra, cross, end_scores = scorer.value_tables(hv)
    # state: (label, unit_flag); per position store (score, back) where
    # back = (prev_state, length)
    best: list[dict[tuple, tuple[float, tuple | None, int]]] = [dict() for _ in range(n + 1)]
    for j in range(1, n + 1):
        for length, label in _decode_order(j, L):
            start = j - length + 1
            base = em[start - 1, length - 1, label] + intra[length - 1, label]
            state = (label, length == 1)
            if start == 1:
                cands = [(base + scorer.cross_value(cross, None, length, label), None)]
            else:
                cands = [
                    (score + base + scorer.cross_value(cross, prev_state, length, label),
                     prev_state)
                    for prev_state, (score, _, _) in best[start - 1].items()
                ]
            for total, prev_state in cands:
                cur = best[j].get(state)
                if cur is None or total > cur[0]:
                    best[j][state] = (total, prev_state, length)
    final_state, final_score = None, -np.inf
    for length, label in _decode_order(n, L):
        state = (label, length == 1)
        if state not in best[n]:
            continue
        total = best[n][state][0] + scorer.end_value(end_scores, state)
        if total > final_score:
            final_state, final_score = state, total
    segments = []
    j, state = n, final_state
    while j > 0:
        _, prev_state, length = best[j][state]
        segments.append(Segment(j - length + 1, j, state[0]))
        j -= length
        state = prev_state
    segments.reverse()
    return Segmentation(segments), float(final_score)


def scrf_kbest(h: Node | np.ndarray, scorer: SegmentScorer, k: int) -> list[tuple[Segmentation, float]]:
    """The K highest-scoring distinct segmentations (exact DP, scores non-increasing)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    hv = h.value if isinstance(h, Node) else np.asarray(h, dtype=np.float64)
    n = hv.shape[0]
    L = scorer.max_len
    em, intra, cross, end_scores = scorer.value_tables(hv)
    # lists[j][state] = sorted list of (score, prev_state, prev_rank, length)
    lists: list[dict[tuple, list[tuple]]] = [dict() for _ in range(n + 1)]
    for j in range(1, n + 1):
        per_state: dict[tuple, list[tuple]] = {}
        for length, label in _decode_order(j, L):
            start = j - length + 1
            base = em[start - 1, length - 1, label] + intra[length - 1, label]
            state = (label, length == 1)
            bucket = per_state.setdefault(state, [])
            if start == 1:
                bucket.append((base + scorer.cross_value(cross, None, length, label),
                               None, 0, length))
            else:
                for prev_state, items in lists[start - 1].items():
                    c = scorer.cross_value(cross, prev_state, length, label)
                    for rank, item in enumerate(items):
                        bucket.append((item[0] + base + c, prev_state, rank, length))
        for state, bucket in per_state.items():
            bucket.sort(key=lambda t: -t[0])
            lists[j][state] = bucket[:k]
    finals = []
    for state, items in lists[n].items():
        bonus = scorer.end_value(end_scores, state)
        for rank, item in enumerate(items):
            finals.append((item[0] + bonus, state, rank))
    finals.sort(key=lambda t: -t[0])
    results = []
    for score, state, rank in finals[:k]:
        segments = []
        j, cur_state, cur_rank = n, state, rank
        while j > 0:
            _, prev_state, prev_rank, length = lists[j][cur_state][cur_rank]
            segments.append(Segment(j - length + 1, j, cur_state[0]))
            j -= length
            cur_state, cur_rank = prev_state, prev_rank
        segments.reverse()
        results.append((Segmentation(segments), float(score)))
    return results


def scrf_decode_compression(h: Node | np.ndarray, scorer: SegmentScorer) -> list[int]:
    """Viterbi keep mask with the non-empty guard.

    An all-delete decode keeps the single position whose unit-KEEP emission
    is highest (earliest on ties), mirroring chain.decode_compression.
    """
    segmentation, _ = scrf_viterbi(h, scorer)
    mask = segmentation.to_mask()
    if not any(mask):
        hv = h.value if isinstance(h, Node) else np.asarray(h, dtype=np.float64)
        em, _, _, _ = scorer.value_tables(hv)
        mask[int(em[:, 0, KEEP].argmax())] = 1
    return mask
