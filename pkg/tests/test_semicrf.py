import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from headliner import autodiff as ad
from headliner.autodiff import ParameterStore
from headliner.chain import crf_log_partition, potential_table
from headliner.semicrf import (TAG_O, ROLE_U, Segment, Segmentation, SegmentScorer,
                               expand_segment_tags, mask_to_segmentation, scrf_decode_compression,
                               scrf_kbest, scrf_log_partition, scrf_nll, scrf_viterbi,
                               tag_index)
from headliner.trainer import AdamAMSGrad

from helpers import (brute_segmentation_score, enumerate_segmentations,
                     finite_difference_report, make_random_scrf)


def brute_all(scorer, h_values, n):
    return [(segs, brute_segmentation_score(scorer, h_values, segs))
            for segs in enumerate_segmentations(n, scorer.max_len)]


# ---- segment structure ---------------------------------------------------

def test_expand_tags_shapes():
    assert expand_segment_tags(1, 1) == [tag_index(ROLE_U, 1)]
    assert expand_segment_tags(3, 0) == [0 * 2 + 0, 1 * 2 + 0, 2 * 2 + 0]


def test_mask_to_segmentation_runs_and_splitting():
    seg = mask_to_segmentation([1, 1, 0, 0, 0, 1], max_len=2)
    assert seg.segments == [Segment(1, 2, 1), Segment(3, 4, 0),
                            Segment(5, 5, 0), Segment(6, 6, 1)]
    assert seg.to_mask() == [1, 1, 0, 0, 0, 1]


def test_segmentation_validation_rejects_gaps():
    with pytest.raises(ValueError):
        Segmentation([Segment(1, 1, 0), Segment(3, 3, 0)]).validate(3, 6)


# ---- emissions -----------------------------------------------------------

def test_zero_parameters_zero_emission():
    store = ParameterStore()
    scorer = SegmentScorer(store, d_h=3, max_len=3, len_dim=2)
    scorer.W_e.value[...] = 0.0
    h = ad.constant(np.random.default_rng(0).normal(size=(4, 3)))
    assert scorer.segment_emission(h, Segment(1, 3, 1)).item() == 0.0


def test_single_token_boundary_difference_is_zero():
    # for a unit segment the h_start - h_end term vanishes, so the emission
    # only sees [h_i ; 0 ; e_len(1)]
    scorer, store, h_values = make_random_scrf(n=1, max_len=2, seed=3)
    h = ad.constant(h_values)
    W = scorer.W_e.value
    expected = np.concatenate([h_values[0], np.zeros(3), scorer.e_len.value[0]]) @ W[:, 1]
    assert scorer.segment_emission(h, Segment(1, 1, 1)).item() == pytest.approx(expected)


def test_segment_emission_matches_per_position_sum_oracle():
    scorer, store, h_values = make_random_scrf(n=5, max_len=5, seed=7)
    h = ad.constant(h_values)
    segs = [Segment(1, 3, 1), Segment(4, 5, 0)]
    total = sum(scorer.segment_emission(h, s).item() for s in segs)
    # the oracle sums explicit per-position contributions and no transitions
    scorer.T.value[...] = 0.0
    assert total == pytest.approx(brute_segmentation_score(scorer, h_values, segs))


# ---- transitions ---------------------------------------------------------

def test_zero_transition_matrix_gives_zero():
    scorer, store, h_values = make_random_scrf(n=4, max_len=3, seed=1)
    scorer.T.value[...] = 0.0
    assert scorer.segment_transition(None, Segment(1, 2, 1)).item() == 0.0


def test_two_unit_keeps_use_uu_entry():
    scorer, store, h_values = make_random_scrf(n=2, max_len=2, seed=2)
    T = scorer.T.value
    u_keep = tag_index(ROLE_U, 1)
    a, b = Segment(1, 1, 1), Segment(2, 2, 1)
    h = ad.constant(h_values)
    score = scorer.score_segmentation(h, Segmentation([a, b])).item()
    em = sum(scorer.segment_emission(h, s).item() for s in (a, b))
    expected_trans = T[TAG_O, u_keep] + T[u_keep, u_keep] + T[u_keep, TAG_O]
    assert score - em == pytest.approx(expected_trans)


@pytest.mark.parametrize("mode", ["bieuo", "segment"])
def test_score_matches_tag_expansion_oracle(mode):
    scorer, store, h_values = make_random_scrf(n=6, max_len=3, seed=11, mode=mode)
    h = ad.constant(h_values)
    for segs, brute in brute_all(scorer, h_values, 6)[::37]:
        got = scorer.score_segmentation(h, Segmentation(segs)).item()
        assert got == pytest.approx(brute, abs=1e-9)


# ---- partition -----------------------------------------------------------

def test_counting_partition_ln16():
    scorer, store, h_values = make_random_scrf(n=3, max_len=2, seed=0)
    scorer.W_e.value[...] = 0.0
    scorer.e_len.value[...] = 0.0
    scorer.T.value[...] = 0.0
    z = scrf_log_partition(ad.constant(h_values), scorer).item()
    assert z == pytest.approx(np.log(16), abs=1e-12)


def test_l1_reduces_to_chain_crf():
    rng = np.random.default_rng(5)
    n = 5
    em = rng.normal(size=(n, 2))
    T2 = rng.normal(size=(2, 2))
    store = ParameterStore()
    scorer = SegmentScorer(store, d_h=2, max_len=1, len_dim=2,
                           transition_mode="segment", rng=rng)
    # unit emission = [h_i; 0; e_len] @ W_e; choose W_e = [I; 0; 0] so it is h_i
    scorer.W_e.value[...] = 0.0
    scorer.W_e.value[0, 0] = scorer.W_e.value[1, 1] = 1.0
    scorer.e_len.value[...] = 0.0
    scorer.T.value[...] = T2
    z_scrf = scrf_log_partition(ad.constant(em), scorer).item()
    z_chain = crf_log_partition(potential_table(em, T2)).item()
    assert z_scrf == pytest.approx(z_chain, abs=1e-9)


@pytest.mark.parametrize("mode", ["bieuo", "segment"])
@pytest.mark.parametrize("n,seed", [(2, 31), (5, 32), (8, 33)])
def test_partition_matches_enumeration(mode, n, seed):
    scorer, store, h_values = make_random_scrf(n=n, max_len=3, seed=seed, mode=mode)
    scores = [s for _, s in brute_all(scorer, h_values, n)]
    brute = float(np.logaddexp.reduce(scores))
    z = scrf_log_partition(ad.constant(h_values), scorer).item()
    assert z == pytest.approx(brute, abs=1e-6)


# ---- NLL -----------------------------------------------------------------

def test_nll_counting_case_any_gold():
    scorer, store, h_values = make_random_scrf(n=3, max_len=2, seed=0)
    scorer.W_e.value[...] = 0.0
    scorer.e_len.value[...] = 0.0
    scorer.T.value[...] = 0.0
    for mask in ([1, 1, 0], [0, 0, 0], [1, 0, 1]):
        gold = mask_to_segmentation(mask, 2)
        nll = scrf_nll(ad.constant(h_values), scorer, gold).item()
        assert nll == pytest.approx(np.log(16), abs=1e-12)


def test_nll_probabilities_sum_to_one():
    scorer, store, h_values = make_random_scrf(n=4, max_len=2, seed=41)
    h = ad.constant(h_values)
    total = sum(np.exp(-scrf_nll(h, scorer, Segmentation(segs)).item())
                for segs, _ in brute_all(scorer, h_values, 4))
    assert total == pytest.approx(1.0, abs=1e-9)


def test_nll_gradient_matches_finite_differences():
    scorer, store, h_values = make_random_scrf(n=5, max_len=2, seed=13)
    gold = mask_to_segmentation([1, 0, 0, 1, 1], 2)

    def loss():
        store.zero_grads()
        return scrf_nll(ad.constant(h_values), scorer, gold)

    frac, worst = finite_difference_report([p for _, p in store.trainable()], loss)
    assert frac >= 0.99
    assert worst < 1e-4


def test_nll_decreases_over_twenty_full_batch_steps():
    scorer, store, h_values = make_random_scrf(n=6, max_len=3, seed=17)
    gold = mask_to_segmentation([1, 1, 0, 1, 0, 0], 3)
    opt = AdamAMSGrad(store, lr=0.05, l2_weight=0.0)
    losses = []
    for _ in range(20):
        store.zero_grads()
        loss = scrf_nll(ad.constant(h_values), scorer, gold)
        losses.append(loss.item())
        ad.backward(loss)
        opt.step()
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_partition_monotone_in_max_len():
    # growing L only adds segmentations, so log Z cannot decrease
    zs = []
    for L in (1, 2, 3, 4):
        scorer, store, h_values = make_random_scrf(n=4, max_len=4, seed=23)
        scorer.max_len = L
        zs.append(scrf_log_partition(ad.constant(h_values), scorer).item())
    assert all(b >= a - 1e-9 for a, b in zip(zs, zs[1:]))


# ---- Viterbi / K-best ----------------------------------------------------

def test_viterbi_zero_potentials_canonical_tie():
    scorer, store, h_values = make_random_scrf(n=4, max_len=3, seed=0)
    scorer.W_e.value[...] = 0.0
    scorer.e_len.value[...] = 0.0
    scorer.T.value[...] = 0.0
    best, score = scrf_viterbi(h_values, scorer)
    assert best.segments == [Segment(i, i, 0) for i in range(1, 5)]
    assert score == 0.0


def test_viterbi_rewarded_span_is_chosen():
    scorer, store, h_values = make_random_scrf(n=4, max_len=2, seed=3)
    scorer.W_e.value[...] = 0.0
    scorer.e_len.value[...] = 0.0
    scorer.T.value[...] = 0.0
    # reward exactly length-2 KEEP segments through the length embedding
    scorer.e_len.value[1, 0] = 1.0
    scorer.W_e.value[2 * scorer.d_h, 1] = 5.0
    best, _ = scrf_viterbi(h_values, scorer)
    assert Segment(1, 2, 1) in best.segments and Segment(3, 4, 1) in best.segments
    # confirmed optimal by enumeration
    brute_best = max(brute_all(scorer, h_values, 4), key=lambda t: t[1])
    assert Segmentation(brute_best[0]).key() == best.key()


@pytest.mark.parametrize("mode", ["bieuo", "segment"])
@pytest.mark.parametrize("n,seed", [(3, 51), (6, 52), (8, 53)])
def test_viterbi_matches_brute_max(mode, n, seed):
    scorer, store, h_values = make_random_scrf(n=n, max_len=3, seed=seed, mode=mode)
    _, score = scrf_viterbi(h_values, scorer)
    brute = max(s for _, s in brute_all(scorer, h_values, n))
    assert score == pytest.approx(brute, abs=1e-9)


def test_kbest_k1_equals_viterbi():
    scorer, store, h_values = make_random_scrf(n=5, max_len=2, seed=61)
    best, score = scrf_viterbi(h_values, scorer)
    (kb_seg, kb_score), = scrf_kbest(h_values, scorer, 1)
    assert kb_seg.key() == best.key()
    assert kb_score == pytest.approx(score)


def test_kbest_exhaustive_returns_all_sorted():
    scorer, store, h_values = make_random_scrf(n=3, max_len=2, seed=62)
    total = len(list(enumerate_segmentations(3, 2)))
    results = scrf_kbest(h_values, scorer, 1000)
    assert len(results) == total
    scores = [s for _, s in results]
    assert scores == sorted(scores, reverse=True)
    assert len({seg.key() for seg, _ in results}) == total


@pytest.mark.parametrize("mode", ["bieuo", "segment"])
def test_kbest_matches_brute_top5(mode):
    scorer, store, h_values = make_random_scrf(n=6, max_len=2, seed=63, mode=mode)
    results = scrf_kbest(h_values, scorer, 5)
    brute = sorted((s for _, s in brute_all(scorer, h_values, 6)), reverse=True)[:5]
    assert [s for _, s in results] == pytest.approx(brute, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10_000))
def test_kbest_scores_match_rescoring(n, seed):
    scorer, store, h_values = make_random_scrf(n=n, max_len=3, seed=seed)
    h = ad.constant(h_values)
    for seg, score in scrf_kbest(h_values, scorer, 4):
        assert scorer.score_segmentation(h, seg).item() == pytest.approx(score, abs=1e-9)


def test_decode_guard_keeps_one_token():
    scorer, store, h_values = make_random_scrf(n=4, max_len=2, seed=71)
    # all-zero potentials tie-break to all-DELETE; the guard must still
    # return a non-empty mask (earliest token on the all-tied emissions)
    scorer.W_e.value[...] = 0.0
    scorer.e_len.value[...] = 0.0
    scorer.T.value[...] = 0.0
    assert scrf_decode_compression(h_values, scorer) == [1, 0, 0, 0]


def test_decode_guard_prefers_strongest_keep_token():
    scorer, store, h_values = make_random_scrf(n=3, max_len=2, seed=72)
    scorer.W_e.value[...] = 0.0
    scorer.e_len.value[...] = 0.0
    scorer.T.value[...] = 0.0
    # give token 2 the best (still negative) unit-KEEP emission
    h_values[...] = 0.0
    h_values[:, 0] = [-3.0, -1.0, -2.0]
    scorer.W_e.value[0, 1] = 1.0
    assert scrf_decode_compression(h_values, scorer) == [0, 1, 0]
