import numpy as np
import pytest
from hypothesis import given, strategies as st

from avcompress import HyperParams, audio_budget, compress_audio_chunk
from avcompress.saac import (ImportanceScores, anchor_intervals, assign_to_anchors,
                             crossmodal_merge_candidates, crossmodal_scores, detect_anchors,
                             merge_into_anchors, merge_weights, round_half_up, select_retained)


class V:
    def __init__(self, r_v, reps=()):
        self.r_v = r_v
        self.merged_reps = np.asarray(reps, dtype=float).reshape(len(reps), -1) if len(reps) else np.zeros((0, 2))


def test_budget_examples():
    p = HyperParams()
    assert audio_budget(p, 0.4) == pytest.approx((0.3, 0.7), abs=1e-12)
    assert audio_budget(p, 1.0) == pytest.approx((0.1, 0.9), abs=1e-12)
    assert audio_budget(p, 0.44) == pytest.approx((0.28, 0.72), abs=1e-12)
    with pytest.raises(ValueError):
        audio_budget(p, 1.5)


@given(st.floats(0, 1))
def test_zero_beta_ignores_video(r_v):
    assert audio_budget(HyperParams(beta=0.0), r_v)[0] == 0.3


def test_round_half_up():
    assert [round_half_up(x) for x in (0.5, 1.5, 2.4999, 14.0, 0.7 * 20)] == [1, 2, 2, 14, 14]


def test_anchor_examples():
    u, v = [1.0, 0.0], [0.0, 1.0]
    assert detect_anchors(np.ones((5, 3)), 0.4) == [0]
    assert detect_anchors([u, u, v, v], 0.4) == [0, 2]
    assert anchor_intervals([0, 2], 4) == [(0, 1), (2, 3)]
    assert detect_anchors([u], 0.4) == [0]


def test_retained_counts():
    scores = ImportanceScores(np.linspace(1.0, 0.0, 20))
    dom, ctx, res = select_retained(20, scores, [0, 15], 0.3, 0.05)
    assert (len(dom), len(ctx)) == (13, 1)
    assert dom == list(range(13)) and ctx == [15]
    assert len(res) == 6


def test_everything_retained_at_zero_merge():
    dom, ctx, res = select_retained(10, ImportanceScores(np.ones(10)), [0], 0.0, 0.05)
    assert res == [] and len(dom) + len(ctx) == 10


def test_uniform_scores_pick_lowest_indices():
    dom, _, _ = select_retained(10, ImportanceScores(np.ones(10)), [0, 5], 0.5, 0.0)
    assert dom == [0, 1, 2, 3, 4]


def test_short_on_anchors_backfills():
    dom, ctx, _ = select_retained(40, ImportanceScores(np.linspace(1, 0, 40)), [0], 0.5, 0.2)
    assert len(dom) + len(ctx) == 20 and ctx == []


def test_assignment_examples():
    toks = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.3, 0.2]])
    assert assign_to_anchors(toks, [3], [0], [(0, 3)]) == {3: 0}
    assert assign_to_anchors(toks, [2], [0, 1], [(0, 3)]) == {2: 0}
    ivs = [(0, 2), (3, 5), (6, 8)]
    pi = assign_to_anchors(np.ones((9, 2)), [3, 4, 5], [0, 6], ivs)
    assert pi == {3: 0, 4: 6, 5: 6}


def test_crossmodal_pick_and_quota():
    toks = np.array([[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]])
    scores = crossmodal_scores(toks, np.array([[0.0, 1.0]]))
    sets = crossmodal_merge_candidates({9: [0, 1, 2]}, scores, 0.3, 3)
    assert sets == {9: [2]}
    scores7 = np.zeros(20)
    sets = crossmodal_merge_candidates({0: list(range(1, 8))}, scores7, 0.3, 3)
    assert sets == {0: [1, 4, 7]}
    assert len(crossmodal_merge_candidates({0: [1, 2, 3, 4, 5]}, scores7, 0.1, 3)[0]) == 1
    assert (crossmodal_scores(toks, np.zeros((0, 2))) == 0).all()


def test_merge_update_examples():
    z, u, v = np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0])
    toks = np.stack([z, u, v])
    reps, w = merge_into_anchors(toks, {0: [1, 2]}, np.array([0.0, 3.0, 1.0]))
    assert np.allclose(reps[0], (z + 0.75 * u + 0.25 * v) / 2)
    assert np.allclose(w[0], [0.75, 0.25])
    reps, _ = merge_into_anchors(toks, {0: []}, np.zeros(3))
    assert np.array_equal(reps[0], z)
    same = np.array([z, z])
    assert np.allclose(merge_into_anchors(same, {0: [1]}, np.ones(2))[0][0], z)


def test_weights_clip_negative_and_fallback_uniform():
    assert merge_weights([0, 1], np.array([-1.0, 2.0])).tolist() == [0.0, 1.0]
    assert merge_weights([0, 1], np.array([-1.0, -2.0])).tolist() == [0.5, 0.5]


def test_single_token_chunk():
    res = compress_audio_chunk(np.array([[1.0, 2.0]]), None, V(0.3), HyperParams())
    assert res.retained_index == [0] and res.retained_ratio == 1.0


def test_noiseless_event_reps_equal_token():
    tok = np.array([0.3, -1.2, 0.5])
    res = compress_audio_chunk(np.tile(tok, (30, 1)), None, V(0.3, [tok]), HyperParams())
    assert np.allclose(res.merged_reps, tok)
    assert res.anchors == [0]


def test_partition_bookkeeping():
    rng = np.random.default_rng(0)
    toks = np.cumsum(rng.standard_normal((80, 6)), axis=0)
    res = compress_audio_chunk(toks, None, V(0.25, rng.standard_normal((4, 6))), HyperParams())
    merged = {t for m in res.merge_sets.values() for t in m}
    assert set(res.retained_index) | merged | set(res.dropped) == set(range(80))
    assert not (set(res.retained_index) & merged) and not (merged & set(res.dropped))
    rep = res.representative_of()
    assert (rep[res.dropped] == -1).all()
    assert res.trace()["m_a"] == res.m_a


def test_bad_scores_rejected():
    with pytest.raises(ValueError):
        ImportanceScores(np.array([1.0, -0.1]))
