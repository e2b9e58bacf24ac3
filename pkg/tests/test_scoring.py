import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stir.errors import BackendError, InvalidInputError
from stir.retrieval import HopResult
from stir.scoring import (
    CE_PROB_FLOOR,
    NUM_LEVELS,
    ScoredFrame,
    ScorerBackendDescriptor,
    build_intent_prompt,
    cross_entropy,
    expand_frame_pool,
    expected_relevance,
    fetch_level_logits,
    filter_by_threshold,
    make_scorer_backend,
    mock_level_logits,
    score_frames,
    softmax_levels,
)
from stir.types import FrameRef

from support import make_clips, make_frames


def hop_over(node_ids, n_clips):
    return HopResult(
        nodes=frozenset(node_ids),
        hop_distance={n: 0 for n in node_ids},
        anchors=tuple(sorted(node_ids))[:1],
        params={"N": 1, "L": 0, "eta": 0.4},
    )


def scored(index, score, node=0):
    # distribution consistent enough for the filter (it only reads .score)
    return ScoredFrame(
        frame=FrameRef("vid", index, index / 3.0),
        distribution=(0.2,) * 5,
        score=score,
        source_node=node,
    )


class TestSoftmax:
    def test_uniform_logits(self):
        assert np.allclose(softmax_levels([0.0] * 5), np.full(5, 0.2), atol=1e-15)

    def test_hand_computed(self):
        logits = [1.0, 2.0, 3.0, 4.0, 5.0]
        exps = [math.exp(x - 5.0) for x in logits]
        want = np.array(exps) / sum(exps)
        assert np.allclose(softmax_levels(logits), want, atol=1e-15)

    def test_shift_invariance(self):
        logits = np.array([0.3, -1.2, 4.0, 2.2, 0.0])
        assert np.allclose(softmax_levels(logits), softmax_levels(logits + 123.456), atol=1e-12)

    def test_extreme_logits_stable(self):
        probs = softmax_levels([1e6, -1e6, 0.0, 1e6, -1e6])
        assert np.all(np.isfinite(probs))
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert probs[0] == pytest.approx(0.5)
        assert probs[1] == 0.0

    @given(st.lists(st.floats(-1e6, 1e6), min_size=5, max_size=5))
    def test_always_a_distribution(self, logits):
        probs = softmax_levels(logits)
        assert np.all(probs >= 0)
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)

    def test_wrong_arity_rejected(self):
        with pytest.raises(InvalidInputError):
            softmax_levels([1.0, 2.0])

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInputError):
            softmax_levels([1.0, 2.0, np.nan, 0.0, 0.0])


class TestExpectedRelevance:
    def test_one_hot_levels(self):
        for level in range(1, 6):
            dist = [0.0] * 5
            dist[level - 1] = 1.0
            assert expected_relevance(dist) == float(level)

    def test_uniform_is_three(self):
        assert expected_relevance([0.2] * 5) == pytest.approx(3.0, abs=1e-15)

    def test_hand_computed(self):
        # 0.5*1 + 0.5*5 = 3.0; 0.1*1+0.9*5 = 4.6
        assert expected_relevance([0.5, 0, 0, 0, 0.5]) == pytest.approx(3.0)
        assert expected_relevance([0.1, 0, 0, 0, 0.9]) == pytest.approx(4.6)

    def test_bounds(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            raw = rng.random(5)
            dist = raw / raw.sum()
            r = expected_relevance(dist)
            assert 1.0 <= r <= 5.0

    def test_invalid_distribution_rejected(self):
        with pytest.raises(InvalidInputError):
            expected_relevance([0.5, 0.5, 0.5, 0, 0])  # sums to 1.5
        with pytest.raises(InvalidInputError):
            expected_relevance([1.2, -0.2, 0, 0, 0])


class TestCrossEntropy:
    def test_uniform_is_ln5(self):
        for label in range(1, 6):
            assert cross_entropy([0.2] * 5, label) == pytest.approx(math.log(5), abs=1e-12)

    def test_confident_correct_near_zero(self):
        dist = [1e-13, 1e-13, 1e-13, 1e-13, 1.0 - 4e-13]
        assert cross_entropy(dist, 5) == pytest.approx(0.0, abs=1e-9)

    def test_zero_probability_clamped(self):
        dist = [1.0, 0.0, 0.0, 0.0, 0.0]
        assert cross_entropy(dist, 5) == pytest.approx(-math.log(CE_PROB_FLOOR), abs=1e-9)

    def test_bad_label_rejected(self):
        for label in (0, 6, -1):
            with pytest.raises(InvalidInputError):
                cross_entropy([0.2] * 5, label)


class TestIntentPrompt:
    def test_query_substituted(self):
        p = build_intent_prompt("who fed the cat")
        assert "who fed the cat" in p.rendered
        assert "{query}" not in p.rendered
        assert "{query}" in p.template

    def test_level_scale_present(self):
        p = build_intent_prompt("q")
        for level in range(1, 6):
            assert f"[{level}]" in p.rendered

    def test_empty_query_rejected(self):
        with pytest.raises(InvalidInputError):
            build_intent_prompt("  ")


class TestMockScorer:
    DESC = ScorerBackendDescriptor(
        kind="mock", seed=5, boost=8.0, evidence={"vid": [2, 3]}
    )

    def test_deterministic(self):
        b1 = make_scorer_backend(self.DESC)
        b2 = make_scorer_backend(self.DESC)
        assert b1.level_logits("q", "vid", [0, 1, 2]) == b2.level_logits("q", "vid", [0, 1, 2])

    def test_evidence_boost_raises_score(self):
        backend = make_scorer_backend(self.DESC)
        rows = backend.level_logits("q", "vid", [0, 2])
        plain = expected_relevance(softmax_levels(rows[0]))
        boosted = expected_relevance(softmax_levels(rows[1]))
        assert boosted > 4.5 > plain

    def test_matches_free_function(self):
        backend = make_scorer_backend(self.DESC)
        assert backend.level_logits("q", "vid", [3]) == [
            mock_level_logits(5, "q", "vid", 3, True, 8.0)
        ]

    def test_varies_with_inputs(self):
        a = mock_level_logits(5, "q", "vid", 0, False, 0.0)
        assert a != mock_level_logits(6, "q", "vid", 0, False, 0.0)
        assert a != mock_level_logits(5, "other", "vid", 0, False, 0.0)
        assert a != mock_level_logits(5, "q", "vid2", 0, False, 0.0)
        assert a != mock_level_logits(5, "q", "vid", 1, False, 0.0)


class TestRemoteScorer:
    def test_round_trip_and_prompt_in_body(self, stub_server):
        desc = ScorerBackendDescriptor(kind="remote", endpoint=stub_server.endpoint)
        backend = make_scorer_backend(desc)
        rows = backend.level_logits("find the dog", "vid", [0, 1])
        assert rows == [[0.0, 0.0, 0.0, 0.0, 100.0]] * 2
        body = stub_server.requests[0][2]
        assert body["query"] == "find the dog"
        assert "find the dog" in body["prompt"]
        assert body["frame_indices"] == [0, 1]

    def test_malformed_shape_fails_after_retries(self, stub_server):
        stub_server.score_fn = lambda body: [[1.0, 2.0]]  # wrong arity
        desc = ScorerBackendDescriptor(kind="remote", endpoint=stub_server.endpoint)
        backend = make_scorer_backend(desc)
        backend.retry_delay_s = 0.0
        with pytest.raises(BackendError, match="frames"):
            backend.level_logits("q", "vid", [0])
        assert backend.calls == 3

    def test_unreachable(self):
        desc = ScorerBackendDescriptor(kind="remote", endpoint="http://127.0.0.1:1")
        backend = make_scorer_backend(desc)
        backend.retry_delay_s = 0.0
        with pytest.raises(BackendError):
            backend.level_logits("q", "vid", [0])


class TestDescriptor:
    def test_kind_requirements(self):
        with pytest.raises(InvalidInputError):
            ScorerBackendDescriptor(kind="remote")
        with pytest.raises(InvalidInputError):
            ScorerBackendDescriptor(kind="mock")
        with pytest.raises(InvalidInputError):
            ScorerBackendDescriptor(kind="fixture")
        with pytest.raises(InvalidInputError):
            ScorerBackendDescriptor(kind="llm")

    def test_dict_round_trip(self):
        desc = ScorerBackendDescriptor(kind="mock", seed=1, boost=4.0, evidence={"v": [1, 2]})
        assert ScorerBackendDescriptor.from_dict(desc.to_dict()) == desc

    def test_cache_token_sensitive_to_evidence(self):
        a = ScorerBackendDescriptor(kind="mock", seed=1, evidence={"v": [1]})
        b = ScorerBackendDescriptor(kind="mock", seed=1, evidence={"v": [2]})
        assert a.cache_token() != b.cache_token()


class TestFramePool:
    def test_chronological_and_tagged(self):
        clips = make_clips("vid", [2, 3, 2])
        pool = expand_frame_pool(hop_over({0, 2}, 3), clips)
        assert [(f.frame_index, node) for f, node in pool] == [
            (0, 0), (1, 0), (5, 2), (6, 2)
        ]

    def test_stride(self):
        clips = make_clips("vid", [5])
        pool = expand_frame_pool(hop_over({0}, 1), clips, stride=2)
        assert [f.frame_index for f, _ in pool] == [0, 2, 4]

    def test_bad_stride(self):
        with pytest.raises(InvalidInputError):
            expand_frame_pool(hop_over({0}, 1), make_clips("vid", [2]), stride=0)

    def test_node_without_clip_rejected(self):
        with pytest.raises(InvalidInputError):
            expand_frame_pool(hop_over({5}, 1), make_clips("vid", [2]))


class TestFetchAndScore:
    def test_batching_preserves_order(self, stub_server):
        stub_server.score_fn = lambda body: [
            [float(i), 0.0, 0.0, 0.0, 0.0] for i in body["frame_indices"]
        ]
        desc = ScorerBackendDescriptor(kind="remote", endpoint=stub_server.endpoint)
        pool = [(f, 0) for f in make_frames(10)]
        rows = fetch_level_logits(desc, "q", pool, batch_size=3)
        assert [r[0] for r in rows] == [float(i) for i in range(10)]
        assert len(stub_server.requests) == 4  # ceil(10 / 3) batches

    def test_parallel_matches_serial(self, stub_server):
        stub_server.score_fn = lambda body: [
            [float(i), 1.0, 2.0, 3.0, 4.0] for i in body["frame_indices"]
        ]
        desc = ScorerBackendDescriptor(kind="remote", endpoint=stub_server.endpoint)
        pool = [(f, 0) for f in make_frames(12)]
        serial = fetch_level_logits(desc, "q", pool, batch_size=4, max_workers=1)
        parallel = fetch_level_logits(desc, "q", pool, batch_size=4, max_workers=3)
        assert serial == parallel

    def test_empty_pool(self):
        desc = ScorerBackendDescriptor(kind="mock", seed=1)
        assert fetch_level_logits(desc, "q", []) == []

    def test_mixed_videos_rejected(self):
        desc = ScorerBackendDescriptor(kind="mock", seed=1)
        pool = [(FrameRef("a", 0, 0.0), 0), (FrameRef("b", 0, 0.0), 0)]
        with pytest.raises(InvalidInputError):
            fetch_level_logits(desc, "q", pool)

    def test_score_frames_distribution_and_expectation(self):
        desc = ScorerBackendDescriptor(kind="mock", seed=3, boost=9.0, evidence={"vid": [1]})
        pool = [(f, 0) for f in make_frames(3)]
        out = score_frames(desc, "q", pool)
        assert len(out) == 3
        for sf in out:
            assert sf.score == pytest.approx(expected_relevance(sf.distribution))
            assert sum(sf.distribution) == pytest.approx(1.0, abs=1e-9)
        assert out[1].score > max(out[0].score, out[2].score)


class TestThresholdFilter:
    def test_strict_filter_no_fallback(self):
        frames = [scored(i, 4.5) for i in range(10)]
        frames[4] = scored(4, 1.0)
        ev = filter_by_threshold(frames, kappa_s=3.25, fallback_k=8)
        assert not ev.fallback_used
        assert [sf.frame.frame_index for sf in ev.frames] == [0, 1, 2, 3, 5, 6, 7, 8, 9]

    def test_boundary_score_excluded(self):
        # strictly-greater comparison: a frame at exactly kappa_s is out
        frames = [scored(i, 3.25) for i in range(10)]
        ev = filter_by_threshold(frames, kappa_s=3.25, fallback_k=4)
        assert ev.fallback_used
        assert len(ev.frames) == 4

    def test_fallback_takes_top_k_chronologically(self):
        scores = [1.0, 5.0, 2.0, 4.0, 3.0, 4.5]
        frames = [scored(i, s) for i, s in enumerate(scores)]
        ev = filter_by_threshold(frames, kappa_s=10.0, fallback_k=3)
        assert ev.fallback_used
        assert [sf.frame.frame_index for sf in ev.frames] == [1, 3, 5]

    def test_fallback_tie_prefers_earlier(self):
        frames = [scored(i, 2.0) for i in range(5)]
        ev = filter_by_threshold(frames, kappa_s=9.0, fallback_k=2)
        assert [sf.frame.frame_index for sf in ev.frames] == [0, 1]

    def test_fallback_capped_by_pool_size(self):
        frames = [scored(i, 1.0) for i in range(3)]
        ev = filter_by_threshold(frames, kappa_s=9.0, fallback_k=8)
        assert len(ev.frames) == 3

    def test_bad_fallback_k(self):
        with pytest.raises(InvalidInputError):
            filter_by_threshold([], kappa_s=3.25, fallback_k=0)
