import logging

import numpy as np
import pytest

from stir.errors import InvalidInputError
from stir.segmentation import (
    SegmentationResult,
    clips_from_boundaries,
    exhaustive_segment,
    pelt_segment,
    segment_cost,
)

from support import make_frames


def col(values):
    return np.asarray(values, dtype=float).reshape(-1, 1)


class TestSegmentCost:
    def test_identical_vectors_zero(self):
        assert segment_cost(np.ones((3, 4)), 0, 3) == 0.0

    def test_hand_computed_1d(self):
        # values 0 and 2: mean 1, cost (0-1)^2 + (2-1)^2 = 2
        assert segment_cost(col([0, 2]), 0, 2) == pytest.approx(2.0, abs=1e-12)

    def test_single_frame_zero(self):
        assert segment_cost(col([5.0]), 0, 1) == 0.0

    def test_empty_range_rejected(self):
        with pytest.raises(InvalidInputError):
            segment_cost(col([1, 2, 3]), 2, 2)

    def test_out_of_range_rejected(self):
        with pytest.raises(InvalidInputError):
            segment_cost(col([1, 2]), 0, 3)


class TestPelt:
    def test_identical_stream_no_boundaries(self):
        result = pelt_segment(np.ones((10, 3)), penalty=0.5, min_clip_len=1)
        assert result.boundaries == ()
        assert result.total_cost == 0.0

    def test_clean_step_detected(self):
        stream = col([0, 0, 0, 5, 5, 5])
        result = pelt_segment(stream, penalty=0.1, min_clip_len=1)
        assert result.boundaries == (3,)
        # verified against full enumeration
        assert result == exhaustive_segment(stream, penalty=0.1, min_clip_len=1)

    def test_huge_penalty_single_segment(self):
        rng = np.random.default_rng(0)
        result = pelt_segment(rng.normal(size=(12, 2)), penalty=1e12, min_clip_len=1)
        assert result.boundaries == ()

    def test_min_clip_len_over_length_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            result = pelt_segment(np.ones((2, 2)), penalty=1.0, min_clip_len=3)
        assert result.boundaries == ()
        assert any("min_clip_len" in rec.message for rec in caplog.records)

    def test_min_clip_len_respected(self):
        stream = col([0, 0, 9, 9, 9, 9])
        result = pelt_segment(stream, penalty=0.01, min_clip_len=3)
        assert all(
            e - s >= 3
            for s, e in zip((0, *result.boundaries), (*result.boundaries, 6))
        )

    def test_negative_penalty_rejected(self):
        with pytest.raises(InvalidInputError):
            pelt_segment(np.ones((4, 1)), penalty=-1.0, min_clip_len=1)


class TestExhaustive:
    def test_hand_computed_step(self):
        result = exhaustive_segment(col([0, 0, 9, 9]), penalty=0.5, min_clip_len=1)
        assert result.boundaries == (2,)
        assert result.total_cost == pytest.approx(0.5, abs=1e-12)

    def test_length_one(self):
        result = exhaustive_segment(col([3.0]), penalty=1.0, min_clip_len=1)
        assert result.boundaries == ()
        assert result.total_cost == 0.0

    def test_guard_rejects_long_streams(self):
        with pytest.raises(InvalidInputError):
            exhaustive_segment(np.ones((17, 1)), penalty=1.0, min_clip_len=1)


class TestOracleEquivalence:
    def test_randomized(self):
        rng = np.random.default_rng(42)
        for _ in range(300):
            n = int(rng.integers(1, 13))
            dim = int(rng.integers(1, 5))
            emb = rng.normal(size=(n, dim))
            penalty = float(rng.uniform(0, 4))
            min_len = int(rng.integers(1, 4))
            fast = pelt_segment(emb, penalty, min_len)
            slow = exhaustive_segment(emb, penalty, min_len)
            assert fast.total_cost == slow.total_cost, (emb, penalty, min_len)
            assert fast.boundaries == slow.boundaries, (emb, penalty, min_len)

    def test_near_tie_streams(self):
        # piecewise-constant streams make many partitions cost-equal,
        # stressing the tie-break rule
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(2, 11))
            emb = col(rng.integers(0, 2, size=n).astype(float))
            penalty = float(rng.choice([0.0, 0.25, 0.5, 1.0]))
            fast = pelt_segment(emb, penalty, 1)
            slow = exhaustive_segment(emb, penalty, 1)
            assert fast.total_cost == slow.total_cost
            assert fast.boundaries == slow.boundaries


class TestProperties:
    def test_penalty_monotonicity(self):
        rng = np.random.default_rng(3)
        stream = rng.normal(size=(30, 2))
        stream[10:20] += 4
        counts = [
            len(pelt_segment(stream, penalty, 1).boundaries)
            for penalty in (0.0, 0.5, 2.0, 10.0, 100.0)
        ]
        assert counts == sorted(counts, reverse=True)

    def test_mirror_symmetry(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = int(rng.integers(4, 20))
            stream = rng.normal(size=(n, 3))
            fwd = pelt_segment(stream, penalty=1.0, min_clip_len=1)
            rev = pelt_segment(stream[::-1], penalty=1.0, min_clip_len=1)
            assert sorted(n - b for b in fwd.boundaries) == list(rev.boundaries)


class TestClipsFromBoundaries:
    def test_single_boundary(self):
        frames = make_frames(6)
        result = SegmentationResult(boundaries=(3,), total_cost=0.0, penalty=1.0, num_frames=6)
        clips = clips_from_boundaries(frames, result)
        assert [(c.start, c.end) for c in clips] == [(0, 3), (3, 6)]

    def test_no_boundaries_single_clip(self):
        frames = make_frames(4)
        result = SegmentationResult((), 0.0, 1.0, 4)
        clips = clips_from_boundaries(frames, result)
        assert len(clips) == 1
        assert clips[0].num_frames == 4

    def test_three_equal_clips(self):
        frames = make_frames(9)
        result = SegmentationResult((3, 6), 0.0, 1.0, 9)
        clips = clips_from_boundaries(frames, result)
        assert [c.num_frames for c in clips] == [3, 3, 3]

    def test_partition_property(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n = int(rng.integers(1, 15))
            frames = make_frames(n)
            emb = rng.normal(size=(n, 2))
            result = pelt_segment(emb, float(rng.uniform(0, 2)), 1)
            clips = clips_from_boundaries(frames, result)
            rebuilt = [f for c in clips for f in c.frames]
            assert rebuilt == frames

    def test_out_of_range_boundary_rejected(self):
        frames = make_frames(4)
        result = SegmentationResult((7,), 0.0, 1.0, 4)
        with pytest.raises(InvalidInputError):
            clips_from_boundaries(frames, result)

    def test_length_mismatch_rejected(self):
        frames = make_frames(4)
        result = SegmentationResult((2,), 0.0, 1.0, 6)
        with pytest.raises(InvalidInputError):
            clips_from_boundaries(frames, result)
