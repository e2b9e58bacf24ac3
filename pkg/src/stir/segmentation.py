"""Event segmentation of a frame-embedding stream via penalized change points.

The cost of a segment is the within-segment sum of squared deviations
from the segment mean (Gaussian mean-shift cost), computed in O(1) per
query from prefix sums. `pelt_segment` runs the pruned-exact dynamic
program; `exhaustive_segment` is the brute-force oracle used to validate
it. Both fold segment costs and penalties in the same order so a common
optimum yields bit-identical totals.

Ties (exact float equality of totals) break toward fewer segments, then
the lexicographically smallest boundary list.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .types import Clip, FrameRef

logger = logging.getLogger(__name__)

EXHAUSTIVE_MAX_LEN = 16


@dataclass(frozen=True)
class SegmentationResult:
    """Boundary indices (first frame of each new segment, 0 excluded)."""

    boundaries: tuple[int, ...]
    total_cost: float
    penalty: float
    num_frames: int

    def to_dict(self) -> dict:
        return {
            "boundaries": list(self.boundaries),
            "total_cost": self.total_cost,
            "penalty": self.penalty,
            "num_frames": self.num_frames,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentationResult":
        return cls(
            boundaries=tuple(d["boundaries"]),
            total_cost=float(d["total_cost"]),
            penalty=float(d["penalty"]),
            num_frames=int(d["num_frames"]),
        )


class SegmentCostFn:
    """O(1) mean-shift segment cost via prefix sums of values and squared norms."""

    def __init__(self, embeddings, memoize: bool = False):
        arr = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise InvalidInputError("embeddings must be a non-empty (n, dim) array")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("non-finite embedding component")
        self.n = arr.shape[0]
        self._sum = np.zeros((self.n + 1, arr.shape[1]))
        np.cumsum(arr, axis=0, out=self._sum[1:])
        sq = np.einsum("ij,ij->i", arr, arr)
        self._sumsq = np.zeros(self.n + 1)
        np.cumsum(sq, out=self._sumsq[1:])
        self._memo: dict[tuple[int, int], float] | None = {} if memoize else None

    def __call__(self, start: int, end: int) -> float:
        if not (0 <= start < end <= self.n):
            raise InvalidInputError(f"invalid segment range [{start}, {end}) for n={self.n}")
        if self._memo is not None:
            hit = self._memo.get((start, end))
            if hit is not None:
                return hit
        total = self._sum[end] - self._sum[start]
        cost = float(self._sumsq[end] - self._sumsq[start]) - float(total @ total) / (end - start)
        cost = max(cost, 0.0)
        if self._memo is not None:
            self._memo[(start, end)] = cost
        return cost


def segment_cost(embeddings, start: int, end: int) -> float:
    """Sum of squared distances to the segment mean over frames [start, end)."""
    return SegmentCostFn(embeddings)(start, end)


def _fold_cost(cost: SegmentCostFn, boundaries, penalty: float) -> float:
    """Total = segment costs + penalty per boundary, folded left to right.

    Must stay in lockstep with the DP recurrence in pelt_segment so both
    algorithms produce bit-identical totals for identical partitions.
    """
    edges = [0, *boundaries, cost.n]
    total = cost(edges[0], edges[1])
    for s, e in zip(edges[1:], edges[2:]):
        total = (total + penalty) + cost(s, e)
    return total


def _validate_args(embeddings, penalty: float, min_clip_len: int):
    if penalty < 0:
        raise InvalidInputError(f"penalty must be >= 0, got {penalty}")
    if min_clip_len < 1:
        raise InvalidInputError(f"min_clip_len must be >= 1, got {min_clip_len}")


def pelt_segment(embeddings, penalty: float, min_clip_len: int = 3) -> SegmentationResult:
    """Globally optimal penalized segmentation via the pruned-exact DP.

    Pruning uses a small relative slack instead of the exact K=0 bound so
    float rounding can never discard the true optimum, and pruned start
    points stay alive for min_clip_len extra steps (required for pruning
    to remain exact under a minimum segment length).
    """
    _validate_args(embeddings, penalty, min_clip_len)
    cost = SegmentCostFn(embeddings)
    n = cost.n
    if min_clip_len > n:
        logger.warning(
            "min_clip_len=%d exceeds stream length %d; returning a single segment",
            min_clip_len, n,
        )
        return SegmentationResult((), cost(0, n), penalty, n)

    inf = float("inf")
    f = [inf] * (n + 1)
    f[0] = 0.0
    parent = [0] * (n + 1)
    nseg = [0] * (n + 1)

    def chain(t: int) -> list[int]:
        out = []
        while t > 0:
            s = parent[t]
            if s > 0:
                out.append(s)
            t = s
        out.reverse()
        return out

    # (candidate start, earliest time at which it may be dropped)
    candidates: list[list] = [[0, inf]]
    for t in range(min_clip_len, n + 1):
        candidates = [c for c in candidates if c[1] > t]
        best_val, best_s = inf, -1
        for c in candidates:
            s = c[0]
            if s > t - min_clip_len or f[s] == inf:
                continue
            val = cost(0, t) if s == 0 else (f[s] + penalty) + cost(s, t)
            if val < best_val:
                best_val, best_s = val, s
            elif val == best_val and best_s >= 0:
                cand_segs = nseg[s] + 1
                if cand_segs < nseg[best_s] + 1 or (
                    cand_segs == nseg[best_s] + 1
                    and (chain(s) + ([s] if s else [])) < (chain(best_s) + ([best_s] if best_s else []))
                ):
                    best_s = s
        assert best_s >= 0, "start point 0 is always admissible"
        f[t] = best_val
        parent[t] = best_s
        nseg[t] = nseg[best_s] + 1
        for c in candidates:
            s = c[0]
            if s > t - min_clip_len or f[s] == inf or c[1] != inf:
                continue
            val = cost(0, t) if s == 0 else (f[s] + penalty) + cost(s, t)
            slack = 1e-9 * (1.0 + abs(f[t]))
            # dominated iff val > F[t] + penalty: any future extension through
            # t (which pays one more penalty) beats extending through s.
            if val > f[t] + penalty + slack:
                # keep admissible until t + min_clip_len: the dominating
                # start point t is not usable before then.
                c[1] = t + min_clip_len
        candidates.append([t, inf])

    boundaries = tuple(chain(n))
    return SegmentationResult(boundaries, f[n], penalty, n)


def exhaustive_segment(embeddings, penalty: float, min_clip_len: int = 3) -> SegmentationResult:
    """Testing oracle: full enumeration of boundary sets (length <= 16)."""
    _validate_args(embeddings, penalty, min_clip_len)
    cost = SegmentCostFn(embeddings, memoize=True)
    n = cost.n
    if n > EXHAUSTIVE_MAX_LEN:
        raise InvalidInputError(
            f"exhaustive_segment refuses streams longer than {EXHAUSTIVE_MAX_LEN} (got {n})"
        )
    if min_clip_len > n:
        logger.warning(
            "min_clip_len=%d exceeds stream length %d; returning a single segment",
            min_clip_len, n,
        )
        return SegmentationResult((), cost(0, n), penalty, n)

    best = None  # (total, num_boundaries, boundaries)
    for mask in range(1 << (n - 1)):
        boundaries = [i + 1 for i in range(n - 1) if mask >> i & 1]
        edges = [0, *boundaries, n]
        if any(e - s < min_clip_len for s, e in zip(edges, edges[1:])):
            continue
        total = _fold_cost(cost, boundaries, penalty)
        key = (len(boundaries), boundaries)
        if best is None or total < best[0] or (total == best[0] and key < best[1]):
            best = (total, key, boundaries)
    return SegmentationResult(tuple(best[2]), best[0], penalty, n)


def clips_from_boundaries(frames: list[FrameRef], result: SegmentationResult) -> list[Clip]:
    """Materialize contiguous clips that partition the frame list exactly."""
    n = len(frames)
    if n == 0:
        raise InvalidInputError("frame list is empty")
    if result.num_frames != n:
        raise InvalidInputError(
            f"segmentation covers {result.num_frames} frames but {n} were given"
        )
    for b in result.boundaries:
        if not (0 < b < n):
            raise InvalidInputError(f"boundary {b} out of range (0, {n})")
    edges = [0, *result.boundaries, n]
    return [
        Clip(
            video_id=frames[0].video_id,
            start=s,
            end=e,
            frames=tuple(frames[s:e]),
        )
        for s, e in zip(edges, edges[1:])
    ]
