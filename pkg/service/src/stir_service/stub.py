"""Stub engine: deterministic vectors and logits from a fixture file.

The fixture layout is shared with the retrieval engine's test corpora:

    {"dim": int, "seed": int, "boost": float,
     "videos": {video_id: {"frames": {str(index): [floats]}}},
     "queries": {query_text: [floats]},
     "evidence": {video_id: [frame_index, ...]}}

Frame and query vectors are served verbatim. Clip vectors are the
unit-normalized float64 mean of the clip's float32 frame vectors, cast
back to float32 — the same arithmetic the engine's in-process backends
use, so the cross-implementation parity test can demand exact equality.
Level logits are derived from a blake2b-keyed PCG64 stream per
(seed, query, video_id, frame_index) with a level-5 bump on evidence
frames, matching the engine's mock scorer derivation.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import FixtureError

NUM_LEVELS = 5
_BASE_BIAS = np.array([2.0, 1.0, 0.0, -1.0, -2.0])


def _derived_rng(*parts) -> np.random.Generator:
    key = "|".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))


def level_logits(seed: int, query: str, video_id: str, frame_index: int,
                 evidence: bool, boost: float) -> list[float]:
    rng = _derived_rng("score", seed, query, video_id, frame_index)
    logits = rng.standard_normal(NUM_LEVELS) + _BASE_BIAS
    if evidence:
        logits[NUM_LEVELS - 1] += boost
    return [float(x) for x in logits]


class StubEngine:
    def __init__(self, data: dict):
        try:
            self.dim = int(data["dim"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FixtureError(f"fixture is missing a valid 'dim': {exc}") from exc
        self.seed = int(data.get("seed", 0))
        self.boost = float(data.get("boost", 0.0))
        self.frames = {
            vid: {int(k): np.asarray(v, dtype=np.float32) for k, v in entry["frames"].items()}
            for vid, entry in data.get("videos", {}).items()
        }
        self.queries = {q: np.asarray(v, dtype=np.float32) for q, v in data.get("queries", {}).items()}
        self.evidence = {
            vid: frozenset(int(i) for i in idxs) for vid, idxs in data.get("evidence", {}).items()
        }

    @classmethod
    def load(cls, path: str | Path) -> "StubEngine":
        try:
            with open(path) as f:
                return cls(json.load(f))
        except (OSError, ValueError) as exc:
            raise FixtureError(f"cannot load fixture {path}: {exc}") from exc

    def _frame_vector(self, video_id: str, frame_index: int) -> np.ndarray:
        try:
            return self.frames[video_id][frame_index]
        except KeyError:
            raise FixtureError(
                f"fixture has no vector for frame {frame_index} of video {video_id!r}"
            ) from None

    def embed_frames(self, video_id: str, frame_indices: list[int]) -> list[list[float]]:
        return [
            [float(x) for x in self._frame_vector(video_id, i)] for i in frame_indices
        ]

    def embed_clip(self, video_id: str, frame_indices: list[int]) -> list[list[float]]:
        stack = np.stack([self._frame_vector(video_id, i) for i in frame_indices])
        mean = np.mean(stack.astype(np.float64), axis=0)
        norm = float(np.linalg.norm(mean))
        if norm == 0.0:
            raise FixtureError(f"clip over frames {frame_indices} has a zero-norm mean")
        return [[float(x) for x in (mean / norm).astype(np.float32)]]

    def embed_query(self, query: str) -> list[list[float]]:
        try:
            vec = self.queries[query]
        except KeyError:
            raise FixtureError(f"fixture has no vector for query {query!r}") from None
        return [[float(x) for x in vec]]

    def score(self, query: str, video_id: str, frame_indices: list[int],
              prompt: str | None = None) -> list[list[float]]:
        # canned logits ignore the prompt; real backends render it verbatim
        ev = self.evidence.get(video_id, frozenset())
        return [
            level_logits(self.seed, query, video_id, i, i in ev, self.boost)
            for i in frame_indices
        ]
