"""Intent-relevance frame scoring.

Each (query, frame) pair gets five level logits from a scorer backend.
The engine owns the math: a stable softmax over exactly the five level
tokens, the probability-weighted expectation as the continuous score, a
strict threshold filter with a top-k fallback, and cross-entropy against
discrete labels as an evaluation metric. Backends only move logits.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import requests

from .embedding import EmbeddingFixture, derived_rng
from .errors import BackendError, InvalidInputError
from .retrieval import HopResult
from .types import Clip, FrameRef

logger = logging.getLogger(__name__)

NUM_LEVELS = 5
LEVELS = np.arange(1, NUM_LEVELS + 1, dtype=np.float64)
CE_PROB_FLOOR = 1e-12
SCORE_BATCH_SIZE = 32
SCORE_MAX_RETRIES = 3


def _prompt_template() -> str:
    return resources.files("stir.assets").joinpath("intent_prompt.txt").read_text(encoding="utf-8")


@dataclass(frozen=True)
class IntentPrompt:
    template: str
    rendered: str


def build_intent_prompt(query: str) -> IntentPrompt:
    """Render the level-rating prompt with the query substituted verbatim."""
    if not query or not query.strip():
        raise InvalidInputError("query is empty")
    template = _prompt_template()
    return IntentPrompt(template=template, rendered=template.replace("{query}", query))


def softmax_levels(logits) -> np.ndarray:
    """Stable softmax over the five level logits."""
    arr = np.asarray(logits, dtype=np.float64)
    if arr.shape != (NUM_LEVELS,):
        raise InvalidInputError(f"expected {NUM_LEVELS} logits, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("non-finite logit")
    shifted = np.exp(arr - arr.max())
    return shifted / shifted.sum()


def validate_distribution(probs) -> np.ndarray:
    arr = np.asarray(probs, dtype=np.float64)
    if arr.shape != (NUM_LEVELS,):
        raise InvalidInputError(f"expected {NUM_LEVELS} probabilities, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise InvalidInputError("probabilities must be finite and in [0, 1]")
    if abs(float(arr.sum()) - 1.0) > 1e-9:
        raise InvalidInputError(f"probabilities sum to {arr.sum()}, not 1")
    return arr


def expected_relevance(dist) -> float:
    """Probability-weighted expectation of the level, in [1, 5]."""
    arr = validate_distribution(dist)
    return float(LEVELS @ arr)


def cross_entropy(dist, label: int) -> float:
    """-log probability of the labeled level, clamped below at 1e-12."""
    arr = validate_distribution(dist)
    if label not in range(1, NUM_LEVELS + 1):
        raise InvalidInputError(f"label must be in 1..{NUM_LEVELS}, got {label}")
    return float(-np.log(max(float(arr[label - 1]), CE_PROB_FLOOR)))


@dataclass(frozen=True)
class ScoredFrame:
    frame: FrameRef
    distribution: tuple[float, ...]
    score: float
    source_node: int


@dataclass
class EvidenceSet:
    """Final intent-aligned frames, chronological, with provenance."""

    query: str
    frames: list[ScoredFrame]
    fallback_used: bool
    provenance: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ScorerBackendDescriptor:
    kind: str  # "mock" | "remote" | "fixture"
    endpoint: str | None = None
    seed: int | None = None
    fixture: str | None = None
    boost: float = 0.0
    # video_id -> frame indices whose level-5 logit gets boosted (mock only)
    evidence: dict | None = None

    def __post_init__(self):
        if self.kind == "remote":
            if not self.endpoint:
                raise InvalidInputError("remote scorer requires an endpoint")
        elif self.kind == "mock":
            if self.seed is None:
                raise InvalidInputError("mock scorer requires a seed")
        elif self.kind == "fixture":
            if not self.fixture:
                raise InvalidInputError("fixture scorer requires a fixture path")
        else:
            raise InvalidInputError(f"unknown scorer backend kind {self.kind!r}")

    def cache_token(self) -> str:
        ev = None
        if self.evidence:
            ev = sorted((v, tuple(sorted(idx))) for v, idx in self.evidence.items())
        return f"score:{self.kind}:{self.endpoint}:{self.seed}:{self.fixture}:{self.boost}:{ev}"

    @classmethod
    def from_dict(cls, d: dict) -> "ScorerBackendDescriptor":
        return cls(
            kind=d["kind"],
            endpoint=d.get("endpoint"),
            seed=d.get("seed"),
            fixture=d.get("fixture"),
            boost=float(d.get("boost", 0.0)),
            evidence=d.get("evidence"),
        )

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.endpoint is not None:
            out["endpoint"] = self.endpoint
        if self.seed is not None:
            out["seed"] = self.seed
        if self.fixture is not None:
            out["fixture"] = self.fixture
        if self.boost:
            out["boost"] = self.boost
        if self.evidence is not None:
            out["evidence"] = {k: sorted(v) for k, v in self.evidence.items()}
        return out


def mock_level_logits(seed: int, query: str, video_id: str, frame_index: int,
                      evidence: bool, boost: float) -> list[float]:
    """Deterministic level logits; evidence frames get a level-5 boost.

    The base bias makes non-evidence frames score low (~2) so that a
    boosted evidence frame clears the default relevance threshold.
    """
    rng = derived_rng("score", seed, query, video_id, frame_index)
    logits = rng.standard_normal(NUM_LEVELS) + np.array([2.0, 1.0, 0.0, -1.0, -2.0])
    if evidence:
        logits[NUM_LEVELS - 1] += boost
    return [float(x) for x in logits]


class MockScorerBackend:
    def __init__(self, descriptor: ScorerBackendDescriptor):
        self.descriptor = descriptor
        self._evidence = {
            vid: frozenset(int(i) for i in idxs)
            for vid, idxs in (descriptor.evidence or {}).items()
        }
        self.calls = 0

    def level_logits(self, query: str, video_id: str, frame_indices: list[int]) -> list[list[float]]:
        self.calls += 1
        d = self.descriptor
        ev = self._evidence.get(video_id, frozenset())
        return [
            mock_level_logits(d.seed, query, video_id, idx, idx in ev, d.boost)
            for idx in frame_indices
        ]


class FixtureScorerBackend:
    """Same derivation as the mock, parameterized by the fixture file."""

    def __init__(self, descriptor: ScorerBackendDescriptor):
        self.descriptor = descriptor
        self.fixture = EmbeddingFixture.load(descriptor.fixture)
        self.calls = 0

    def level_logits(self, query: str, video_id: str, frame_indices: list[int]) -> list[list[float]]:
        self.calls += 1
        fx = self.fixture
        ev = fx.evidence.get(video_id, frozenset())
        return [
            mock_level_logits(fx.seed, query, video_id, idx, idx in ev, fx.boost)
            for idx in frame_indices
        ]


class RemoteScorerBackend:
    """HTTP client for the POST /score wire protocol, with bounded retries."""

    def __init__(self, descriptor: ScorerBackendDescriptor, session: requests.Session | None = None,
                 retry_delay_s: float = 0.2):
        self.descriptor = descriptor
        self.session = session or requests.Session()
        self.retry_delay_s = retry_delay_s
        self.calls = 0

    def level_logits(self, query: str, video_id: str, frame_indices: list[int]) -> list[list[float]]:
        url = self.descriptor.endpoint.rstrip("/") + "/score"
        body = {
            "query": query,
            "prompt": build_intent_prompt(query).rendered,
            "video_id": video_id,
            "frame_indices": frame_indices,
        }
        last_error = None
        for attempt in range(SCORE_MAX_RETRIES):
            self.calls += 1
            try:
                resp = self.session.post(url, json=body, timeout=60.0)
                resp.raise_for_status()
                logits = resp.json().get("logits")
                if (not isinstance(logits, list) or len(logits) != len(frame_indices)
                        or any(len(row) != NUM_LEVELS for row in logits)):
                    raise BackendError("malformed /score response shape")
                return [[float(x) for x in row] for row in logits]
            except (requests.RequestException, ValueError, BackendError) as exc:
                last_error = exc
                if attempt + 1 < SCORE_MAX_RETRIES:
                    time.sleep(self.retry_delay_s)
        raise BackendError(
            f"scorer at {url} failed after {SCORE_MAX_RETRIES} attempts for frames "
            f"{frame_indices}: {last_error}"
        )


_SCORER_CLASSES = {
    "mock": MockScorerBackend,
    "fixture": FixtureScorerBackend,
    "remote": RemoteScorerBackend,
}


def make_scorer_backend(descriptor: ScorerBackendDescriptor):
    return _SCORER_CLASSES[descriptor.kind](descriptor)


def expand_frame_pool(hop: HopResult, clips: list[Clip], stride: int = 1) -> list[tuple[FrameRef, int]]:
    """Dense frame pool over retrieved clips, subsampled at `stride`,
    chronological, each frame tagged with its source node."""
    if stride < 1:
        raise InvalidInputError(f"stride must be >= 1, got {stride}")
    pool: list[tuple[FrameRef, int]] = []
    for node_id in sorted(hop.nodes):
        if not 0 <= node_id < len(clips):
            raise InvalidInputError(f"hop node {node_id} has no clip (got {len(clips)} clips)")
        clip = clips[node_id]
        pool.extend((clip.frames[i], node_id) for i in range(0, clip.num_frames, stride))
    return pool


def fetch_level_logits(backend, query: str, pool: list[tuple[FrameRef, int]],
                       batch_size: int = SCORE_BATCH_SIZE, max_workers: int = 1) -> list[list[float]]:
    """Level logits for every pool entry, reassembled in pool order."""
    if isinstance(backend, ScorerBackendDescriptor):
        backend = make_scorer_backend(backend)
    if not pool:
        return []
    video_ids = {f.video_id for f, _ in pool}
    if len(video_ids) != 1:
        raise InvalidInputError(f"frame pool spans multiple videos: {sorted(video_ids)}")
    video_id = next(iter(video_ids))
    indices = [f.frame_index for f, _ in pool]
    batches = [indices[i:i + batch_size] for i in range(0, len(indices), batch_size)]
    if max_workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as ex:
            results = list(ex.map(lambda b: backend.level_logits(query, video_id, b), batches))
    else:
        results = [backend.level_logits(query, video_id, b) for b in batches]
    return [row for batch in results for row in batch]


def score_frames(backend, query: str, pool: list[tuple[FrameRef, int]],
                 batch_size: int = SCORE_BATCH_SIZE, max_workers: int = 1) -> list[ScoredFrame]:
    """One ScoredFrame per pool entry: softmax distribution plus expectation."""
    if not query or not query.strip():
        raise InvalidInputError("query is empty")
    logits = fetch_level_logits(backend, query, pool, batch_size, max_workers)
    out = []
    for (frame, node_id), row in zip(pool, logits):
        probs = softmax_levels(row)
        out.append(
            ScoredFrame(
                frame=frame,
                distribution=tuple(float(p) for p in probs),
                score=expected_relevance(probs),
                source_node=node_id,
            )
        )
    return out


def filter_by_threshold(scored: list[ScoredFrame], kappa_s: float, fallback_k: int = 8,
                        query: str = "") -> EvidenceSet:
    """Frames scoring strictly above kappa_s, chronological. If the strict
    set has fewer than fallback_k frames, fall back to the top fallback_k
    by score (flagged), so downstream context is never starved."""
    if fallback_k < 1:
        raise InvalidInputError(f"fallback_k must be >= 1, got {fallback_k}")
    strict = [sf for sf in scored if sf.score > kappa_s]
    if len(strict) >= fallback_k:
        return EvidenceSet(query=query, frames=strict, fallback_used=False)
    ranked = sorted(
        enumerate(scored), key=lambda pair: (-pair[1].score, pair[0])
    )[:fallback_k]
    ranked.sort(key=lambda pair: pair[0])  # restore chronological order
    return EvidenceSet(query=query, frames=[sf for _, sf in ranked], fallback_used=True)
