"""Embedding backends and cosine similarity.

All vectors inside the engine are float32 numpy arrays so that the
on-disk cache, graph serialization, and warm-cache reruns are lossless.
Similarity math is always done in float64 on top of those float32 inputs.

Backends:
  * mock    -- counter-based pseudorandom vectors, pure function of
               (seed, video_id, frame_index) / (seed, query); no state.
  * fixture -- vectors read from a JSON fixture file (synthetic corpora,
               stub-service parity tests).
  * remote  -- HTTP client for the POST /embed wire protocol.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .errors import BackendError, DegenerateInputError, InvalidInputError
from .types import FrameRef

logger = logging.getLogger(__name__)

REQUEST_TIMEOUT_S = 30.0


def derived_rng(*parts) -> np.random.Generator:
    """Deterministic generator keyed by an arbitrary tuple of values.

    blake2b of the joined key seeds a PCG64 stream, so identical keys
    yield bit-identical outputs on every platform.
    """
    key = "|".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))


def mock_frame_embedding(seed: int, video_id: str, frame_index: int, dim: int) -> np.ndarray:
    rng = derived_rng("frame-emb", seed, video_id, frame_index, dim)
    return rng.standard_normal(dim).astype(np.float32)


def mock_query_embedding(seed: int, query: str, dim: int) -> np.ndarray:
    rng = derived_rng("query-emb", seed, query, dim)
    return rng.standard_normal(dim).astype(np.float32)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors, in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise InvalidInputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidInputError("non-finite vector component")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("zero-norm vector has no direction")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def normalized_mean(vectors: np.ndarray) -> np.ndarray:
    """Unit-normalized arithmetic mean of a (n, dim) float32 stack."""
    mean = np.mean(np.asarray(vectors, dtype=np.float64), axis=0)
    norm = float(np.linalg.norm(mean))
    if norm == 0.0:
        raise DegenerateInputError("mean embedding has zero norm")
    return (mean / norm).astype(np.float32)


@dataclass(frozen=True)
class EmbeddingBackendDescriptor:
    kind: str  # "mock" | "remote" | "fixture"
    dim: int
    endpoint: str | None = None
    seed: int | None = None
    fixture: str | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidInputError(f"dim must be >= 1, got {self.dim}")
        if self.kind == "remote":
            if not self.endpoint:
                raise InvalidInputError("remote backend requires an endpoint")
        elif self.kind == "mock":
            if self.seed is None:
                raise InvalidInputError("mock backend requires a seed")
        elif self.kind == "fixture":
            if not self.fixture:
                raise InvalidInputError("fixture backend requires a fixture path")
        else:
            raise InvalidInputError(f"unknown embedding backend kind {self.kind!r}")

    def cache_token(self) -> str:
        """Stable identity string used in cache keys."""
        return f"emb:{self.kind}:{self.dim}:{self.endpoint}:{self.seed}:{self.fixture}"

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingBackendDescriptor":
        return cls(
            kind=d["kind"],
            dim=int(d["dim"]),
            endpoint=d.get("endpoint"),
            seed=d.get("seed"),
            fixture=d.get("fixture"),
        )

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim}
        if self.endpoint is not None:
            out["endpoint"] = self.endpoint
        if self.seed is not None:
            out["seed"] = self.seed
        if self.fixture is not None:
            out["fixture"] = self.fixture
        return out


def _check_frames(frames: list[FrameRef]):
    if not frames:
        raise InvalidInputError("frame list is empty")
    video_ids = {f.video_id for f in frames}
    if len(video_ids) != 1:
        raise InvalidInputError(f"frames span multiple videos: {sorted(video_ids)}")
    indices = [f.frame_index for f in frames]
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise InvalidInputError("frames must be sorted by strictly increasing frame_index")


class MockEmbeddingBackend:
    """Pure-function backend; every output is derived from the descriptor seed."""

    def __init__(self, descriptor: EmbeddingBackendDescriptor):
        self.descriptor = descriptor
        self.calls = 0

    def embed_frames(self, frames: list[FrameRef]) -> np.ndarray:
        self.calls += 1
        d = self.descriptor
        return np.stack(
            [mock_frame_embedding(d.seed, f.video_id, f.frame_index, d.dim) for f in frames]
        )

    def embed_clip(self, clip_frames: list[FrameRef]) -> np.ndarray:
        return normalized_mean(self.embed_frames(clip_frames))

    def embed_query(self, query: str) -> np.ndarray:
        self.calls += 1
        return mock_query_embedding(self.descriptor.seed, query, self.descriptor.dim)


class EmbeddingFixture:
    """Parsed fixture file shared by the fixture backend and the stub service.

    Layout (JSON): {"dim": int, "seed": int, "boost": float,
                    "videos": {video_id: {"frames": {str(index): [floats]}}},
                    "queries": {query_text: [floats]},
                    "evidence": {video_id: [frame_index, ...]}}
    """

    def __init__(self, data: dict):
        self.dim = int(data["dim"])
        self.seed = int(data.get("seed", 0))
        self.boost = float(data.get("boost", 0.0))
        self.videos = {
            vid: {int(k): np.asarray(v, dtype=np.float32) for k, v in entry["frames"].items()}
            for vid, entry in data.get("videos", {}).items()
        }
        self.queries = {q: np.asarray(v, dtype=np.float32) for q, v in data.get("queries", {}).items()}
        self.evidence = {
            vid: frozenset(int(i) for i in idxs) for vid, idxs in data.get("evidence", {}).items()
        }

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingFixture":
        try:
            with open(path) as f:
                return cls(json.load(f))
        except (OSError, ValueError, KeyError) as exc:
            raise BackendError(f"cannot load embedding fixture {path}: {exc}") from exc

    def frame_vector(self, video_id: str, frame_index: int) -> np.ndarray:
        try:
            return self.videos[video_id][frame_index]
        except KeyError:
            raise BackendError(
                f"fixture has no embedding for frame {frame_index} of video {video_id!r}"
            ) from None

    def query_vector(self, query: str) -> np.ndarray:
        try:
            return self.queries[query]
        except KeyError:
            raise BackendError(f"fixture has no embedding for query {query!r}") from None


class FixtureEmbeddingBackend:
    """Serves embeddings from a pre-generated fixture file."""

    def __init__(self, descriptor: EmbeddingBackendDescriptor):
        self.descriptor = descriptor
        self.fixture = EmbeddingFixture.load(descriptor.fixture)
        if self.fixture.dim != descriptor.dim:
            raise BackendError(
                f"fixture dim {self.fixture.dim} != descriptor dim {descriptor.dim}"
            )
        self.calls = 0

    def embed_frames(self, frames: list[FrameRef]) -> np.ndarray:
        self.calls += 1
        return np.stack([self.fixture.frame_vector(f.video_id, f.frame_index) for f in frames])

    def embed_clip(self, clip_frames: list[FrameRef]) -> np.ndarray:
        return normalized_mean(self.embed_frames(clip_frames))

    def embed_query(self, query: str) -> np.ndarray:
        self.calls += 1
        return self.fixture.query_vector(query)


class RemoteEmbeddingBackend:
    """HTTP client for the POST /embed wire protocol."""

    def __init__(self, descriptor: EmbeddingBackendDescriptor, session: requests.Session | None = None):
        self.descriptor = descriptor
        self.session = session or requests.Session()
        self.calls = 0

    def _post(self, body: dict, expected: int) -> np.ndarray:
        self.calls += 1
        url = self.descriptor.endpoint.rstrip("/") + "/embed"
        try:
            resp = self.session.post(url, json=body, timeout=REQUEST_TIMEOUT_S)
            resp.raise_for_status()
            payload = resp.json()
        except (requests.RequestException, ValueError) as exc:
            raise BackendError(f"embed backend at {url} failed: {exc}") from exc
        vectors = payload.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != expected:
            raise BackendError(
                f"embed backend returned {len(vectors) if isinstance(vectors, list) else 'no'} "
                f"vectors, expected {expected}"
            )
        arr = np.asarray(vectors, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[1] != self.descriptor.dim:
            raise BackendError(
                f"embed backend returned shape {arr.shape}, expected (*, {self.descriptor.dim})"
            )
        if not np.all(np.isfinite(arr)):
            raise BackendError("embed backend returned non-finite values")
        return arr

    def embed_frames(self, frames: list[FrameRef]) -> np.ndarray:
        body = {
            "kind": "frames",
            "video_id": frames[0].video_id,
            "frame_indices": [f.frame_index for f in frames],
            "dim_hint": self.descriptor.dim,
        }
        return self._post(body, expected=len(frames))

    def embed_clip(self, clip_frames: list[FrameRef]) -> np.ndarray:
        body = {
            "kind": "clip",
            "video_id": clip_frames[0].video_id,
            "frame_indices": [f.frame_index for f in clip_frames],
            "dim_hint": self.descriptor.dim,
        }
        return self._post(body, expected=1)[0]

    def embed_query(self, query: str) -> np.ndarray:
        body = {"kind": "query", "query": query, "dim_hint": self.descriptor.dim}
        return self._post(body, expected=1)[0]


_BACKEND_CLASSES = {
    "mock": MockEmbeddingBackend,
    "fixture": FixtureEmbeddingBackend,
    "remote": RemoteEmbeddingBackend,
}


def make_embedding_backend(descriptor: EmbeddingBackendDescriptor):
    return _BACKEND_CLASSES[descriptor.kind](descriptor)


def _as_backend(backend_or_descriptor):
    if isinstance(backend_or_descriptor, EmbeddingBackendDescriptor):
        return make_embedding_backend(backend_or_descriptor)
    return backend_or_descriptor


def embed_frames(backend, frames: list[FrameRef]) -> np.ndarray:
    """One embedding per frame, order-preserving. Accepts a descriptor or backend."""
    _check_frames(frames)
    return _as_backend(backend).embed_frames(frames)


def embed_clip(backend, clip_frames: list[FrameRef]) -> np.ndarray:
    """Single clip-level embedding for a contiguous span of frames."""
    _check_frames(clip_frames)
    return _as_backend(backend).embed_clip(clip_frames)


def embed_query(backend, query: str) -> np.ndarray:
    """Embedding of a text query in the shared video-language space."""
    if not query or not query.strip():
        raise InvalidInputError("query is empty")
    return _as_backend(backend).embed_query(query)
