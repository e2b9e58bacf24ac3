"""End-to-end orchestration: manifest in, evidence set out.

Stage order: frame embeddings (boundary backend) -> penalized
segmentation -> clip embeddings (graph backend) -> graph construction ->
query embedding -> anchor selection -> multi-hop expansion -> frame pool
-> relevance scoring -> threshold filtering. Every backend-produced
intermediate is cached under the cache directory keyed by content hash,
so a warm rerun issues zero backend calls and reproduces the output
byte for byte.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cache import EmbeddingCache, StageCache, content_key
from .embedding import EmbeddingBackendDescriptor, embed_clip, embed_frames, embed_query, make_embedding_backend
from .errors import ValidationError
from .graph import build_graph
from .retrieval import HopResult, multi_hop_expand, select_anchors
from .scoring import (
    EvidenceSet,
    ScoredFrame,
    ScorerBackendDescriptor,
    expand_frame_pool,
    expected_relevance,
    filter_by_threshold,
    make_scorer_backend,
    softmax_levels,
)
from .segmentation import SegmentationResult, clips_from_boundaries, pelt_segment
from .types import FrameRef

logger = logging.getLogger(__name__)

FPS_TOLERANCE_S = 1e-3
CACHE_DIR_ENV = "STIR_CACHE_DIR"

# Defaults follow the published operating point; "tight" is the
# best-performing ablation row (fewer anchors, stricter edge threshold).
PRESETS: dict[str, dict] = {
    "default": {},
    "tight": {"N": 2, "eta": 0.6},
}


@dataclass(frozen=True)
class VideoManifest:
    video_id: str
    frames: tuple[FrameRef, ...]
    fps_extracted: float
    source_path: str | None = None

    def __post_init__(self):
        if not self.frames:
            raise ValidationError(f"manifest for {self.video_id!r} has no frames")
        if self.fps_extracted <= 0:
            raise ValidationError(f"fps must be > 0, got {self.fps_extracted}")
        step = 1.0 / self.fps_extracted
        prev = self.frames[0]
        for pos, f in enumerate(self.frames[1:], start=1):
            if f.video_id != self.video_id:
                raise ValidationError(
                    f"frame at position {pos} belongs to video {f.video_id!r}, "
                    f"not {self.video_id!r}"
                )
            if f.frame_index <= prev.frame_index or f.timestamp <= prev.timestamp:
                raise ValidationError(
                    f"frames not strictly increasing at position {pos} "
                    f"(index {f.frame_index}, timestamp {f.timestamp})"
                )
            if abs((f.timestamp - prev.timestamp) - step) > FPS_TOLERANCE_S:
                raise ValidationError(
                    f"timestamp spacing at position {pos} is {f.timestamp - prev.timestamp:.6f}s, "
                    f"inconsistent with fps {self.fps_extracted} (expected {step:.6f}s +/- 1 ms)"
                )
            prev = f

    def to_dict(self) -> dict:
        out = {
            "video_id": self.video_id,
            "fps": self.fps_extracted,
            "frames": [{"index": f.frame_index, "timestamp": f.timestamp} for f in self.frames],
        }
        if self.source_path is not None:
            out["source_path"] = self.source_path
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "VideoManifest":
        try:
            video_id = d["video_id"]
            fps = float(d["fps"])
            frames = tuple(
                FrameRef(video_id, int(f["index"]), float(f["timestamp"])) for f in d["frames"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed manifest: {exc}") from exc
        return cls(video_id=video_id, frames=frames, fps_extracted=fps,
                   source_path=d.get("source_path"))


def load_manifest(path: str | Path) -> VideoManifest:
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as exc:
        raise ValidationError(f"cannot read manifest {path}: {exc}") from exc
    except ValueError as exc:
        raise ValidationError(f"manifest {path} is not valid JSON: {exc}") from exc
    return VideoManifest.from_dict(data)


def save_manifest(manifest: VideoManifest, path: str | Path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")


@dataclass(frozen=True)
class PipelineConfig:
    N: int = 3
    L: int = 2
    eta: float = 0.4
    kappa_s: float = 3.25
    penalty_scale: float = 1.0
    min_clip_len: int = 3
    frame_stride: int = 1
    fallback_k: int = 8
    construction_floor: float = 0.0
    max_frames: int | None = None
    scoring_workers: int = 1
    embed_backend: EmbeddingBackendDescriptor = field(
        default_factory=lambda: EmbeddingBackendDescriptor(kind="mock", dim=32, seed=0)
    )
    boundary_backend: EmbeddingBackendDescriptor = field(
        default_factory=lambda: EmbeddingBackendDescriptor(kind="mock", dim=32, seed=0)
    )
    scorer_backend: ScorerBackendDescriptor = field(
        default_factory=lambda: ScorerBackendDescriptor(kind="mock", seed=0)
    )
    cache_dir: str = ".stir-cache"

    def __post_init__(self):
        if self.N < 1:
            raise ValidationError(f"N must be >= 1, got {self.N}")
        if self.L < 0:
            raise ValidationError(f"L must be >= 0, got {self.L}")
        if self.eta > 1:
            raise ValidationError(f"eta must be <= 1, got {self.eta}")
        if not 1.0 <= self.kappa_s <= 5.0:
            raise ValidationError(f"kappa_s must be in [1, 5], got {self.kappa_s}")
        if self.min_clip_len < 1 or self.frame_stride < 1 or self.fallback_k < 1:
            raise ValidationError("min_clip_len, frame_stride and fallback_k must be >= 1")
        if self.construction_floor > self.eta:
            raise ValidationError(
                f"construction_floor {self.construction_floor} exceeds eta {self.eta}; "
                "edges needed at traversal time would be missing from the graph"
            )

    @classmethod
    def from_dict(cls, d: dict, preset: str = "default") -> "PipelineConfig":
        merged = dict(PRESETS[preset])
        merged.update(d)
        kwargs = {}
        for key in ("N", "L", "min_clip_len", "frame_stride", "fallback_k",
                    "max_frames", "scoring_workers"):
            if key in merged and merged[key] is not None:
                kwargs[key] = int(merged[key])
        for key in ("eta", "kappa_s", "penalty_scale", "construction_floor"):
            if key in merged:
                kwargs[key] = float(merged[key])
        if "cache_dir" in merged:
            kwargs["cache_dir"] = str(merged["cache_dir"])
        for key in ("embed_backend", "boundary_backend"):
            if key in merged:
                kwargs[key] = EmbeddingBackendDescriptor.from_dict(merged[key])
        if "scorer_backend" in merged:
            kwargs["scorer_backend"] = ScorerBackendDescriptor.from_dict(merged["scorer_backend"])
        cfg = cls(**kwargs)
        env_cache = os.environ.get(CACHE_DIR_ENV)
        if env_cache:
            cfg = replace(cfg, cache_dir=env_cache)
        return cfg

    @classmethod
    def from_file(cls, path: str | Path, preset: str = "default") -> "PipelineConfig":
        try:
            with open(path) as f:
                data = json.load(f)
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        except ValueError as exc:
            raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data, preset=preset)

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "L": self.L,
            "eta": self.eta,
            "kappa_s": self.kappa_s,
            "penalty_scale": self.penalty_scale,
            "min_clip_len": self.min_clip_len,
            "frame_stride": self.frame_stride,
            "fallback_k": self.fallback_k,
            "construction_floor": self.construction_floor,
            "max_frames": self.max_frames,
            "scoring_workers": self.scoring_workers,
            "embed_backend": self.embed_backend.to_dict(),
            "boundary_backend": self.boundary_backend.to_dict(),
            "scorer_backend": self.scorer_backend.to_dict(),
            "cache_dir": self.cache_dir,
        }


def default_penalty(dim: int, num_frames: int, scale: float) -> float:
    """BIC-style segmentation penalty: scale * dim * log(num_frames)."""
    return scale * dim * math.log(max(num_frames, 1))


@dataclass
class PipelineBackends:
    boundary: object
    embed: object
    scorer: object

    @classmethod
    def from_config(cls, config: PipelineConfig) -> "PipelineBackends":
        return cls(
            boundary=make_embedding_backend(config.boundary_backend),
            embed=make_embedding_backend(config.embed_backend),
            scorer=make_scorer_backend(config.scorer_backend),
        )

    @property
    def total_calls(self) -> int:
        return self.boundary.calls + self.embed.calls + self.scorer.calls


def run_pipeline(manifest: VideoManifest, query: str, config: PipelineConfig,
                 backends: PipelineBackends | None = None) -> EvidenceSet:
    """Full retrieval pipeline for one (video, query) pair."""
    if not query or not query.strip():
        raise ValidationError("query is empty")
    backends = backends or PipelineBackends.from_config(config)
    cache_root = Path(config.cache_dir)
    emb_cache = EmbeddingCache(cache_root / "embeddings")
    stage_cache = StageCache(cache_root / "stages")
    frames = list(manifest.frames)
    frame_indices = tuple(f.frame_index for f in frames)

    # stage 1: per-frame boundary embeddings
    frame_key = content_key("frame-emb", config.boundary_backend.cache_token(),
                            manifest.video_id, frame_indices)
    frame_emb = emb_cache.get_or_compute(frame_key, lambda: embed_frames(backends.boundary, frames))

    # stage 2: event segmentation
    penalty = default_penalty(config.boundary_backend.dim, len(frames), config.penalty_scale)
    seg_key = content_key("segment", frame_key, repr(penalty), config.min_clip_len)
    cached = stage_cache.get(seg_key)
    if cached is not None:
        segmentation = SegmentationResult.from_dict(cached)
    else:
        segmentation = pelt_segment(frame_emb, penalty, config.min_clip_len)
        stage_cache.put(seg_key, segmentation.to_dict())
    clips = clips_from_boundaries(frames, segmentation)

    # stage 3: clip embeddings + graph
    clip_embeddings = []
    for clip in clips:
        key = content_key("clip-emb", config.embed_backend.cache_token(),
                          manifest.video_id, tuple(f.frame_index for f in clip.frames))
        clip_embeddings.append(
            emb_cache.get_or_compute(key, lambda c=clip: embed_clip(backends.embed, list(c.frames)))[0]
        )
    graph = build_graph(clips, clip_embeddings, config.construction_floor)

    # stage 4: query embedding + clip retrieval
    query_key = content_key("query-emb", config.embed_backend.cache_token(), query)
    query_emb = emb_cache.get_or_compute(query_key, lambda: embed_query(backends.embed, query))[0]
    anchors = select_anchors(graph, query_emb, config.N)
    hop = multi_hop_expand(graph, anchors, config.L, config.eta)

    # stage 5: frame scoring
    pool = expand_frame_pool(hop, clips, config.frame_stride)
    score_key = content_key("score", config.scorer_backend.cache_token(), query,
                            manifest.video_id, tuple(f.frame_index for f, _ in pool))
    cached = stage_cache.get(score_key)
    if cached is not None:
        logits = cached["logits"]
    else:
        from .scoring import fetch_level_logits

        logits = fetch_level_logits(backends.scorer, query, pool,
                                    max_workers=config.scoring_workers)
        stage_cache.put(score_key, {"logits": logits})
    scored = []
    for (frame, node_id), row in zip(pool, logits):
        probs = softmax_levels(row)
        scored.append(
            ScoredFrame(frame=frame, distribution=tuple(float(p) for p in probs),
                        score=expected_relevance(probs), source_node=node_id)
        )

    # stage 6: threshold filter (+ optional cap)
    evidence = filter_by_threshold(scored, config.kappa_s, config.fallback_k, query=query)
    if config.max_frames is not None and len(evidence.frames) > config.max_frames:
        kept = sorted(
            enumerate(evidence.frames), key=lambda pair: (-pair[1].score, pair[0])
        )[:config.max_frames]
        kept.sort(key=lambda pair: pair[0])
        evidence.frames = [sf for _, sf in kept]
    evidence.provenance = {
        "segmentation": segmentation.to_dict(),
        "anchors": anchors.to_dict(),
        "hop": hop.to_dict(),
    }
    return evidence


def evidence_to_dict(evidence: EvidenceSet) -> dict:
    return {
        "query": evidence.query,
        "fallback_used": evidence.fallback_used,
        "frames": [
            {
                "index": sf.frame.frame_index,
                "timestamp": sf.frame.timestamp,
                "score": sf.score,
                "distribution": list(sf.distribution),
                "source_node": sf.source_node,
            }
            for sf in evidence.frames
        ],
        "provenance": evidence.provenance,
    }


def emit_evidence(evidence: EvidenceSet, path: str | Path) -> bytes:
    """Write the evidence JSON; returns the emitted bytes."""
    data = (json.dumps(evidence_to_dict(evidence), indent=2, sort_keys=True) + "\n").encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return data


def load_evidence(path: str | Path, video_id: str) -> EvidenceSet:
    """Re-read an emitted evidence file (round-trip support for tests/tools)."""
    try:
        with open(path) as f:
            data = json.load(f)
        frames = [
            ScoredFrame(
                frame=FrameRef(video_id, int(f["index"]), float(f["timestamp"])),
                distribution=tuple(float(x) for x in f["distribution"]),
                score=float(f["score"]),
                source_node=int(f["source_node"]),
            )
            for f in data["frames"]
        ]
        return EvidenceSet(
            query=data["query"],
            frames=frames,
            fallback_used=bool(data["fallback_used"]),
            provenance=data.get("provenance", {}),
        )
    except (OSError, ValueError, KeyError) as exc:
        raise ValidationError(f"cannot load evidence {path}: {exc}") from exc


def hop_result_from_provenance(evidence: EvidenceSet) -> HopResult:
    return HopResult.from_dict(evidence.provenance["hop"])
