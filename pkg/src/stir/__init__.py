"""Structured, intent-aware evidence retrieval for long videos.

The engine turns a frame-embedding stream into a compact evidence set:
event segmentation (penalized change points) -> spatio-temporal clip
graph -> anchor selection and multi-hop expansion -> per-frame intent
relevance scoring -> threshold filtering.
"""

from .embedding import (
    EmbeddingBackendDescriptor,
    cosine_similarity,
    embed_clip,
    embed_frames,
    embed_query,
)
from .errors import (
    BackendError,
    CacheError,
    DegenerateInputError,
    InvalidInputError,
    StirError,
    ValidationError,
)
from .graph import SpatioTemporalGraph, build_graph, load_graph, serialize_graph
from .pipeline import PipelineConfig, VideoManifest, emit_evidence, load_manifest, run_pipeline
from .retrieval import AnchorSet, HopResult, multi_hop_expand, select_anchors
from .scoring import (
    EvidenceSet,
    ScoredFrame,
    ScorerBackendDescriptor,
    build_intent_prompt,
    cross_entropy,
    expected_relevance,
    filter_by_threshold,
    score_frames,
    softmax_levels,
)
from .segmentation import (
    SegmentationResult,
    clips_from_boundaries,
    exhaustive_segment,
    pelt_segment,
    segment_cost,
)
from .types import Clip, FrameRef

__version__ = "0.1.0"

__all__ = [
    "AnchorSet",
    "BackendError",
    "CacheError",
    "Clip",
    "DegenerateInputError",
    "EmbeddingBackendDescriptor",
    "EvidenceSet",
    "FrameRef",
    "HopResult",
    "InvalidInputError",
    "PipelineConfig",
    "ScoredFrame",
    "ScorerBackendDescriptor",
    "SegmentationResult",
    "SpatioTemporalGraph",
    "StirError",
    "ValidationError",
    "VideoManifest",
    "build_graph",
    "build_intent_prompt",
    "clips_from_boundaries",
    "cosine_similarity",
    "cross_entropy",
    "embed_clip",
    "embed_frames",
    "embed_query",
    "emit_evidence",
    "exhaustive_segment",
    "expected_relevance",
    "filter_by_threshold",
    "load_graph",
    "load_manifest",
    "multi_hop_expand",
    "pelt_segment",
    "run_pipeline",
    "score_frames",
    "segment_cost",
    "select_anchors",
    "serialize_graph",
    "softmax_levels",
]
