"""Synthetic-corpus evaluation: planted ground truth, retrieval metrics,
hyperparameter sweeps, and training-annotation export.

Synthetic videos are piecewise-constant embedding streams (one centroid
per segment plus isotropic noise); the query embedding is aligned with
the evidence segment's centroid, so the full retrieval path is exercised
without any model. The scorer fixture boosts planted evidence frames.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cache import content_key
from .embedding import EmbeddingBackendDescriptor, cosine_similarity
from .errors import InvalidInputError
from .pipeline import PipelineConfig, VideoManifest, run_pipeline, save_manifest
from .retrieval import HopResult
from .scoring import EvidenceSet, ScorerBackendDescriptor, cross_entropy
from .types import FrameRef

logger = logging.getLogger(__name__)

DEFAULT_FPS = 3.0
DEFAULT_DIM = 32
DEFAULT_BOOST = 8.0


@dataclass(frozen=True)
class SyntheticVideoSpec:
    video_id: str
    segment_lengths: tuple[int, ...]
    segment_centroids: tuple  # unit vectors, one per segment
    noise_scale: float
    # (segment_index, frame offsets within that segment) planted as evidence
    evidence: tuple[tuple[int, tuple[int, ...]], ...]
    query_text: str
    query_embedding: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(self.segment_lengths) != len(self.segment_centroids):
            raise InvalidInputError("one centroid required per segment")
        if any(n < 1 for n in self.segment_lengths):
            raise InvalidInputError("zero-length segment in spec")
        for seg, offsets in self.evidence:
            if not 0 <= seg < len(self.segment_lengths):
                raise InvalidInputError(f"evidence segment {seg} out of range")
            if any(not 0 <= o < self.segment_lengths[seg] for o in offsets):
                raise InvalidInputError(f"evidence offsets out of range in segment {seg}")

    @property
    def num_frames(self) -> int:
        return sum(self.segment_lengths)

    @property
    def true_boundaries(self) -> tuple[int, ...]:
        edges = np.cumsum(self.segment_lengths)[:-1]
        return tuple(int(b) for b in edges)

    def evidence_frame_indices(self) -> tuple[int, ...]:
        starts = [0, *np.cumsum(self.segment_lengths)[:-1]]
        out = []
        for seg, offsets in self.evidence:
            out.extend(int(starts[seg]) + int(o) for o in offsets)
        return tuple(sorted(out))


@dataclass(frozen=True)
class GroundTruth:
    video_id: str
    true_boundaries: tuple[int, ...]
    evidence_frames: tuple[FrameRef, ...]


@dataclass
class CorpusItem:
    manifest: VideoManifest
    truth: GroundTruth
    query_text: str
    fixture_path: Path


def min_pairwise_separation(centroids) -> float:
    """Smallest pairwise angular gap (1 - cosine) among centroids."""
    worst = 2.0
    for i in range(len(centroids)):
        for j in range(i + 1, len(centroids)):
            worst = min(worst, 1.0 - cosine_similarity(centroids[i], centroids[j]))
    return worst


def random_corpus_specs(num_videos: int, seed: int, dim: int = DEFAULT_DIM,
                        noise_scale: float = 0.05, num_segments: tuple[int, int] = (3, 6),
                        segment_len: tuple[int, int] = (8, 20),
                        max_centroid_cos: float = 0.5) -> list[SyntheticVideoSpec]:
    """Randomized specs with distinguishable centroids and one planted
    evidence segment (and matching query embedding) per video."""
    rng = np.random.Generator(np.random.PCG64(seed))
    specs = []
    for v in range(num_videos):
        k = int(rng.integers(num_segments[0], num_segments[1] + 1))
        lengths = tuple(int(rng.integers(segment_len[0], segment_len[1] + 1)) for _ in range(k))
        centroids = []
        while len(centroids) < k:
            c = rng.standard_normal(dim)
            c /= np.linalg.norm(c)
            if all(cosine_similarity(c, prev) <= max_centroid_cos for prev in centroids):
                centroids.append(c)
        ev_seg = int(rng.integers(0, k))
        # plant the whole segment so the strict filter (not the fallback)
        # carries the evidence downstream
        offsets = tuple(range(lengths[ev_seg]))
        video_id = f"synthetic-{seed}-{v:03d}"
        specs.append(
            SyntheticVideoSpec(
                video_id=video_id,
                segment_lengths=lengths,
                segment_centroids=tuple(centroids),
                noise_scale=noise_scale,
                evidence=((ev_seg, offsets),),
                query_text=f"query-{video_id}",
                query_embedding=centroids[ev_seg].copy(),
            )
        )
    return specs


def generate_corpus(specs: list[SyntheticVideoSpec], seed: int, out_dir: str | Path,
                    fps: float = DEFAULT_FPS, boost: float = DEFAULT_BOOST) -> list[CorpusItem]:
    """Materialize manifests, embedding/scorer fixtures, and ground truth.

    Deterministic in (specs, seed); writes one manifest and one fixture
    file per video plus a corpus.json index under out_dir.
    """
    if not specs:
        raise InvalidInputError("no video specs given")
    out_dir = Path(out_dir)
    (out_dir / "manifests").mkdir(parents=True, exist_ok=True)
    (out_dir / "fixtures").mkdir(parents=True, exist_ok=True)
    items = []
    index = {"seed": seed, "fps": fps, "videos": []}
    for spec in specs:
        rng = np.random.Generator(np.random.PCG64(
            int(content_key("corpus", seed, spec.video_id)[:16], 16)
        ))
        dim = int(np.asarray(spec.segment_centroids[0]).shape[0])
        frames = tuple(
            FrameRef(spec.video_id, i, i / fps) for i in range(spec.num_frames)
        )
        manifest = VideoManifest(video_id=spec.video_id, frames=frames, fps_extracted=fps)

        rows = []
        for length, centroid in zip(spec.segment_lengths, spec.segment_centroids):
            noise = spec.noise_scale * rng.standard_normal((length, dim))
            rows.append(np.asarray(centroid) + noise)
        emb = np.concatenate(rows).astype(np.float32)

        fixture = {
            "dim": dim,
            "seed": seed,
            "boost": boost,
            "videos": {spec.video_id: {"frames": {str(i): [float(x) for x in emb[i]]
                                                  for i in range(spec.num_frames)}}},
            "queries": {spec.query_text: [float(x) for x in
                                          np.asarray(spec.query_embedding, dtype=np.float32)]},
            "evidence": {spec.video_id: list(spec.evidence_frame_indices())},
        }
        fixture_path = out_dir / "fixtures" / f"{spec.video_id}.json"
        fixture_path.write_text(json.dumps(fixture, sort_keys=True))
        manifest_path = out_dir / "manifests" / f"{spec.video_id}.json"
        save_manifest(manifest, manifest_path)

        truth = GroundTruth(
            video_id=spec.video_id,
            true_boundaries=spec.true_boundaries,
            evidence_frames=tuple(frames[i] for i in spec.evidence_frame_indices()),
        )
        items.append(CorpusItem(manifest=manifest, truth=truth,
                                query_text=spec.query_text, fixture_path=fixture_path))
        index["videos"].append({
            "video_id": spec.video_id,
            "manifest": str(manifest_path.relative_to(out_dir)),
            "fixture": str(fixture_path.relative_to(out_dir)),
            "query": spec.query_text,
            "true_boundaries": list(spec.true_boundaries),
            "evidence_frames": list(spec.evidence_frame_indices()),
            "dim": dim,
        })
    (out_dir / "corpus.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    return items


def load_corpus(path: str | Path) -> list[CorpusItem]:
    """Load a corpus.json index written by generate_corpus."""
    path = Path(path)
    root = path.parent
    index = json.loads(path.read_text())
    items = []
    for entry in index["videos"]:
        manifest = VideoManifest.from_dict(json.loads((root / entry["manifest"]).read_text()))
        frames = {f.frame_index: f for f in manifest.frames}
        truth = GroundTruth(
            video_id=entry["video_id"],
            true_boundaries=tuple(entry["true_boundaries"]),
            evidence_frames=tuple(frames[i] for i in entry["evidence_frames"]),
        )
        items.append(CorpusItem(manifest=manifest, truth=truth,
                                query_text=entry["query"],
                                fixture_path=root / entry["fixture"]))
    return items


def item_config(item: CorpusItem, base: PipelineConfig, cache_dir: str | Path) -> PipelineConfig:
    """Point a base config's backends at one corpus item's fixture."""
    dim = json.loads(item.fixture_path.read_text())["dim"]
    backend = EmbeddingBackendDescriptor(kind="fixture", dim=dim, fixture=str(item.fixture_path))
    scorer = ScorerBackendDescriptor(kind="fixture", fixture=str(item.fixture_path))
    from dataclasses import replace

    return replace(base, embed_backend=backend, boundary_backend=backend,
                   scorer_backend=scorer, cache_dir=str(cache_dir))


def retrieval_accuracy(evidence: EvidenceSet, truth: GroundTruth, window_s: float = 0.0) -> float:
    """1.0 if the evidence set contains any ground-truth evidence frame
    (optionally within +/- window_s seconds), else 0.0."""
    if evidence.frames and evidence.frames[0].frame.video_id != truth.video_id:
        raise InvalidInputError(
            f"evidence is for video {evidence.frames[0].frame.video_id!r}, "
            f"truth for {truth.video_id!r}"
        )
    truth_indices = {f.frame_index for f in truth.evidence_frames}
    for sf in evidence.frames:
        if sf.frame.frame_index in truth_indices:
            return 1.0
        if window_s > 0 and any(
            abs(sf.frame.timestamp - tf.timestamp) <= window_s for tf in truth.evidence_frames
        ):
            return 1.0
    return 0.0


def avg_clips(hop_results: list[HopResult]) -> float:
    """Mean retrieved-clip count over queries."""
    if not hop_results:
        raise InvalidInputError("no hop results")
    return float(np.mean([len(h.nodes) for h in hop_results]))


def ce_eval(predictions, labels: list[int]) -> float:
    """Mean cross-entropy of predicted level distributions against labels."""
    if len(predictions) != len(labels):
        raise InvalidInputError(
            f"{len(predictions)} predictions vs {len(labels)} labels"
        )
    return float(np.mean([cross_entropy(p, y) for p, y in zip(predictions, labels)]))


@dataclass(frozen=True)
class SweepRow:
    params: dict
    avg_clips: float
    retrieval_accuracy: float
    wall_time_s: float

    def to_dict(self) -> dict:
        return {**self.params, "avg_clips": self.avg_clips,
                "retrieval_accuracy": self.retrieval_accuracy,
                "wall_time_s": self.wall_time_s}


def evaluate_corpus(items: list[CorpusItem], config: PipelineConfig,
                    cache_root: str | Path) -> tuple[float, float, list[HopResult]]:
    """(retrieval accuracy, avg clips, hop results) for one config."""
    hits = []
    hops = []
    for item in items:
        cfg = item_config(item, config, Path(cache_root) / item.manifest.video_id)
        evidence = run_pipeline(item.manifest, item.query_text, cfg)
        hits.append(retrieval_accuracy(evidence, item.truth))
        hops.append(HopResult.from_dict(evidence.provenance["hop"]))
    return float(np.mean(hits)), avg_clips(hops), hops


def hyperparameter_sweep(items: list[CorpusItem], grid: dict, base_config: PipelineConfig,
                         cache_root: str | Path) -> list[SweepRow]:
    """Full-factorial sweep over any of N, L, eta, kappa_s.

    Failed cells are logged and skipped; each cell gets its own cache
    namespace so results never bleed between parameter settings.
    """
    from dataclasses import replace
    from itertools import product

    allowed = ("N", "L", "eta", "kappa_s")
    unknown = set(grid) - set(allowed)
    if unknown:
        raise InvalidInputError(f"unknown sweep parameters: {sorted(unknown)}")
    axes = [(k, list(grid[k])) for k in allowed if k in grid]
    rows = []
    for values in product(*(vals for _, vals in axes)):
        params = dict(zip((k for k, _ in axes), values))
        cell = {"N": base_config.N, "L": base_config.L, "eta": base_config.eta,
                "kappa_s": base_config.kappa_s, **params}
        cell_cache = Path(cache_root) / content_key("sweep-cell", sorted(cell.items()))
        start = time.perf_counter()
        try:
            cfg = replace(base_config, **params)
            acc, clips, _ = evaluate_corpus(items, cfg, cell_cache)
        except Exception:
            logger.exception("sweep cell %s failed; skipping", cell)
            continue
        rows.append(SweepRow(params=cell, avg_clips=clips, retrieval_accuracy=acc,
                             wall_time_s=time.perf_counter() - start))
    return rows


def write_sweep_outputs(rows: list[SweepRow], out_dir: str | Path) -> dict[str, Path]:
    """CSV + JSON twins of the sweep table, plus rendered figures."""
    from .report import render_sweep_figures

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "sweep.csv"
    columns = ["N", "L", "eta", "kappa_s", "avg_clips", "retrieval_accuracy", "wall_time_s"]
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow(row.to_dict())
    json_path = out_dir / "sweep.json"
    json_path.write_text(json.dumps([r.to_dict() for r in rows], indent=2, sort_keys=True) + "\n")
    figures = render_sweep_figures(rows, out_dir)
    return {"csv": csv_path, "json": json_path, **figures}


SYSTEM_TEXT = "You are a helpful assistant."


@dataclass(frozen=True)
class IRAnnotation:
    """One distillation training sample in the three-message chat layout."""

    image_path: str
    query_text: str
    label: int
    system_text: str = SYSTEM_TEXT

    def __post_init__(self):
        if self.label not in range(1, 6):
            raise InvalidInputError(f"label must be in 1..5, got {self.label}")

    def to_messages(self) -> list[dict]:
        return [
            {"role": "system", "content": self.system_text},
            {"role": "user", "content": [
                {"type": "image", "image": self.image_path},
                {"type": "text", "text": self.query_text},
            ]},
            {"role": "assistant", "content": [{"type": "text", "text": str(self.label)}]},
        ]


def export_ir_annotations(samples: list[IRAnnotation], path: str | Path) -> int:
    """Write newline-delimited annotation records; returns the record count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for sample in samples:
            f.write(json.dumps(sample.to_messages(), ensure_ascii=False))
            f.write("\n")
    return len(samples)


def parse_ir_annotations(path: str | Path) -> list[IRAnnotation]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            messages = json.loads(line)
            system, user, assistant = messages
            image = next(c["image"] for c in user["content"] if c["type"] == "image")
            text = next(c["text"] for c in user["content"] if c["type"] == "text")
            label = int(assistant["content"][0]["text"])
            out.append(IRAnnotation(image_path=image, query_text=text, label=label,
                                    system_text=system["content"]))
    return out
