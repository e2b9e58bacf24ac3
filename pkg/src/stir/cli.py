"""Command-line interface.

Verbs: segment, graph, retrieve, score, run (full pipeline), sweep,
corpus. Global flags --config/--cache-dir/--seed; flag values override
the config file, and STIR_CACHE_DIR overrides cache_dir.

Exit codes: 0 success, 2 validation error, 3 backend error, 4 cache
corruption.
"""

from __future__ import annotations

import functools
import json
import sys
from dataclasses import replace
from pathlib import Path

import click

from .embedding import embed_frames
from .errors import BackendError, CacheError, InvalidInputError, ValidationError
from .graph import build_graph, graph_to_json, serialize_graph
from .pipeline import (
    PRESETS,
    PipelineBackends,
    PipelineConfig,
    default_penalty,
    emit_evidence,
    evidence_to_dict,
    load_manifest,
    run_pipeline,
)
from .scoring import expand_frame_pool, score_frames
from .segmentation import clips_from_boundaries, pelt_segment


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, CacheError):
        return 4
    if isinstance(exc, BackendError):
        return 3
    if isinstance(exc, (ValidationError, InvalidInputError)):
        return 2
    raise exc


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValidationError, InvalidInputError, BackendError, CacheError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(_exit_code(exc))

    return wrapper


def _resolve_config(ctx) -> PipelineConfig:
    opts = ctx.obj
    data = {}
    if opts.get("config"):
        data = json.loads(Path(opts["config"]).read_text())
    if opts.get("cache_dir"):
        data["cache_dir"] = opts["cache_dir"]
    config = PipelineConfig.from_dict(data, preset=opts.get("preset", "default"))
    seed = opts.get("seed")
    if seed is not None:
        if config.boundary_backend.kind == "mock":
            config = replace(config, boundary_backend=replace(config.boundary_backend, seed=seed))
        if config.embed_backend.kind == "mock":
            config = replace(config, embed_backend=replace(config.embed_backend, seed=seed))
        if config.scorer_backend.kind == "mock":
            config = replace(config, scorer_backend=replace(config.scorer_backend, seed=seed))
    return config


@click.group()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), help="JSON config file.")
@click.option("--cache-dir", type=click.Path(file_okay=False), help="Cache directory override.")
@click.option("--seed", type=int, help="Seed override for mock backends.")
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default="default",
              help="Named hyperparameter preset.")
@click.pass_context
def main(ctx, config, cache_dir, seed, preset):
    """Structured, intent-aware evidence retrieval for long videos."""
    ctx.obj = {"config": config, "cache_dir": cache_dir, "seed": seed, "preset": preset}


def _stages_upto_segmentation(manifest, config):
    backends = PipelineBackends.from_config(config)
    frame_emb = embed_frames(backends.boundary, list(manifest.frames))
    penalty = default_penalty(config.boundary_backend.dim, len(manifest.frames),
                              config.penalty_scale)
    segmentation = pelt_segment(frame_emb, penalty, config.min_clip_len)
    return backends, segmentation


@main.command()
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), help="Write segmentation JSON here.")
@click.pass_context
@handle_errors
def segment(ctx, manifest_path, out):
    """Segment a video manifest into event clips."""
    config = _resolve_config(ctx)
    manifest = load_manifest(manifest_path)
    _, segmentation = _stages_upto_segmentation(manifest, config)
    text = json.dumps(segmentation.to_dict(), indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    click.echo(text)


def _build_graph_for(manifest, config):
    from .embedding import embed_clip

    backends, segmentation = _stages_upto_segmentation(manifest, config)
    clips = clips_from_boundaries(list(manifest.frames), segmentation)
    clip_embs = [embed_clip(backends.embed, list(c.frames)) for c in clips]
    return backends, segmentation, clips, build_graph(clips, clip_embs, config.construction_floor)


@main.command()
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Output path for the binary graph.")
@click.option("--json-out", type=click.Path(dir_okay=False), help="Optional JSON debug export.")
@click.pass_context
@handle_errors
def graph(ctx, manifest_path, out, json_out):
    """Build and serialize the clip graph for a manifest."""
    config = _resolve_config(ctx)
    manifest = load_manifest(manifest_path)
    _, _, _, g = _build_graph_for(manifest, config)
    Path(out).write_bytes(serialize_graph(g))
    if json_out:
        Path(json_out).write_text(json.dumps(graph_to_json(g), indent=2, sort_keys=True) + "\n")
    click.echo(f"graph: {len(g.nodes)} nodes, {len(g.edges)} edges -> {out}")


@main.command()
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--query", required=True, help="Text query.")
@click.option("--out", type=click.Path(dir_okay=False), help="Write hop-result JSON here.")
@click.pass_context
@handle_errors
def retrieve(ctx, manifest_path, query, out):
    """Run clip retrieval (anchors + multi-hop expansion) for a query."""
    from .embedding import embed_query
    from .retrieval import multi_hop_expand, select_anchors

    config = _resolve_config(ctx)
    manifest = load_manifest(manifest_path)
    backends, _, _, g = _build_graph_for(manifest, config)
    q = embed_query(backends.embed, query)
    anchors = select_anchors(g, q, config.N)
    hop = multi_hop_expand(g, anchors, config.L, config.eta)
    text = json.dumps(hop.to_dict(), indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    click.echo(text)


@main.command()
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--query", required=True, help="Text query.")
@click.option("--out", type=click.Path(dir_okay=False), help="Write scored frames JSON here.")
@click.pass_context
@handle_errors
def score(ctx, manifest_path, query, out):
    """Score the retrieved frame pool for intent relevance."""
    from .embedding import embed_query
    from .retrieval import multi_hop_expand, select_anchors

    config = _resolve_config(ctx)
    manifest = load_manifest(manifest_path)
    backends, _, clips, g = _build_graph_for(manifest, config)
    q = embed_query(backends.embed, query)
    hop = multi_hop_expand(g, select_anchors(g, q, config.N), config.L, config.eta)
    pool = expand_frame_pool(hop, clips, config.frame_stride)
    scored = score_frames(backends.scorer, query, pool, max_workers=config.scoring_workers)
    payload = [
        {"index": sf.frame.frame_index, "timestamp": sf.frame.timestamp,
         "score": sf.score, "distribution": list(sf.distribution),
         "source_node": sf.source_node}
        for sf in scored
    ]
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    click.echo(text)


@main.command()
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--query", required=True, help="Text query.")
@click.option("--out", type=click.Path(dir_okay=False), help="Write evidence JSON here.")
@click.option("--max-frames", type=int, default=None,
              help="Optional cap on emitted evidence frames (top-by-score).")
@click.pass_context
@handle_errors
def run(ctx, manifest_path, query, out, max_frames):
    """Run the full pipeline and emit the evidence set."""
    config = _resolve_config(ctx)
    if max_frames is not None:
        config = replace(config, max_frames=max_frames)
    manifest = load_manifest(manifest_path)
    evidence = run_pipeline(manifest, query, config)
    if out:
        emit_evidence(evidence, out)
        click.echo(f"evidence: {len(evidence.frames)} frames "
                   f"(fallback={evidence.fallback_used}) -> {out}")
    else:
        click.echo(json.dumps(evidence_to_dict(evidence), indent=2, sort_keys=True))


@main.command()
@click.option("--grid", "grid_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="JSON grid, e.g. {\"N\": [1,2,3,4]}.")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="corpus.json index from the corpus command.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.pass_context
@handle_errors
def sweep(ctx, grid_path, corpus_path, out_dir):
    """Full-factorial hyperparameter sweep over a synthetic corpus."""
    from .harness import hyperparameter_sweep, load_corpus, write_sweep_outputs

    config = _resolve_config(ctx)
    grid = json.loads(Path(grid_path).read_text())
    items = load_corpus(corpus_path)
    rows = hyperparameter_sweep(items, grid, config, Path(config.cache_dir) / "sweep")
    outputs = write_sweep_outputs(rows, out_dir)
    for name, path in outputs.items():
        click.echo(f"{name}: {path}")


@main.command()
@click.option("--videos", type=int, default=20, help="Number of synthetic videos.")
@click.option("--noise-scale", type=float, default=0.05)
@click.option("--dim", type=int, default=32)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.pass_context
@handle_errors
def corpus(ctx, videos, noise_scale, dim, out_dir):
    """Generate a synthetic corpus with planted ground truth."""
    from .harness import generate_corpus, random_corpus_specs

    seed = ctx.obj.get("seed") or 0
    specs = random_corpus_specs(videos, seed=seed, dim=dim, noise_scale=noise_scale)
    items = generate_corpus(specs, seed=seed, out_dir=out_dir)
    click.echo(f"wrote corpus of {len(items)} videos to {out_dir}")


if __name__ == "__main__":
    main()
