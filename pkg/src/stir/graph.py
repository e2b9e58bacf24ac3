"""Spatio-temporal graph over clip nodes.

Temporal edges link chronologically adjacent clips with weight 1.0;
spatial edges link every non-adjacent pair whose embedding cosine clears
the construction floor. Node embeddings are stored as float32 so the
binary serialization round-trips bit-exactly; edge weights are the
float64 cosine of those stored embeddings.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import GraphLoadError, InvalidInputError
from .types import Clip, FrameRef

TEMPORAL = "temporal"
SPATIAL = "spatial"

_MAGIC = b"STGR"
_VERSION = 1
_HEADER = struct.Struct("<4sHIII")   # magic, version, node count, edge count, dim
_EDGE = struct.Struct("<IIBd")       # u, v, kind, weight
_FRAME = struct.Struct("<Id")        # frame_index, timestamp
_KIND_CODE = {TEMPORAL: 0, SPATIAL: 1}
_KIND_NAME = {v: k for k, v in _KIND_CODE.items()}


@dataclass(frozen=True)
class Edge:
    u: int
    v: int
    kind: str
    weight: float

    def __post_init__(self):
        if self.u >= self.v:
            raise InvalidInputError(f"edge must be canonically oriented u < v, got ({self.u}, {self.v})")
        if self.kind == TEMPORAL:
            if self.v != self.u + 1 or self.weight != 1.0:
                raise InvalidInputError("temporal edges must be adjacent with weight 1.0")
        elif self.kind == SPATIAL:
            if not -1.0 <= self.weight <= 1.0:
                raise InvalidInputError(f"spatial weight {self.weight} outside [-1, 1]")
        else:
            raise InvalidInputError(f"unknown edge kind {self.kind!r}")


@dataclass(frozen=True)
class ClipNode:
    node_id: int
    clip: Clip
    embedding: np.ndarray = field(repr=False)


class SpatioTemporalGraph:
    def __init__(self, nodes: list[ClipNode], edges: list[Edge], construction_floor: float):
        self.nodes = list(nodes)
        self.edges = list(edges)
        self.construction_floor = float(construction_floor)
        self._adjacency: dict[int, list[tuple[int, Edge]]] = {n.node_id: [] for n in self.nodes}
        seen = set()
        for e in self.edges:
            if e.u not in self._adjacency or e.v not in self._adjacency:
                raise InvalidInputError(f"edge ({e.u}, {e.v}) references a missing node")
            if (e.u, e.v, e.kind) in seen:
                raise InvalidInputError(f"duplicate edge ({e.u}, {e.v}, {e.kind})")
            seen.add((e.u, e.v, e.kind))
            self._adjacency[e.u].append((e.v, e))
            self._adjacency[e.v].append((e.u, e))
        for lst in self._adjacency.values():
            lst.sort(key=lambda pair: pair[0])

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def dim(self) -> int:
        return int(self.nodes[0].embedding.shape[0])

    def neighbors(self, node_id: int, min_weight: float = float("-inf")) -> list[tuple[int, Edge]]:
        """Incident edges of either kind with weight >= min_weight, ascending neighbor id."""
        if node_id not in self._adjacency:
            raise InvalidInputError(f"node {node_id} not in graph (size {len(self)})")
        return [(nid, e) for nid, e in self._adjacency[node_id] if e.weight >= min_weight]

    def structurally_equal(self, other: "SpatioTemporalGraph") -> bool:
        if len(self.nodes) != len(other.nodes) or len(self.edges) != len(other.edges):
            return False
        if self.construction_floor != other.construction_floor:
            return False
        for a, b in zip(self.nodes, other.nodes):
            if a.node_id != b.node_id or a.clip != b.clip:
                return False
            if a.embedding.tobytes() != b.embedding.tobytes():
                return False
        return sorted(self.edges, key=_edge_key) == sorted(other.edges, key=_edge_key)


def _edge_key(e: Edge):
    return (e.u, e.v, e.kind)


def build_graph(clips: list[Clip], clip_embeddings, construction_floor: float = 0.0) -> SpatioTemporalGraph:
    """Construct the clip graph: a temporal path plus floored cosine spatial edges."""
    if len(clips) == 0:
        raise InvalidInputError("cannot build a graph from zero clips")
    if len(clips) != len(clip_embeddings):
        raise InvalidInputError(
            f"{len(clips)} clips but {len(clip_embeddings)} embeddings"
        )
    emb = np.stack([np.asarray(e, dtype=np.float32) for e in clip_embeddings])
    if not np.all(np.isfinite(emb)):
        raise InvalidInputError("non-finite clip embedding")
    nodes = [ClipNode(k, clip, emb[k]) for k, clip in enumerate(clips)]

    edges = [Edge(k, k + 1, TEMPORAL, 1.0) for k in range(len(clips) - 1)]
    x = emb.astype(np.float64)
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0.0):
        raise InvalidInputError("zero-norm clip embedding")
    sim = np.clip((x @ x.T) / np.outer(norms, norms), -1.0, 1.0)
    k = len(clips)
    for i in range(k):
        for j in range(i + 2, k):  # non-adjacent pairs only
            w = float(sim[i, j])
            if w >= construction_floor:
                edges.append(Edge(i, j, SPATIAL, w))
    return SpatioTemporalGraph(nodes, edges, construction_floor)


def neighbors(graph: SpatioTemporalGraph, node_id: int, min_weight: float = float("-inf")):
    return graph.neighbors(node_id, min_weight)


def serialize_graph(graph: SpatioTemporalGraph) -> bytes:
    """Versioned binary container; lossless for float32 embeddings and f64 weights."""
    buf = io.BytesIO()
    dim = graph.dim
    buf.write(_HEADER.pack(_MAGIC, _VERSION, len(graph.nodes), len(graph.edges), dim))
    video_id = graph.nodes[0].clip.video_id.encode("utf-8")
    buf.write(struct.pack("<H", len(video_id)))
    buf.write(video_id)
    buf.write(struct.pack("<d", graph.construction_floor))
    for node in graph.nodes:
        clip = node.clip
        buf.write(struct.pack("<III", clip.start, clip.end, clip.num_frames))
        for f in clip.frames:
            buf.write(_FRAME.pack(f.frame_index, f.timestamp))
        buf.write(np.asarray(node.embedding, dtype="<f4").tobytes())
    for e in sorted(graph.edges, key=_edge_key):
        buf.write(_EDGE.pack(e.u, e.v, _KIND_CODE[e.kind], e.weight))
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise GraphLoadError(
                f"truncated graph stream: wanted {n} bytes at offset {self.pos}, "
                f"only {len(self.data) - self.pos} remain"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))


def load_graph(data: bytes) -> SpatioTemporalGraph:
    r = _Reader(data)
    magic, version, n_nodes, n_edges, dim = r.unpack(_HEADER)
    if magic != _MAGIC:
        raise GraphLoadError(f"bad magic {magic!r}, expected {_MAGIC!r}")
    if version != _VERSION:
        raise GraphLoadError(f"unsupported graph version {version}")
    (vid_len,) = r.unpack(struct.Struct("<H"))
    video_id = r.take(vid_len).decode("utf-8")
    (floor,) = r.unpack(struct.Struct("<d"))
    nodes = []
    for k in range(n_nodes):
        start, end, n_frames = r.unpack(struct.Struct("<III"))
        frames = tuple(
            FrameRef(video_id, *r.unpack(_FRAME)) for _ in range(n_frames)
        )
        emb = np.frombuffer(r.take(4 * dim), dtype="<f4").copy()
        nodes.append(ClipNode(k, Clip(video_id, start, end, frames), emb))
    edges = []
    for _ in range(n_edges):
        u, v, kind, weight = r.unpack(_EDGE)
        if kind not in _KIND_NAME:
            raise GraphLoadError(f"unknown edge kind code {kind}")
        edges.append(Edge(u, v, _KIND_NAME[kind], weight))
    if r.pos != len(data):
        raise GraphLoadError(f"{len(data) - r.pos} trailing bytes after graph payload")
    try:
        return SpatioTemporalGraph(nodes, edges, floor)
    except InvalidInputError as exc:
        raise GraphLoadError(f"decoded graph is inconsistent: {exc}") from exc


def graph_to_json(graph: SpatioTemporalGraph) -> dict:
    """Debug export mirroring the binary container field-for-field."""
    return {
        "construction_floor": graph.construction_floor,
        "nodes": [
            {
                "node_id": n.node_id,
                "video_id": n.clip.video_id,
                "start": n.clip.start,
                "end": n.clip.end,
                "frames": [
                    {"index": f.frame_index, "timestamp": f.timestamp} for f in n.clip.frames
                ],
                "embedding": [float(x) for x in n.embedding],
            }
            for n in graph.nodes
        ],
        "edges": [
            {"u": e.u, "v": e.v, "kind": e.kind, "weight": e.weight}
            for e in sorted(graph.edges, key=_edge_key)
        ],
    }
