"""Graph-based clip retrieval: anchor selection and multi-hop expansion.

Anchors are the top-N clip nodes by query-clip cosine. Expansion is a
multi-source breadth-first search restricted to edges whose weight
clears the traversal threshold, keeping every node within L hops of an
anchor. `brute_force_hop_oracle` recomputes the same membership
predicate from all-pairs hop distances by repeated min-plus relaxation.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .embedding import cosine_similarity
from .errors import InvalidInputError
from .graph import SpatioTemporalGraph

ORACLE_MAX_NODES = 64


@dataclass(frozen=True)
class AnchorSet:
    anchors: tuple[int, ...]
    scores: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"anchors": list(self.anchors), "scores": list(self.scores)}


@dataclass(frozen=True)
class HopResult:
    nodes: frozenset[int]
    hop_distance: dict[int, int]
    anchors: tuple[int, ...]
    params: dict  # {"N": int, "L": int, "eta": float}

    def to_dict(self) -> dict:
        return {
            "anchors": list(self.anchors),
            "nodes": sorted(self.nodes),
            "hop_distance": {str(k): v for k, v in sorted(self.hop_distance.items())},
            "params": self.params,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HopResult":
        return cls(
            nodes=frozenset(d["nodes"]),
            hop_distance={int(k): int(v) for k, v in d["hop_distance"].items()},
            anchors=tuple(d["anchors"]),
            params=d["params"],
        )


def select_anchors(graph: SpatioTemporalGraph, query_embedding: np.ndarray, n: int) -> AnchorSet:
    """Top-N nodes by query cosine; ties break toward the earlier clip."""
    if n < 1:
        raise InvalidInputError(f"N must be >= 1, got {n}")
    if len(graph) == 0:
        raise InvalidInputError("graph has no nodes")
    scored = [
        (cosine_similarity(query_embedding, node.embedding), node.node_id)
        for node in graph.nodes
    ]
    scored.sort(key=lambda t: (-t[0], t[1]))
    top = scored[:n]
    return AnchorSet(
        anchors=tuple(nid for _, nid in top),
        scores=tuple(s for s, _ in top),
    )


def multi_hop_expand(graph: SpatioTemporalGraph, anchors: AnchorSet, hops: int, eta: float) -> HopResult:
    """Nodes within `hops` edges of any anchor on the eta-thresholded subgraph."""
    if hops < 0:
        raise InvalidInputError(f"hop limit must be >= 0, got {hops}")
    if eta > 1:
        # no edge weight exceeds 1, so expansion collapses to the anchors
        pass
    valid = {n.node_id for n in graph.nodes}
    for a in anchors.anchors:
        if a not in valid:
            raise InvalidInputError(f"anchor {a} not in graph")
    distance: dict[int, int] = {a: 0 for a in anchors.anchors}
    queue = deque(anchors.anchors)
    while queue:
        u = queue.popleft()
        if distance[u] == hops:
            continue
        for v, edge in graph.neighbors(u, min_weight=eta):
            if v not in distance:
                distance[v] = distance[u] + 1
                queue.append(v)
    return HopResult(
        nodes=frozenset(distance),
        hop_distance=distance,
        anchors=anchors.anchors,
        params={"N": len(anchors.anchors), "L": hops, "eta": eta},
    )


def brute_force_hop_oracle(graph: SpatioTemporalGraph, anchors: AnchorSet, hops: int, eta: float) -> frozenset[int]:
    """All-pairs hop distances by repeated min-plus relaxation, then the
    membership predicate applied literally. Testing oracle; <= 64 nodes."""
    n = len(graph)
    if n > ORACLE_MAX_NODES:
        raise InvalidInputError(f"oracle refuses graphs larger than {ORACLE_MAX_NODES} nodes")
    if hops < 0:
        raise InvalidInputError(f"hop limit must be >= 0, got {hops}")
    valid = {node.node_id for node in graph.nodes}
    for a in anchors.anchors:
        if a not in valid:
            raise InvalidInputError(f"anchor {a} not in graph")
    inf = float("inf")
    dist = np.full((n, n), inf)
    np.fill_diagonal(dist, 0.0)
    for e in graph.edges:
        if e.weight >= eta:
            dist[e.u, e.v] = 1.0
            dist[e.v, e.u] = 1.0
    for _ in range(n):
        relaxed = np.min(dist[:, :, None] + dist[None, :, :], axis=1)
        if np.array_equal(relaxed, dist):
            break
        dist = relaxed
    anchor_idx = list(anchors.anchors)
    best = np.min(dist[:, anchor_idx], axis=1) if anchor_idx else np.full(n, inf)
    return frozenset(int(j) for j in range(n) if best[j] <= hops)
