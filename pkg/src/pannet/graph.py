"""Undirected graphs with categorical features, adjacency and walk counts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DuplicateEdge,
    EmptyGraph,
    FeatureShapeMismatch,
    OutOfRangeEndpoint,
    WalkCountOverflow,
)

# float64 represents every integer up to 2**53 exactly; keep one bit of margin.
WALK_COUNT_LIMIT = 2.0**52


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected graph.

    Each undirected edge is stored once in ``edges`` (shape ``[m, 2]``) in the
    orientation it was supplied. ``edge_feat`` row ``k`` belongs to ``edges[k]``.
    Use :func:`build_graph` to construct validated instances.
    """

    num_nodes: int
    edges: np.ndarray
    node_feat: np.ndarray
    edge_feat: np.ndarray
    label: int | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def key(self) -> tuple:
        """Hashable structural identity (node count and edge list)."""
        return (self.num_nodes, self.edges.tobytes())

    def degrees(self) -> np.ndarray:
        return adjacency(self).sum(axis=1)

    def __repr__(self) -> str:
        return (
            f"Graph(num_nodes={self.num_nodes}, num_edges={self.num_edges}, "
            f"label={self.label})"
        )


def build_graph(
    num_nodes: int,
    edges: Iterable[Sequence[int]],
    node_feat=None,
    edge_feat=None,
    label: int | None = None,
) -> Graph:
    """Validate inputs and return an immutable :class:`Graph`.

    Missing feature matrices become zero-width integer arrays. Self-loops are
    kept as given. Supplying both ``(u, v)`` and ``(v, u)`` raises
    :class:`DuplicateEdge`; collapse directed pairs before calling this.
    """
    n = int(num_nodes)
    if n < 0:
        raise FeatureShapeMismatch(f"num_nodes must be non-negative, got {n}")
    e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                   dtype=np.int64)
    if e.size == 0:
        e = np.zeros((0, 2), dtype=np.int64)
    if e.ndim != 2 or e.shape[1] != 2:
        raise FeatureShapeMismatch(f"edges must have shape [m, 2], got {e.shape}")

    bad = np.flatnonzero((e < 0).any(axis=1) | (e >= n).any(axis=1))
    if bad.size:
        k = int(bad[0])
        raise OutOfRangeEndpoint(
            f"edge {k} = ({e[k, 0]}, {e[k, 1]}) has an endpoint outside [0, {n})"
        )

    seen: dict[tuple[int, int], int] = {}
    for k, (u, v) in enumerate(e.tolist()):
        key = (u, v) if u <= v else (v, u)
        if key in seen:
            raise DuplicateEdge(
                f"edge {k} = ({u}, {v}) duplicates edge {seen[key]}"
            )
        seen[key] = k

    nf = np.zeros((n, 0), dtype=np.int64) if node_feat is None else np.asarray(node_feat, dtype=np.int64)
    if nf.ndim == 1:
        nf = nf.reshape(-1, 1) if nf.size else np.zeros((n, 0), dtype=np.int64)
    if nf.shape[0] != n:
        raise FeatureShapeMismatch(
            f"node_feat has {nf.shape[0]} rows, expected num_nodes = {n}"
        )
    m = e.shape[0]
    ef = np.zeros((m, 0), dtype=np.int64) if edge_feat is None else np.asarray(edge_feat, dtype=np.int64)
    if ef.ndim == 1:
        ef = ef.reshape(-1, 1) if ef.size else np.zeros((m, 0), dtype=np.int64)
    if ef.shape[0] != m:
        raise FeatureShapeMismatch(
            f"edge_feat has {ef.shape[0]} rows, expected num_edges = {m}"
        )
    if label is not None:
        label = int(label)
    return Graph(n, _frozen(e.copy()), _frozen(nf.copy()), _frozen(ef.copy()), label)


def adjacency(g: Graph) -> np.ndarray:
    """Dense symmetric 0/1 adjacency matrix (float64, read-only)."""
    cached = g._cache.get("adjacency")
    if cached is not None:
        return cached
    a = np.zeros((g.num_nodes, g.num_nodes))
    if g.num_edges:
        a[g.edges[:, 0], g.edges[:, 1]] = 1.0
        a[g.edges[:, 1], g.edges[:, 0]] = 1.0
    g._cache["adjacency"] = _frozen(a)
    return a


def walk_counts(g: Graph, l: int) -> np.ndarray:
    """Number of length-``l`` walks between every pair of nodes, ``A**l``."""
    return adjacency_powers(g, l)[l]


def adjacency_powers(g: Graph, cutoff: int) -> list[np.ndarray]:
    """``[A**0, A**1, ..., A**cutoff]`` by repeated multiplication.

    Raises :class:`WalkCountOverflow` once a count exceeds ``2**52``.
    """
    if cutoff < 0:
        raise ValueError(f"walk length must be non-negative, got {cutoff}")
    # copy-on-extend so concurrent readers never see a half-built list
    powers = list(g._cache.get("powers", ()))
    if len(powers) > cutoff:
        return powers[: cutoff + 1]
    if not powers:
        powers.append(_frozen(np.eye(g.num_nodes)))
    a = adjacency(g)
    while len(powers) <= cutoff:
        nxt = powers[-1] @ a
        if nxt.size and nxt.max() > WALK_COUNT_LIMIT:
            raise WalkCountOverflow(
                f"walk counts of length {len(powers)} exceed 2**52 on a "
                f"{g.num_nodes}-node graph; reduce the cutoff"
            )
        powers.append(_frozen(nxt))
    g._cache["powers"] = powers
    return powers[: cutoff + 1]


def induced_subgraph(g: Graph, kept: Sequence[int]) -> Graph:
    """Subgraph on ``kept`` nodes, relabelled ``0..K-1`` in the order given."""
    kept = np.asarray(kept, dtype=np.int64)
    if kept.size == 0:
        raise EmptyGraph("cannot induce a subgraph on zero nodes")
    relabel = np.full(g.num_nodes, -1, dtype=np.int64)
    relabel[kept] = np.arange(kept.size)
    if g.num_edges:
        mask = (relabel[g.edges[:, 0]] >= 0) & (relabel[g.edges[:, 1]] >= 0)
        edges = relabel[g.edges[mask]]
        edge_feat = g.edge_feat[mask]
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
        edge_feat = g.edge_feat
    return Graph(
        int(kept.size),
        _frozen(edges.copy()),
        _frozen(g.node_feat[kept].copy()),
        _frozen(edge_feat.copy()),
        g.label,
    )


def permute(g: Graph, perm: Sequence[int]) -> Graph:
    """Relabel nodes so that old node ``i`` becomes ``perm[i]``."""
    perm = np.asarray(perm, dtype=np.int64)
    inv = np.argsort(perm)
    edges = perm[g.edges] if g.num_edges else g.edges
    return build_graph(g.num_nodes, edges, g.node_feat[inv], g.edge_feat, g.label)
