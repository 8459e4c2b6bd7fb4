"""Dataset containers and readers/writers for OGB raw CSV and JSON graphs."""

from __future__ import annotations

import gzip
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DataError,
    GraphError,
    MissingFile,
    NonIntegerField,
    RowCountMismatch,
    SchemaViolation,
)
from .graph import Graph, build_graph, walk_counts

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")


@dataclass
class Dataset:
    graphs: list
    splits: dict = field(default_factory=dict)
    node_cardinalities: list = field(default_factory=list)
    edge_cardinalities: list = field(default_factory=list)

    def __post_init__(self):
        self.splits = {k: np.asarray(self.splits.get(k, []), dtype=np.int64) for k in SPLITS}
        n = len(self.graphs)
        seen = np.zeros(n, dtype=bool)
        for name in SPLITS:
            idx = self.splits[name]
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise DataError(f"split {name!r} has indices outside [0, {n})")
            if np.unique(idx).size != idx.size or seen[idx].any():
                raise DataError(f"split {name!r} repeats an index or overlaps another split")
            seen[idx] = True
        if self.graphs and not self.node_cardinalities:
            self.node_cardinalities, self.edge_cardinalities = infer_cardinalities(self)

    def __len__(self) -> int:
        return len(self.graphs)

    def subset(self, split: str) -> list:
        return [self.graphs[i] for i in self.splits[split]]

    def labels(self, split: str | None = None) -> np.ndarray:
        graphs = self.graphs if split is None else self.subset(split)
        return np.array([g.label for g in graphs])


def infer_cardinalities(ds: Dataset) -> tuple[list, list]:
    """Per-field ``max code + 1`` over all graphs, for node and edge features."""
    if not ds.graphs:
        raise DataError("cannot infer cardinalities of an empty dataset")

    def dims(mats):
        width = mats[0].shape[1]
        top = np.zeros(width, dtype=np.int64)
        for m in mats:
            if m.shape[1] != width:
                raise DataError("graphs disagree on the number of feature fields")
            if m.shape[0]:
                top = np.maximum(top, m.max(axis=0))
        return [int(c) + 1 for c in top]

    node = dims([g.node_feat for g in ds.graphs])
    edge = dims([g.edge_feat for g in ds.graphs])
    ds.node_cardinalities, ds.edge_cardinalities = node, edge
    return node, edge


# ------------------------------------------------------------------ OGB raw


def _find(root: Path, name: str, subdirs=("", "raw")) -> Path:
    for sub in subdirs:
        for suffix in (".csv", ".csv.gz"):
            p = root / sub / f"{name}{suffix}"
            if p.exists():
                return p
    raise MissingFile(f"{name}.csv[.gz] not found under {root}")


def _read_int_csv(path: Path, columns: int | None = None) -> np.ndarray:
    opener = gzip.open if path.suffix == ".gz" else open
    rows = []
    with opener(path, "rt") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([int(tok) for tok in line.split(",")])
            except ValueError:
                raise NonIntegerField(f"{path}:{lineno}: non-integer field in {line!r}") from None
    if not rows:
        return np.zeros((0, columns or 0), dtype=np.int64)
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise RowCountMismatch(f"{path}: rows have differing column counts")
    if columns is not None and width != columns:
        raise RowCountMismatch(f"{path}: expected {columns} columns, found {width}")
    return np.asarray(rows, dtype=np.int64)


def _collapse_directed(edges: np.ndarray, feats: np.ndarray, graph_index: int):
    """Merge ``(u, v)``/``(v, u)`` row pairs into one undirected edge."""
    first: dict[tuple[int, int], int] = {}
    directions: dict[tuple[int, int], set] = {}
    keep = []
    for k, (u, v) in enumerate(edges.tolist()):
        key = (u, v) if u <= v else (v, u)
        if key in first:
            j = first[key]
            if not np.array_equal(feats[j], feats[k]):
                log.warning("graph %d: edge %s has conflicting features; keeping the first row",
                            graph_index, key)
            directions[key].add((u, v))
            continue
        first[key] = k
        directions[key] = {(u, v)}
        keep.append(k)
    unpaired = sum(1 for (a, b), d in directions.items() if a != b and len(d) < 2)
    return edges[keep], feats[keep], unpaired


def load_ogb_raw(directory) -> Dataset:
    """Read the headerless OGB graph-property CSV layout.

    Files are looked up in ``directory`` and ``directory/raw``; split files
    in ``directory``, ``directory/split`` and ``directory/split/*``.
    """
    root = Path(directory)
    if not root.is_dir():
        raise MissingFile(f"dataset directory {root} does not exist")
    edges = _read_int_csv(_find(root, "edge"), 2)
    n_nodes = _read_int_csv(_find(root, "num-node-list"), 1)[:, 0]
    n_edges = _read_int_csv(_find(root, "num-edge-list"), 1)[:, 0]
    node_feat = _read_int_csv(_find(root, "node-feat"))
    edge_feat = _read_int_csv(_find(root, "edge-feat"))
    labels = _read_int_csv(_find(root, "graph-label"), 1)[:, 0]

    if not (n_nodes.size == n_edges.size == labels.size):
        raise RowCountMismatch(
            f"per-graph files disagree: {n_nodes.size} node counts, "
            f"{n_edges.size} edge counts, {labels.size} labels")
    if n_nodes.sum() != node_feat.shape[0]:
        raise RowCountMismatch(f"sum of num-node-list = {n_nodes.sum()} but node-feat has {node_feat.shape[0]} rows")
    if n_edges.sum() != edges.shape[0]:
        raise RowCountMismatch(f"sum of num-edge-list = {n_edges.sum()} but edge has {edges.shape[0]} rows")
    if edge_feat.shape[0] != edges.shape[0]:
        raise RowCountMismatch(f"edge-feat has {edge_feat.shape[0]} rows, edge has {edges.shape[0]}")
    if edge_feat.shape[0] == 0:
        edge_feat = np.zeros((0, 0), dtype=np.int64)

    node_off = np.concatenate([[0], np.cumsum(n_nodes)])
    edge_off = np.concatenate([[0], np.cumsum(n_edges)])
    graphs, unpaired_total = [], 0
    for i in range(n_nodes.size):
        e = edges[edge_off[i]:edge_off[i + 1]]
        ef = edge_feat[edge_off[i]:edge_off[i + 1]]
        e, ef, unpaired = _collapse_directed(e, ef, i)
        unpaired_total += unpaired
        try:
            graphs.append(build_graph(int(n_nodes[i]), e,
                                      node_feat[node_off[i]:node_off[i + 1]], ef,
                                      int(labels[i])))
        except GraphError as exc:
            raise DataError(f"graph {i}: {exc}") from exc
    if unpaired_total:
        log.warning("%d directed edges had no reverse row; kept as undirected", unpaired_total)

    splits = {}
    split_dirs = [root, root / "split"]
    if (root / "split").is_dir():
        split_dirs += sorted(p for p in (root / "split").iterdir() if p.is_dir())
    for name in SPLITS:
        for d in split_dirs:
            try:
                splits[name] = _read_int_csv(_find(d, name, ("",)), 1)[:, 0]
                break
            except MissingFile:
                continue
        else:
            raise MissingFile(f"split file {name}.csv[.gz] not found under {root}")
    return Dataset(graphs, splits)


# ------------------------------------------------------------------ JSON


def _graph_to_json(g: Graph) -> dict:
    d = {
        "num_nodes": g.num_nodes,
        "edges": g.edges.tolist(),
        "node_feat": g.node_feat.tolist(),
        "edge_feat": g.edge_feat.tolist(),
    }
    if g.label is not None:
        d["label"] = g.label
    return d


def dataset_to_json(ds: Dataset) -> dict:
    return {
        "graphs": [_graph_to_json(g) for g in ds.graphs],
        "splits": {k: v.tolist() for k, v in ds.splits.items()},
    }


def save_json_graphs(ds: Dataset, path) -> None:
    Path(path).write_text(json.dumps(dataset_to_json(ds)))


def _int_matrix(value, path: str, rows: int) -> np.ndarray:
    if not isinstance(value, list):
        raise SchemaViolation(path, "expected a list of rows")
    for r, row in enumerate(value):
        if not isinstance(row, list) or not all(isinstance(c, int) and not isinstance(c, bool) for c in row):
            raise SchemaViolation(f"{path}[{r}]", "expected a list of integers")
    if len(value) != rows:
        raise SchemaViolation(path, f"expected {rows} rows, found {len(value)}")
    widths = {len(row) for row in value}
    if len(widths) > 1:
        raise SchemaViolation(path, "rows have differing lengths")
    return np.asarray(value, dtype=np.int64).reshape(rows, widths.pop() if widths else 0)


def dataset_from_json(doc) -> Dataset:
    if not isinstance(doc, dict):
        raise SchemaViolation("$", "top level must be an object")
    items = doc.get("graphs")
    if not isinstance(items, list) or not items:
        raise SchemaViolation("$.graphs", "must be a non-empty list")
    graphs = []
    for i, item in enumerate(items):
        path = f"$.graphs[{i}]"
        if not isinstance(item, dict):
            raise SchemaViolation(path, "graph must be an object")
        unknown = set(item) - {"num_nodes", "edges", "node_feat", "edge_feat", "label"}
        if unknown:
            raise SchemaViolation(path, f"unknown keys {sorted(unknown)}")
        n = item.get("num_nodes")
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise SchemaViolation(f"{path}.num_nodes", "must be a positive integer")
        edges = item.get("edges", [])
        if not isinstance(edges, list) or any(
                not isinstance(e, list) or len(e) != 2 or not all(isinstance(c, int) for c in e)
                for e in edges):
            raise SchemaViolation(f"{path}.edges", "must be a list of [u, v] integer pairs")
        nf = _int_matrix(item.get("node_feat", [[] for _ in range(n)]), f"{path}.node_feat", n)
        ef = _int_matrix(item.get("edge_feat", [[] for _ in edges]), f"{path}.edge_feat", len(edges))
        label = item.get("label")
        if label is not None and label not in (0, 1):
            raise SchemaViolation(f"{path}.label", "must be 0 or 1")
        try:
            graphs.append(build_graph(n, edges, nf, ef, label))
        except GraphError as exc:
            raise SchemaViolation(path, str(exc)) from exc
    splits = doc.get("splits")
    if splits is None:
        splits = {"train": list(range(len(graphs)))}
    if not isinstance(splits, dict) or set(splits) - set(SPLITS):
        raise SchemaViolation("$.splits", f"must be an object with keys among {SPLITS}")
    for name, idx in splits.items():
        if not isinstance(idx, list) or not all(isinstance(i, int) for i in idx):
            raise SchemaViolation(f"$.splits.{name}", "must be a list of integers")
    try:
        return Dataset(graphs, splits)
    except DataError as exc:
        raise SchemaViolation("$.splits", str(exc)) from exc


def load_json_graphs(path) -> Dataset:
    p = Path(path)
    if not p.exists():
        raise MissingFile(f"{p} does not exist")
    opener = gzip.open if p.suffix == ".gz" else open
    with opener(p, "rt") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaViolation("$", f"invalid JSON: {exc}") from exc
    return dataset_from_json(doc)


def load_dataset(path) -> Dataset:
    """JSON file or OGB raw directory, by what ``path`` points at."""
    p = Path(path)
    if p.is_dir():
        return load_ogb_raw(p)
    return load_json_graphs(p)


# ------------------------------------------------------------------ synthetic


def _has_triangle(adj: np.ndarray) -> bool:
    return bool(np.trace(adj @ adj @ adj) > 0)


def _random_graph(rng: np.random.Generator, n: int, triangle: bool) -> np.ndarray:
    # random spanning tree, then extra edges; negatives reject triangle-closing edges
    adj = np.zeros((n, n), dtype=np.int64)
    for v in range(1, n):
        u = int(rng.integers(v))
        adj[u, v] = adj[v, u] = 1
    candidates = [(u, v) for u in range(n) for v in range(u + 1, n) if not adj[u, v]]
    rng.shuffle(candidates)
    extra = int(rng.integers(1, max(2, n // 2) + 1))
    for u, v in candidates:
        if extra == 0:
            break
        if not triangle and np.any(adj[u] & adj[v]):
            continue
        adj[u, v] = adj[v, u] = 1
        extra -= 1
    if triangle and not _has_triangle(adj):
        a, b, c = rng.choice(n, size=3, replace=False)
        for u, v in ((a, b), (b, c), (a, c)):
            adj[u, v] = adj[v, u] = 1
    return adj


def make_synthetic(task: str = "TriangleDetection", n_graphs: int = 40, seed: int = 0) -> Dataset:
    """Balanced triangle detection: label 1 iff the graph contains a triangle.

    Graphs have 5 to 10 nodes, one constant node feature field and one
    constant edge feature field. Every graph goes to the train split.
    """
    if task.lower() not in ("triangledetection", "triangle"):
        raise ValueError(f"unknown synthetic task {task!r}")
    if n_graphs % 2:
        raise ValueError(f"n_graphs must be even, got {n_graphs}")
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(n_graphs):
        label = i % 2
        n = int(rng.integers(5, 11))
        adj = _random_graph(rng, n, bool(label))
        us, vs = np.nonzero(np.triu(adj))
        edges = np.stack([us, vs], axis=1)
        g = build_graph(n, edges, np.zeros((n, 1), dtype=np.int64),
                        np.zeros((len(edges), 1), dtype=np.int64), label)
        assert (np.trace(walk_counts(g, 3)) > 0) == bool(label)
        graphs.append(g)
    return Dataset(graphs, {"train": list(range(n_graphs))})


def fixture_graph() -> Graph:
    """Five-node, two-field molecule-like graph used by the gradient checks."""
    edges = [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4)]
    node_feat = [[0, 1], [1, 0], [2, 1], [1, 1], [0, 0]]
    edge_feat = [[0], [1], [0], [2], [1]]
    return build_graph(5, edges, node_feat, edge_feat, 1)


def labels_of(graphs: Sequence[Graph]) -> np.ndarray:
    return np.array([g.label for g in graphs], dtype=np.int64)


# Vocabulary sizes of the OGB molecule featuriser (ogb.utils.features).
OGB_ATOM_CARDINALITIES = (119, 5, 12, 12, 10, 6, 6, 2, 2)
OGB_BOND_CARDINALITIES = (5, 6, 2)
