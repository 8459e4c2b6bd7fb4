"""Network layers: encoders, PANConv, PANPool, PANLump, readout and head.

Every layer keeps its trainable tensors in ``self.params`` (an ordered
``name -> Tensor`` dict) and computes with the primitives from
:mod:`pannet.autodiff`, so a forward pass inside a :class:`~pannet.autodiff.Tape`
can be differentiated end to end.
"""

from __future__ import annotations

import contextlib
import math
import threading
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, Tensor
from .errors import CodeOutOfRange, EmptyGraph, ShapeMismatch
from .graph import Graph, induced_subgraph
from .met import Normalization, PathWeights, normalized_powers, partition


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Layer:
    params: dict

    def parameters(self) -> dict:
        return dict(self.params)

    def buffers(self) -> dict:
        return {}

    def set_buffers(self, values: dict) -> None:
        if values:
            raise KeyError(f"{type(self).__name__} has no buffers: {sorted(values)}")


# ------------------------------------------------------------------ encoders


class CategoricalEncoder(Layer):
    """Sum of one embedding table per categorical field."""

    def __init__(self, cardinalities, dim: int, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.cardinalities = [int(c) for c in cardinalities]
        self.dim = int(dim)
        if not self.cardinalities:
            raise ValueError("an encoder needs at least one field")
        self.params = {
            f"table{f}": Tensor(glorot(rng, c, dim), requires_grad=True)
            for f, c in enumerate(self.cardinalities)
        }

    @property
    def tables(self) -> list:
        return list(self.params.values())

    def __call__(self, codes) -> Tensor:
        return encode(self, codes)


def encode(enc: CategoricalEncoder, codes) -> Tensor:
    codes = np.asarray(codes, dtype=np.int64)
    if codes.size == 0 and codes.ndim == 2:
        # edgeless graphs may carry a (0, 0) feature block
        codes = codes.reshape(codes.shape[0], len(enc.cardinalities))
    if codes.ndim != 2 or codes.shape[1] != len(enc.cardinalities):
        raise ShapeMismatch(
            f"expected codes with {len(enc.cardinalities)} fields, got shape {codes.shape}")
    for f, c in enumerate(enc.cardinalities):
        col = codes[:, f]
        bad = col[(col < 0) | (col >= c)]
        if bad.size:
            raise CodeOutOfRange(f, int(bad[0]), c)
    return ad.embedding_lookup_sum(enc.tables, codes)


class Linear(Layer):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        self.params = {"weight": Tensor(glorot(rng, d_in, d_out), requires_grad=True)}
        if bias:
            self.params["bias"] = Tensor(np.zeros(d_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        out = ad.matmul(x, self.params["weight"])
        if "bias" in self.params:
            out = ad.add(out, self.params["bias"])
        return out


class BatchNorm(Layer):
    def __init__(self, width: int, momentum: float = 0.1, eps: float = 1e-5):
        self.params = {
            "gamma": Tensor(np.ones(width), requires_grad=True),
            "beta": Tensor(np.zeros(width), requires_grad=True),
        }
        self.state = BatchNormState.fresh(width, momentum, eps)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return ad.batch_norm(x, self.params["gamma"], self.params["beta"], self.state, training)

    def buffers(self) -> dict:
        return {"running_mean": self.state.running_mean.copy(),
                "running_var": self.state.running_var.copy()}

    def set_buffers(self, values: dict) -> None:
        self.state.running_mean = np.array(values["running_mean"], dtype=np.float64)
        self.state.running_var = np.array(values["running_var"], dtype=np.float64)


class MlpStack(Layer):
    """``Linear -> BatchNorm -> ReLU -> Linear`` over sizes ``(d, hidden, d_out)``."""

    def __init__(self, sizes, rng: np.random.Generator):
        d, hidden, d_out = sizes
        self.lin1 = Linear(d, hidden, rng)
        self.norm = BatchNorm(hidden)
        self.lin2 = Linear(hidden, d_out, rng)
        self.params = {}
        for prefix, layer in (("lin1", self.lin1), ("norm", self.norm), ("lin2", self.lin2)):
            for k, v in layer.params.items():
                self.params[f"{prefix}.{k}"] = v

    def __call__(self, x: Tensor, training: bool = False) -> Tensor:
        return self.lin2(ad.relu(self.norm(self.lin1(x), training)))

    def buffers(self) -> dict:
        return {f"norm.{k}": v for k, v in self.norm.buffers().items()}

    def set_buffers(self, values: dict) -> None:
        self.norm.set_buffers({k.split(".", 1)[1]: v for k, v in values.items()})


# ---------------------------------------------------------------- PANConv

_frozen = threading.local()


@contextlib.contextmanager
def freeze_partition():
    """Reuse the partition values of the first forward pass for every later
    pass inside the block, per (layer, graph structure).

    Finite-difference checks need this: the tape never differentiates through
    the normalisation, so the perturbed passes must not renormalise either.
    """
    prev = getattr(_frozen, "cache", None)
    _frozen.cache = {}
    try:
        yield _frozen.cache
    finally:
        _frozen.cache = prev


class PanConv(Layer):
    """Graph convolution ``X' = M X W`` with ``M`` the MET operator.

    With ``trainable_weights`` the per-length weights are ``exp(theta)``,
    ``theta`` initialised to ``-l / temperature``; otherwise they are the
    fixed Boltzmann factors.
    """

    def __init__(
        self,
        d_in: int,
        d_out: int,
        cutoff: int,
        rng: np.random.Generator,
        normalization=Normalization.SYMMETRIC,
        trainable_weights: bool = True,
        temperature: float = 1.0,
    ):
        if cutoff < 0:
            raise ValueError(f"cutoff must be non-negative, got {cutoff}")
        self.cutoff = int(cutoff)
        self.normalization = Normalization.parse(normalization)
        self.trainable_weights = trainable_weights
        self.temperature = float(temperature)
        theta = -np.arange(cutoff + 1, dtype=np.float64) / temperature
        self.params = {
            "theta": Tensor(theta, requires_grad=trainable_weights),
            "weight": Tensor(glorot(rng, d_in, d_out), requires_grad=True),
        }
        if not trainable_weights:
            # fixed weights stay out of the trainable parameter set
            self._theta = self.params.pop("theta")
        else:
            self._theta = self.params["theta"]

    @property
    def weight(self) -> Tensor:
        return self.params["weight"]

    def path_weights(self) -> PathWeights:
        return PathWeights(np.exp(self._theta.data), trainable=self.trainable_weights,
                           temperature=self.temperature)

    def operator(self, g: Graph) -> tuple[Tensor, Tensor]:
        """MET operator and its diagonal for ``g`` as tape tensors."""
        n = g.num_nodes
        if n == 0:
            raise EmptyGraph("PANConv on an empty graph")
        w = ad.exp(self._theta)
        cache = getattr(_frozen, "cache", None)
        z = None
        if cache is not None:
            key = (id(self), g.key)
            z = cache.get(key)
            if z is None:
                z = cache[key] = partition(g, w.data)
        stack, _ = normalized_powers(g, w.data, self.normalization, z)
        k = self.cutoff + 1
        m = ad.reshape(ad.matmul(w, stack.reshape(k, n * n)), (n, n))
        diag = ad.matmul(w, np.diagonal(stack, axis1=1, axis2=2).copy())
        return m, diag

    def propagate(self, m: Tensor, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.shape[0] != m.shape[0]:
            raise ShapeMismatch(f"PANConv: {m.shape[0]} nodes but features {x.shape}")
        if x.shape[1] != self.weight.shape[0]:
            raise ShapeMismatch(f"PANConv expects width {self.weight.shape[0]}, got {x.shape[1]}")
        return ad.matmul(ad.matmul(m, x), self.weight)

    def __call__(self, g: Graph, x: Tensor) -> Tensor:
        m, _ = self.operator(g)
        return self.propagate(m, x)


def pan_conv(layer: PanConv, g: Graph, x: Tensor) -> Tensor:
    return layer(g, x)


# ---------------------------------------------------------------- PANPool


class PanPool(Layer):
    """Score-based top-K node selection.

    ``score = X p + beta * diag(M)``; kept rows are gated by ``sigmoid(score)``
    so that ``p`` and ``beta`` receive gradients through the selection.
    """

    def __init__(self, dim: int, ratio: float, rng: np.random.Generator, beta: float = 1.0):
        if not 0 < ratio <= 1:
            raise ValueError(f"pool ratio must lie in (0, 1], got {ratio}")
        self.ratio = float(ratio)
        bound = 1.0 / math.sqrt(dim)
        self.params = {
            "p": Tensor(rng.uniform(-bound, bound, size=dim), requires_grad=True),
            "beta": Tensor(np.array(beta), requires_grad=True),
        }

    def score(self, x: Tensor, met_diag) -> Tensor:
        return pan_pool_score(self, x, met_diag)

    def __call__(self, g: Graph, x: Tensor, met_diag):
        return pan_pool_select(g, x, self.score(x, met_diag), self.ratio)


def pan_pool_score(layer: PanPool, x: Tensor, met_diag) -> Tensor:
    p, beta = layer.params["p"], layer.params["beta"]
    x = ad.as_tensor(x)
    met_diag = ad.as_tensor(met_diag)
    if x.data.ndim != 2 or x.shape[1] != p.shape[0]:
        raise ShapeMismatch(f"PANPool: features {x.shape} vs projection {p.shape}")
    if met_diag.shape != (x.shape[0],):
        raise ShapeMismatch(f"PANPool: diag {met_diag.shape} vs {x.shape[0]} nodes")
    return ad.add(ad.matmul(x, p), ad.scale(met_diag, beta))


def top_k_indices(score: np.ndarray, ratio: float) -> np.ndarray:
    """Indices of the ``max(1, ceil(ratio * n))`` highest scores, ties to the
    lower index, returned in ascending index order."""
    n = score.shape[0]
    if n == 0:
        raise EmptyGraph("cannot pool an empty graph")
    if not 0 < ratio <= 1:
        raise ValueError(f"pool ratio must lie in (0, 1], got {ratio}")
    k = max(1, math.ceil(ratio * n))
    order = np.lexsort((np.arange(n), -score))
    return np.sort(order[:k])


def pan_pool_select(g: Graph, x: Tensor, score: Tensor, ratio: float):
    """Return ``(subgraph, gated_features, kept)``."""
    kept = top_k_indices(score.data, ratio)
    gate = ad.sigmoid(ad.row_gather(score, kept))
    xp = ad.row_scale(ad.row_gather(x, kept), gate)
    return induced_subgraph(g, kept), xp, kept


# ---------------------------------------------------------------- PANLump


def incidence(g: Graph) -> np.ndarray:
    """``[n, m]`` matrix with a 1 wherever node ``u`` touches edge ``k``.

    A self-loop touches its node once.
    """
    inc = np.zeros((g.num_nodes, g.num_edges))
    if g.num_edges:
        cols = np.arange(g.num_edges)
        inc[g.edges[:, 0], cols] = 1.0
        inc[g.edges[:, 1], cols] = 1.0
    return inc


class PanLump(Layer):
    """Fold edge embeddings into node embeddings before convolution:
    ``MLP((1 + eps) x_u + sum of embeddings of edges at u)``."""

    def __init__(self, dim: int, rng: np.random.Generator, eps: float = 0.0,
                 mlp: Callable | None = None):
        self.dim = int(dim)
        self.eps = float(eps)
        self.mlp = mlp if mlp is not None else MlpStack((dim, 2 * dim, dim), rng)
        self.params = dict(getattr(self.mlp, "params", {}))

    def aggregate(self, g: Graph, x_node: Tensor, x_edge: Tensor) -> Tensor:
        if x_node.shape != (g.num_nodes, self.dim):
            raise ShapeMismatch(f"PANLump: node features {x_node.shape}, expected {(g.num_nodes, self.dim)}")
        if x_edge.shape != (g.num_edges, self.dim):
            raise ShapeMismatch(f"PANLump: edge features {x_edge.shape}, expected {(g.num_edges, self.dim)}")
        out = ad.scale(x_node, 1.0 + self.eps)
        if g.num_edges:
            out = ad.add(out, ad.matmul(incidence(g), x_edge))
        return out

    def __call__(self, g: Graph, x_node: Tensor, x_edge: Tensor, training: bool = False) -> Tensor:
        return self.mlp(self.aggregate(g, x_node, x_edge), training)

    def buffers(self) -> dict:
        return self.mlp.buffers() if hasattr(self.mlp, "buffers") else {}

    def set_buffers(self, values: dict) -> None:
        if hasattr(self.mlp, "set_buffers"):
            self.mlp.set_buffers(values)


def pan_lump(layer: PanLump, g: Graph, x_node: Tensor, x_edge: Tensor,
             training: bool = False) -> Tensor:
    return layer(g, x_node, x_edge, training)


# ---------------------------------------------------------------- readout


def mean_readout(x: Tensor) -> Tensor:
    x = ad.as_tensor(x)
    if x.data.ndim != 2 or x.shape[0] == 0:
        raise EmptyGraph("mean readout over zero nodes")
    return ad.column_mean(x)


class MlpHead(Layer):
    """``logit = relu(x W1 + b1) W2 + b2`` with sizes ``(d, hidden, 1)``."""

    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        self.dim = dim
        self.params = {
            "w1": Tensor(glorot(rng, dim, hidden), requires_grad=True),
            "b1": Tensor(np.zeros(hidden), requires_grad=True),
            "w2": Tensor(glorot(rng, hidden, 1), requires_grad=True),
            "b2": Tensor(np.zeros(1), requires_grad=True),
        }

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape != (self.dim,):
            raise ShapeMismatch(f"head expects a length-{self.dim} vector, got {x.shape}")
        p = self.params
        hidden = ad.relu(ad.add(ad.matmul(x, p["w1"]), p["b1"]))
        return ad.add(ad.matmul(hidden, p["w2"]), p["b2"])


def mlp_head(head: MlpHead, x: Tensor) -> Tensor:
    return head(x)
