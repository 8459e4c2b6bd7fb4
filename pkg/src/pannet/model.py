"""PAN and HPAN graph classifiers assembled from :mod:`pannet.layers`."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError
from .graph import Graph
from .layers import (
    CategoricalEncoder,
    MlpHead,
    PanConv,
    PanLump,
    PanPool,
    mean_readout,
    pan_pool_select,
)
from .met import Normalization

VARIANTS = ("PAN", "HPAN")
DEFAULT_ALPHA = {"PAN": 5.0, "HPAN": 10.0}


@dataclass
class ModelConfig:
    variant: str = "HPAN"
    emb_dim: int = 64
    conv_cutoffs: tuple = (3, 2, 2)
    pool_ratio: float = 0.8
    alpha: float | None = None
    normalization: str = "sym"
    trainable_path_weights: bool = True
    temperature: float = 1.0
    lump_eps: float = 0.0
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    eval_train: bool = False

    def __post_init__(self):
        self.variant = str(self.variant).upper()
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        self.conv_cutoffs = tuple(int(c) for c in self.conv_cutoffs)
        if not self.conv_cutoffs or min(self.conv_cutoffs) < 0:
            raise ConfigError(f"conv_cutoffs must be a non-empty list of lengths >= 0, got {self.conv_cutoffs}")
        if not 0 < self.pool_ratio <= 1:
            raise ConfigError(f"pool_ratio must lie in (0, 1], got {self.pool_ratio}")
        if self.alpha is None:
            self.alpha = DEFAULT_ALPHA[self.variant]
        if self.alpha < 1:
            raise ConfigError(f"alpha must be >= 1, got {self.alpha}")
        if self.emb_dim < 2:
            raise ConfigError(f"emb_dim must be at least 2, got {self.emb_dim}")
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.epochs < 0 or self.batch_size < 1 or not self.learning_rate > 0:
            raise ConfigError("epochs >= 0, batch_size >= 1 and learning_rate > 0 required")
        try:
            self.normalization = Normalization.parse(self.normalization).value
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, values: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**values)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["conv_cutoffs"] = list(self.conv_cutoffs)
        return d


class Model:
    """Encoder, optional PANLump, stacked PANConv/PANPool, mean readout, MLP head."""

    def __init__(self, config: ModelConfig, node_cardinalities: Sequence[int],
                 edge_cardinalities: Sequence[int] = ()):
        self.config = config
        self.node_cardinalities = [int(c) for c in node_cardinalities]
        self.edge_cardinalities = [int(c) for c in edge_cardinalities]
        rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0])
        d = config.emb_dim
        self.atom_encoder = CategoricalEncoder(self.node_cardinalities, d, rng)
        self.edge_encoder = None
        self.lump = None
        if config.variant == "HPAN":
            if not self.edge_cardinalities:
                raise ConfigError("HPAN needs at least one edge feature field")
            self.edge_encoder = CategoricalEncoder(self.edge_cardinalities, d, rng)
            self.lump = PanLump(d, rng, eps=config.lump_eps)
        self.convs = [
            PanConv(d, d, L, rng, normalization=config.normalization,
                    trainable_weights=config.trainable_path_weights,
                    temperature=config.temperature)
            for L in config.conv_cutoffs
        ]
        self.pools = [PanPool(d, config.pool_ratio, rng) for _ in config.conv_cutoffs]
        self.head = MlpHead(d, d // 2, rng)

    def components(self) -> list:
        out = [("atom_encoder", self.atom_encoder)]
        if self.edge_encoder is not None:
            out += [("edge_encoder", self.edge_encoder), ("lump", self.lump)]
        for i, (c, p) in enumerate(zip(self.convs, self.pools)):
            out += [(f"conv{i}", c), (f"pool{i}", p)]
        out.append(("head", self.head))
        return out

    def parameters(self) -> dict:
        return {f"{prefix}.{k}": v
                for prefix, layer in self.components()
                for k, v in layer.parameters().items()}

    def buffers(self) -> dict:
        return {f"{prefix}.{k}": v
                for prefix, layer in self.components()
                for k, v in layer.buffers().items()}

    def set_buffers(self, values: dict) -> None:
        for prefix, layer in self.components():
            mine = {k[len(prefix) + 1:]: v for k, v in values.items()
                    if k.startswith(prefix + ".")}
            if mine:
                layer.set_buffers(mine)

    def state_dict(self) -> dict:
        state = {k: t.data.copy() for k, t in self.parameters().items()}
        state.update(self.buffers())
        return state

    def load_state_dict(self, state: dict) -> None:
        params = self.parameters()
        buffers = self.buffers()
        missing = (set(params) | set(buffers)) - set(state)
        extra = set(state) - set(params) - set(buffers)
        if missing or extra:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, t in params.items():
            v = np.asarray(state[k], dtype=np.float64)
            if v.shape != t.shape:
                raise ValueError(f"{k}: shape {v.shape} does not match {t.shape}")
            t.data[...] = v
        self.set_buffers({k: state[k] for k in buffers})

    # ------------------------------------------------------------ forward

    def node_embeddings(self, graphs: Sequence[Graph], training: bool = False) -> list:
        xs = [self.atom_encoder(g.node_feat) for g in graphs]
        if self.lump is None:
            return xs
        pre = [self.lump.aggregate(g, x, self.edge_encoder(g.edge_feat))
               for g, x in zip(graphs, xs)]
        # batch-norm statistics pool over every node row of the batch
        h = self.lump.mlp(ad.concat(pre), training)
        out, start = [], 0
        for g in graphs:
            out.append(ad.row_gather(h, np.arange(start, start + g.num_nodes)))
            start += g.num_nodes
        return out

    def graph_logit(self, g: Graph, x: Tensor) -> Tensor:
        for conv, pool in zip(self.convs, self.pools):
            m, diag = conv.operator(g)
            x = ad.relu(conv.propagate(m, x))
            g, x, _ = pan_pool_select(g, x, pool.score(x, diag), pool.ratio)
        return self.head(mean_readout(x))

    def forward(self, graphs: Sequence[Graph], training: bool = False) -> Tensor:
        """Logits, one per graph, as a length-``len(graphs)`` tensor."""
        xs = self.node_embeddings(graphs, training)
        return ad.concat([self.graph_logit(g, x) for g, x in zip(graphs, xs)])

    __call__ = forward


def forward(model: Model, g: Graph) -> float:
    """Logit of a single graph (evaluation mode)."""
    return float(model.forward([g]).data[0])


@dataclass
class ParameterReport:
    total: int
    breakdown: dict = field(default_factory=dict)

    def lines(self) -> list[str]:
        rows = [f"{name:<16s} {count:>8,d}" for name, count in self.breakdown.items()]
        rows.append(f"{'total':<16s} {self.total:>8,d}")
        return rows


def count_parameters(model: Model) -> ParameterReport:
    breakdown = {}
    for prefix, layer in model.components():
        breakdown[prefix] = int(sum(t.size for t in layer.parameters().values()))
    return ParameterReport(total=sum(breakdown.values()), breakdown=breakdown)
