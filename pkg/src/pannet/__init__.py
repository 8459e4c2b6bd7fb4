"""Path-integral graph networks (PAN/HPAN) on numpy with a built-in gradient tape."""

from .autodiff import Tape, Tensor, grad_check
from .data import Dataset, load_json_graphs, load_ogb_raw, make_synthetic, save_json_graphs
from .graph import Graph, adjacency, build_graph, walk_counts
from .met import MetMatrix, Normalization, PathWeights, boltzmann_weights, met_diag, met_matrix
from .metrics import roc_auc
from .model import Model, ModelConfig, count_parameters
from .training import Adam, train, weighted_bce

__version__ = "0.1.0"

__all__ = [
    "Adam", "Dataset", "Graph", "MetMatrix", "Model", "ModelConfig", "Normalization",
    "PathWeights", "Tape", "Tensor", "adjacency", "boltzmann_weights", "build_graph",
    "count_parameters", "grad_check", "load_json_graphs", "load_ogb_raw", "make_synthetic",
    "met_diag", "met_matrix", "roc_auc", "save_json_graphs", "train", "walk_counts",
    "weighted_bce",
]
