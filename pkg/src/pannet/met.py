"""Maximal entropy transition (MET) operators built from adjacency powers.

The unnormalised operator is ``S = sum_l w[l] * A**l`` for ``l = 0..L``.
Each node's partition value is its row sum ``Z_i = sum_j S[i, j]``; the two
supported normalisations are ``Z^-1 S`` (row stochastic) and
``Z^-1/2 S Z^-1/2`` (symmetric).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveTemperature, ZeroPartition
from .graph import Graph, adjacency_powers


class Normalization(str, enum.Enum):
    ROW_STOCHASTIC = "row"
    SYMMETRIC = "sym"

    @classmethod
    def parse(cls, value) -> "Normalization":
        if isinstance(value, cls):
            return value
        aliases = {
            "row": cls.ROW_STOCHASTIC,
            "rowstochastic": cls.ROW_STOCHASTIC,
            "row_stochastic": cls.ROW_STOCHASTIC,
            "sym": cls.SYMMETRIC,
            "symmetric": cls.SYMMETRIC,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown normalization {value!r}") from None


@dataclass(frozen=True)
class PathWeights:
    """Per-length weights ``w[0..L]``, all strictly positive."""

    w: np.ndarray
    trainable: bool = False
    temperature: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64).reshape(-1)
        if w.size == 0:
            raise ValueError("path weights need at least the length-0 entry")
        if not np.all(w > 0) or not np.all(np.isfinite(w)):
            raise ValueError(f"path weights must be finite and positive, got {w}")
        object.__setattr__(self, "w", w)

    @property
    def cutoff(self) -> int:
        return self.w.size - 1


def boltzmann_weights(cutoff: int, temperature: float = 1.0) -> PathWeights:
    """Fixed weights ``exp(-l / T)`` with energy equal to the path length."""
    if not temperature > 0:
        raise NonPositiveTemperature(f"temperature must be > 0, got {temperature}")
    if cutoff < 0:
        raise ValueError(f"cutoff must be non-negative, got {cutoff}")
    lengths = np.arange(cutoff + 1, dtype=np.float64)
    return PathWeights(np.exp(-lengths / temperature), trainable=False,
                       temperature=float(temperature))


@dataclass(frozen=True)
class MetMatrix:
    m: np.ndarray
    diag: np.ndarray
    normalization: Normalization
    z: np.ndarray


def partition(g: Graph, w: np.ndarray) -> np.ndarray:
    """Row sums of ``sum_l w[l] A**l``."""
    powers = adjacency_powers(g, len(w) - 1)
    z = sum(wl * p.sum(axis=1) for wl, p in zip(w, powers))
    if np.any(z <= 0):
        raise ZeroPartition(f"non-positive partition value at nodes {np.flatnonzero(z <= 0)}")
    return z


def normalized_powers(g: Graph, w: np.ndarray, normalization, z: np.ndarray | None = None):
    """Stack ``C[l]`` with ``M = sum_l w[l] C[l]`` and the partition used.

    ``z`` defaults to the partition computed from ``w``; passing a stored
    value holds the normalisation fixed while ``w`` varies.
    """
    normalization = Normalization.parse(normalization)
    w = np.asarray(w, dtype=np.float64)
    powers = adjacency_powers(g, len(w) - 1)
    if z is None:
        z = partition(g, w)
    stack = np.stack(powers)
    if normalization is Normalization.ROW_STOCHASTIC:
        stack = stack / z[None, :, None]
    else:
        r = 1.0 / np.sqrt(z)
        stack = stack * r[None, :, None] * r[None, None, :]
    return stack, z


def met_matrix(g: Graph, weights: PathWeights,
               normalization=Normalization.SYMMETRIC) -> MetMatrix:
    normalization = Normalization.parse(normalization)
    stack, z = normalized_powers(g, weights.w, normalization)
    m = np.tensordot(weights.w, stack, axes=1)
    return MetMatrix(m=m, diag=np.diag(m).copy(), normalization=normalization, z=z)


def met_diag(met: MetMatrix) -> np.ndarray:
    """Diagonal of the MET operator, a closed-walk centrality score per node."""
    return met.diag.copy()
