"""Finite-difference verification of the full model's gradients."""

from __future__ import annotations

import numpy as np

from .autodiff import GradCheckReport, grad_check
from .data import fixture_graph
from .layers import freeze_partition
from .model import Model, ModelConfig
from .training import weighted_bce

GRADCHECK_DEFAULTS = {"emb_dim": 8, "seed": 3}


def _grouped(report: GradCheckReport) -> dict:
    groups: dict = {}
    for name, err in report.errors.items():
        group = name.split(".", 1)[0]
        groups[group] = max(groups.get(group, 0.0), err)
    return groups


def check_model(config: ModelConfig, h: float = 1e-5, tol: float = 1e-4):
    """Gradient check of the weighted BCE loss on the five-node fixture.

    Batch-norm runs in evaluation mode with running statistics taken from
    one training-mode pass, and partition values are frozen, matching what
    the tape differentiates. Returns ``(report, worst error per group)``.
    """
    g = fixture_graph()
    node_cards = [int(c) + 1 for c in g.node_feat.max(axis=0)]
    edge_cards = [int(c) + 1 for c in g.edge_feat.max(axis=0)]
    model = Model(config, node_cards, edge_cards)
    # populate running statistics away from the identity defaults
    model.forward([g, g], training=True)
    params = model.parameters()

    def loss():
        return weighted_bce(model.forward([g], training=False), [g.label], config.alpha)

    with freeze_partition():
        report = grad_check(loss, params, h=h, tol=tol)
    return report, _grouped(report)


def default_config(variant: str = "HPAN", **overrides) -> ModelConfig:
    values = dict(GRADCHECK_DEFAULTS, variant=variant)
    values.update(overrides)
    return ModelConfig.from_dict(values)


def fd_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x`` (array in, float out)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g
