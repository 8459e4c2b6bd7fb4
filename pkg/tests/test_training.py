import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_auc
from pannet import autodiff as ad
from pannet.autodiff import Tape, Tensor
from pannet.data import Dataset, make_synthetic
from pannet.errors import BadLabel, ConfigError, DegenerateLabels
from pannet.graph import build_graph, permute
from pannet.metrics import roc_auc
from pannet.model import Model, ModelConfig, count_parameters, forward
from pannet.training import Adam, train, train_step, weighted_bce


# ----------------------------------------------------------------- loss


def test_bce_analytic_values():
    assert float(weighted_bce([0.0], [0], 3.0).data) == pytest.approx(math.log(2), abs=1e-12)
    assert float(weighted_bce([0.0], [1], 5.0).data) == pytest.approx(5 * math.log(2), abs=1e-12)
    assert float(weighted_bce([50.0], [1], 5.0).data) < 1e-20
    assert float(weighted_bce([800.0, -800.0], [1, 0], 10.0).data) == 0.0


def test_bce_alpha_one_is_plain_bce():
    rng = np.random.default_rng(0)
    z = rng.normal(scale=3, size=50)
    y = rng.integers(0, 2, size=50)
    p = 1 / (1 + np.exp(-z))
    plain = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    assert float(weighted_bce(z, y, 1.0).data) == pytest.approx(plain, abs=1e-12)


def test_bce_rejects_bad_labels():
    with pytest.raises(BadLabel):
        weighted_bce([0.0, 1.0], [0, 2], 1.0)


def test_bce_gradient():
    z = Tensor([0.3, -1.2, 2.0], requires_grad=True)
    y = np.array([1, 0, 1])
    with Tape() as tape:
        loss = weighted_bce(z, y, 4.0)
    s = 1 / (1 + np.exp(-z.data))
    # d/dz of alpha*y*softplus(-z) + (1-y)*softplus(z), averaged
    expected = (-4.0 * y * (1 - s) + (1 - y) * s) / 3
    np.testing.assert_allclose(tape.backward(loss)[z], expected, atol=1e-15)


# ----------------------------------------------------------------- adam


def test_adam_zero_gradient():
    p = Tensor([1.0, -2.0], requires_grad=True)
    opt = Adam({"p": p})
    opt.step({p: np.zeros(2)})
    assert p.data.tolist() == [1.0, -2.0]
    assert opt.t == 1


def test_adam_first_step_is_lr():
    p = Tensor(0.5, requires_grad=True)
    opt = Adam({"p": p}, lr=1e-3)
    opt.step({p: np.array(1.0)})
    # bias-corrected moments are exactly g and g^2 on the first step
    assert 0.5 - float(p.data) == pytest.approx(1e-3 / (1 + 1e-8), rel=1e-12)


def test_adam_deterministic():
    def run():
        p = Tensor(np.linspace(-1, 1, 5), requires_grad=True)
        opt = Adam({"p": p}, lr=0.05)
        for _ in range(20):
            opt.step({p: 2 * p.data - np.sin(p.data)})
        return p.data.copy()

    assert np.array_equal(run(), run())


# ----------------------------------------------------------------- roc auc


def test_auc_examples():
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert roc_auc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75


def test_auc_degenerate():
    with pytest.raises(DegenerateLabels):
        roc_auc([0.1, 0.2], [1, 1])


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 1)), min_size=2, max_size=200))
def test_auc_matches_brute_force(pairs):
    scores = [s / 4 for s, _ in pairs]
    labels = [y for _, y in pairs]
    if len(set(labels)) < 2:
        return
    auc = roc_auc(scores, labels)
    assert auc == brute_auc(scores, labels)
    assert roc_auc(np.exp(np.array(scores)) * 3 - 1, labels) == auc


# ----------------------------------------------------------------- model


def small_config(**kw):
    base = dict(variant="HPAN", emb_dim=8, conv_cutoffs=(3, 2, 2), seed=0)
    base.update(kw)
    return ModelConfig(**base)


def random_graph(rng, n):
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.4]
    return build_graph(n, edges, rng.integers(0, 4, size=(n, 2)),
                       rng.integers(0, 3, size=(len(edges), 1)), int(rng.integers(0, 2)))


def test_config_validation():
    assert ModelConfig(variant="pan").alpha == 5.0
    assert ModelConfig().alpha == 10.0
    with pytest.raises(ConfigError):
        ModelConfig(pool_ratio=0.0)
    with pytest.raises(ConfigError):
        ModelConfig(alpha=0.5)
    with pytest.raises(ConfigError):
        ModelConfig(conv_cutoffs=())
    with pytest.raises(ConfigError, match="bogus"):
        ModelConfig.from_dict({"bogus": 1})


def test_zero_parameters_give_zero_logit():
    rng = np.random.default_rng(0)
    model = Model(small_config(), [4, 4], [3])
    for t in model.parameters().values():
        t.data[...] = 0
    for n in (1, 4, 7):
        assert forward(model, random_graph(rng, n)) == 0.0


@pytest.mark.parametrize("variant", ["PAN", "HPAN"])
def test_single_node_graph(variant):
    model = Model(small_config(variant=variant), [4, 4], [3])
    g = build_graph(1, [], [[1, 2]], None, 1)
    if variant == "HPAN":
        g = build_graph(1, [], [[1, 2]], np.zeros((0, 1), dtype=int), 1)
    assert np.isfinite(forward(model, g))


@pytest.mark.parametrize("variant", ["PAN", "HPAN"])
def test_permutation_invariance(variant):
    rng = np.random.default_rng(11)
    model = Model(small_config(variant=variant), [4, 4], [3])
    model.forward([random_graph(rng, 6) for _ in range(3)], training=True)
    for _ in range(10):
        g = random_graph(rng, int(rng.integers(2, 10)))
        h = permute(g, rng.permutation(g.num_nodes))
        assert forward(model, h) == pytest.approx(forward(model, g), abs=1e-9)


def test_parameter_count_head():
    model = Model(ModelConfig(emb_dim=64), [5], [2])
    report = count_parameters(model)
    assert report.breakdown["head"] == 64 * 32 + 32 + 32 * 1 + 1 == 2113
    assert report.total == sum(report.breakdown.values())
    assert report.breakdown["atom_encoder"] == 5 * 64


def test_batch_norm_statistics_pool_over_batch():
    rng = np.random.default_rng(2)
    model = Model(small_config(), [4, 4], [3])
    graphs = [random_graph(rng, n) for n in (3, 5)]
    model.forward(graphs, training=True)
    rm = model.buffers()["lump.lin1.weight".split(".")[0] + ".norm.running_mean"]
    assert rm.shape == (16,) and np.abs(rm).sum() > 0


# ----------------------------------------------------------------- train


def test_one_epoch_step_count():
    ds = make_synthetic(n_graphs=4, seed=1)
    cfg = small_config(epochs=1, batch_size=2, conv_cutoffs=(2,))
    result = train(cfg, ds)
    assert [r.steps for r in result.log] == [2]


def test_train_deterministic():
    ds = make_synthetic(n_graphs=8, seed=3)
    ds = Dataset(ds.graphs, {"train": list(range(6)), "valid": [6, 7]})
    cfg = small_config(epochs=3, batch_size=3, conv_cutoffs=(2, 2), learning_rate=0.01)
    a, b = train(cfg, ds), train(cfg, ds)
    strip = lambda log: [(r.epoch, r.mean_loss, r.val_auc, r.test_auc, r.steps) for r in log]
    assert strip(a.log) == strip(b.log)
    for k, v in a.model.state_dict().items():
        assert np.array_equal(v, b.model.state_dict()[k])


def test_overfit_single_graph_descends():
    rng = np.random.default_rng(4)
    g = random_graph(rng, 7)
    g = build_graph(g.num_nodes, g.edges, g.node_feat, g.edge_feat, 1)
    model = Model(small_config(variant="PAN", learning_rate=0.01), [4, 4], [3])
    opt = Adam(model.parameters(), lr=0.01)
    losses = [train_step(model, opt, [g], 5.0) for _ in range(11)]
    assert losses[10] < losses[0]
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_best_validation_epoch_is_restored():
    ds = make_synthetic(n_graphs=12, seed=5)
    ds = Dataset(ds.graphs, {"train": list(range(8)), "valid": list(range(8, 12))})
    cfg = small_config(epochs=4, batch_size=4, conv_cutoffs=(2,), learning_rate=0.05)
    result = train(cfg, ds)
    best = max((r.val_auc for r in result.log if r.val_auc is not None))
    assert result.best.val_auc == best
    from pannet.training import evaluate_auc
    assert evaluate_auc(result.model, ds.subset("valid")) == best
