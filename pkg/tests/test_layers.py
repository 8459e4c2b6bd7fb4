import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import random_edges
from pannet import autodiff as ad
from pannet.autodiff import Tensor
from pannet.errors import CodeOutOfRange, EmptyGraph, ShapeMismatch
from pannet.graph import adjacency, build_graph, permute
from pannet.layers import (
    CategoricalEncoder,
    MlpHead,
    PanConv,
    PanLump,
    PanPool,
    encode,
    mean_readout,
    pan_conv,
    pan_lump,
    pan_pool_score,
    pan_pool_select,
    top_k_indices,
)


def make_encoder(tables):
    enc = CategoricalEncoder([len(t) for t in tables], len(tables[0][0]))
    for k, t in zip(enc.params, tables):
        enc.params[k].data[...] = t
    return enc


def identity_mlp(x, training=False):
    return x


def fixed_conv(cutoff, d, norm="sym", w=None):
    conv = PanConv(d, d, cutoff, np.random.default_rng(0), normalization=norm)
    conv.params["weight"].data[...] = np.eye(d)
    if w is not None:
        conv.params["theta"].data[...] = np.log(w)
    return conv


# ----------------------------------------------------------------- encoders


def test_encode_examples():
    assert encode(make_encoder([[[1, 0], [0, 1]]]), [[0]]).data.tolist() == [[1, 0]]
    zeros = make_encoder([[[0, 0]] * 3, [[0, 0]] * 2])
    assert not encode(zeros, [[2, 1], [0, 0]]).data.any()
    assert encode(make_encoder([[[1], [2]], [[10], [20]]]), [[1, 0]]).data.tolist() == [[12]]


def test_encode_out_of_range():
    enc = CategoricalEncoder([3, 2], 4)
    with pytest.raises(CodeOutOfRange) as exc:
        encode(enc, [[0, 0], [1, 2]])
    assert (exc.value.field, exc.value.value) == (1, 2)


# ----------------------------------------------------------------- PANConv


def test_conv_cutoff_zero_identity(k3):
    x = Tensor(np.random.default_rng(1).normal(size=(3, 4)))
    out = pan_conv(fixed_conv(0, 4), k3, x)
    np.testing.assert_allclose(out.data, x.data, atol=1e-12)


def test_conv_p2_example(p2):
    out = pan_conv(fixed_conv(1, 1, w=[1.0, 1.0]), p2, Tensor([[2.0], [0.0]]))
    np.testing.assert_allclose(out.data, [[1.0], [1.0]], atol=1e-15)


@pytest.mark.parametrize("norm", ["row", "sym"])
def test_conv_k3_constant_rows(k3, norm):
    x = Tensor(np.tile([0.3, -1.2], (3, 1)))
    out = pan_conv(fixed_conv(2, 2, norm), k3, x).data
    np.testing.assert_allclose(out, np.tile(out[0], (3, 1)), atol=1e-14)
    if norm == "row":
        np.testing.assert_allclose(out, x.data, atol=1e-14)


def test_conv_default_weights_are_boltzmann():
    conv = PanConv(2, 2, 3, np.random.default_rng(0), temperature=2.0)
    np.testing.assert_allclose(conv.path_weights().w, np.exp(-np.arange(4) / 2.0))
    fixed = PanConv(2, 2, 3, np.random.default_rng(0), trainable_weights=False)
    assert "theta" not in fixed.params


def test_conv_shape_mismatch(k3):
    with pytest.raises(ShapeMismatch):
        pan_conv(fixed_conv(1, 2), k3, Tensor(np.ones((2, 2))))


# ----------------------------------------------------------------- PANPool


def make_pool(p, beta):
    pool = PanPool(len(p), 0.8, np.random.default_rng(0))
    pool.params["p"].data[...] = p
    pool.params["beta"].data[...] = beta
    return pool


def test_pool_score_examples():
    diag = np.array([0.3, 0.7])
    assert pan_pool_score(make_pool([0, 0], 1.0), Tensor(np.ones((2, 2))), diag).data.tolist() == [0.3, 0.7]
    assert pan_pool_score(make_pool([1, 1], 0.0), Tensor([[1, 1], [2, 2]]), diag).data.tolist() == [2, 4]
    assert pan_pool_score(make_pool([1, -1], 2.0), Tensor(np.zeros((2, 2))), [0.5, 0.5]).data.tolist() == [1, 1]


def test_pool_select_ratio_one_is_identity(k3):
    x = Tensor(np.arange(6.0).reshape(3, 2))
    score = Tensor([0.1, 0.9, 0.5])
    sub, xp, kept = pan_pool_select(k3, x, score, 1.0)
    assert kept.tolist() == [0, 1, 2]
    assert np.array_equal(sub.edges, k3.edges)
    gate = 1 / (1 + np.exp(-score.data))
    np.testing.assert_allclose(xp.data, x.data * gate[:, None])


def test_pool_select_path():
    g = build_graph(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    sub, xp, kept = pan_pool_select(g, Tensor(np.ones((5, 1))), Tensor([5.0, 4, 3, 2, 1]), 0.8)
    assert kept.tolist() == [0, 1, 2, 3]
    assert sub.edges.tolist() == [[0, 1], [1, 2], [2, 3]]


def test_pool_tie_break_lower_index():
    assert top_k_indices(np.zeros(3), 0.5).tolist() == [0, 1]
    assert top_k_indices(np.array([1.0, 2.0, 2.0, 2.0]), 0.5).tolist() == [1, 2]


def test_pool_empty_graph():
    with pytest.raises(EmptyGraph):
        top_k_indices(np.zeros(0), 0.5)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 12), st.floats(0.01, 1.0), st.integers(0, 2**31))
def test_pool_invariants(n, ratio, seed):
    rng = np.random.default_rng(seed)
    g = build_graph(n, random_edges(rng, n))
    score = rng.normal(size=n)
    sub, _, kept = pan_pool_select(g, Tensor(np.ones((n, 2))), Tensor(score), ratio)
    assert kept.size == max(1, math.ceil(ratio * n))
    dropped = np.setdiff1d(np.arange(n), kept)
    if dropped.size:
        assert score[kept].min() >= score[dropped].max()
    np.testing.assert_array_equal(adjacency(sub), adjacency(g)[np.ix_(kept, kept)])


def test_pool_gradient_reaches_projection_and_beta():
    g = build_graph(4, [(0, 1), (1, 2), (2, 3)])
    pool = make_pool([0.3, -0.2], 0.7)
    x = Tensor(np.random.default_rng(0).normal(size=(4, 2)))
    with ad.Tape() as tape:
        _, xp, _ = pool(g, x, np.array([0.2, 0.4, 0.4, 0.2]))
        loss = ad.total(xp)
    grads = tape.backward(loss, wrt=pool.params.values())
    assert all(np.abs(v).sum() > 0 for v in grads.values())


# ----------------------------------------------------------------- PANLump


def test_lump_identity_mlp_zero_edges(k3):
    layer = PanLump(2, np.random.default_rng(0), mlp=identity_mlp)
    x = Tensor(np.arange(6.0).reshape(3, 2))
    out = pan_lump(layer, k3, x, Tensor(np.zeros((3, 2))))
    np.testing.assert_array_equal(out.data, x.data)


def test_lump_single_edge(p2):
    layer = PanLump(3, np.random.default_rng(0), mlp=identity_mlp)
    e = np.array([[1.0, -2.0, 0.5]])
    out = pan_lump(layer, p2, Tensor(np.zeros((2, 3))), Tensor(e))
    np.testing.assert_array_equal(out.data, np.vstack([e, e]))


def test_lump_isolated_node_and_eps():
    g = build_graph(3, [(0, 1)])
    layer = PanLump(2, np.random.default_rng(0), eps=0.5, mlp=identity_mlp)
    x = np.array([[1.0, 1.0], [2.0, 2.0], [4.0, -4.0]])
    out = pan_lump(layer, g, Tensor(x), Tensor([[1.0, 0.0]])).data
    assert np.all(np.isfinite(out))
    np.testing.assert_array_equal(out[2], 1.5 * x[2])
    np.testing.assert_array_equal(out[0], 1.5 * x[0] + [1.0, 0.0])


def test_lump_default_mlp_shapes(k3):
    layer = PanLump(4, np.random.default_rng(0))
    shapes = {k: v.shape for k, v in layer.params.items()}
    assert shapes["lin1.weight"] == (4, 8) and shapes["lin2.weight"] == (8, 4)
    out = layer(k3, Tensor(np.ones((3, 4))), Tensor(np.ones((3, 4))), training=True)
    assert out.shape == (3, 4)


# ----------------------------------------------------------------- readout


def test_mean_readout():
    assert mean_readout(Tensor([[1.0, 2.0]])).data.tolist() == [1.0, 2.0]
    assert mean_readout(Tensor([[0.0], [2.0]])).data.tolist() == [1.0]
    x = np.random.default_rng(0).normal(size=(5, 3))
    np.testing.assert_allclose(mean_readout(Tensor(x[::-1])).data, mean_readout(Tensor(x)).data)
    with pytest.raises(EmptyGraph):
        mean_readout(Tensor(np.zeros((0, 3))))


def test_head_examples():
    head = MlpHead(2, 1, np.random.default_rng(0))
    for t in head.params.values():
        t.data[...] = 0
    assert head(Tensor([3.0, -1.0])).data.tolist() == [0.0]
    head.params["w1"].data[...] = [[1.0], [1.0]]
    head.params["w2"].data[...] = [[2.0]]
    assert head(Tensor([1.0, 2.0])).data.tolist() == [6.0]
    assert head(Tensor([-1.0, -2.0])).data.tolist() == [0.0]
    with pytest.raises(ShapeMismatch):
        head(Tensor([1.0, 2.0, 3.0]))


# ----------------------------------------------------------------- equivariance


@pytest.mark.parametrize("seed", range(8))
def test_conv_and_lump_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    edges = random_edges(rng, n, 0.5)
    g = build_graph(n, edges)
    perm = rng.permutation(n)
    h = permute(g, perm)
    x = rng.normal(size=(n, 3))
    xp = np.empty_like(x)
    xp[perm] = x
    conv = PanConv(3, 3, 3, np.random.default_rng(seed))
    a, b = conv(g, Tensor(x)).data, conv(h, Tensor(xp)).data
    np.testing.assert_allclose(b[perm], a, atol=1e-9)

    lump = PanLump(3, np.random.default_rng(seed))
    e = rng.normal(size=(len(edges), 3))
    # permute() keeps edge order, so edge embeddings carry over unchanged
    a = lump(g, Tensor(x), Tensor(e)).data
    b = lump(h, Tensor(xp), Tensor(e)).data
    np.testing.assert_allclose(b[perm], a, atol=1e-9)


def test_model_handles_edgeless_single_node_graph():
    from pannet.model import Model, ModelConfig
    model = Model(ModelConfig(emb_dim=8), [2], [2])
    g = build_graph(1, [], [[1]], None, 1)
    out = model.forward([g, g]).data
    assert out.shape == (2,) and np.all(np.isfinite(out))
