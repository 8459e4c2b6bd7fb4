"""
Choosing nodes with PANPool
===========================

Pooling scores each node by a learned projection of its features plus a
multiple of the MET diagonal, keeps the top fraction and induces the
subgraph on what survives.
"""

# %%
import numpy as np

from pannet import boltzmann_weights, build_graph, met_matrix
from pannet.autodiff import Tensor
from pannet.graph import adjacency
from pannet.layers import PanPool, pan_pool_score, pan_pool_select

rng = np.random.default_rng(0)

# a 6-cycle with one chord, so a couple of nodes sit on a triangle
g = build_graph(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 2)])
x = Tensor(rng.normal(size=(6, 4)))
diag = met_matrix(g, boltzmann_weights(3)).diag

# %%
# With beta = 1 the score mixes both signals. Setting the projection to zero
# isolates the structural part, which favours the triangle nodes 0, 1, 2.
pool = PanPool(4, ratio=0.5, rng=rng)
pool.params["p"].data[:] = 0.0
score = pan_pool_score(pool, x, diag)
sub, xp, kept = pan_pool_select(g, x, score, ratio=0.5)
print("diag(M):", np.round(diag, 4))
print("kept:", kept)
print("induced adjacency:\n", adjacency(sub))

# %%
# K is max(1, ceil(ratio * n)), and tied scores go to the lower index.
for ratio in (0.01, 0.34, 0.5, 1.0):
    _, _, tied = pan_pool_select(g, x, Tensor(np.ones(6)), ratio)
    print(f"ratio {ratio}: keep {tied}")

# %%
# Kept features are gated by sigmoid(score), which is how the projection
# and beta receive gradient through a discrete selection.
print(np.round(xp.data / x.data[kept], 4))
