"""
Looking inside the MET operator
===============================

The propagation operator of a PAN layer is a normalized sum of adjacency
powers. This script builds it for two small graphs and shows how the path
weights and the normalization change what the diagonal says about nodes.
"""

# %%
# A triangle and a star
# ---------------------
import numpy as np

from pannet import PathWeights, boltzmann_weights, build_graph, met_matrix, walk_counts

np.set_printoptions(precision=4, suppress=True)

triangle = build_graph(3, [(0, 1), (1, 2), (0, 2)])
star = build_graph(4, [(0, 1), (0, 2), (0, 3)])

# %%
# Walk counts are the raw material: entry (i, j) of A^l counts walks of
# length l. In the star the center has three closed 2-walks, a leaf one.
for l in range(4):
    print(f"A^{l} of the star:\n{walk_counts(star, l)}")

# %%
# Equal weights, row-stochastic
# -----------------------------
# With w = [1, 1, 1] and rows summing to one, the center keeps the largest
# share of its own mass, so it ranks first by diag(M).
flat = PathWeights(np.ones(3))
met = met_matrix(star, flat, "row")
print(met.m)
print("diag:", met.diag, "row sums:", met.m.sum(axis=1))

# %%
# Boltzmann weights, symmetric
# ----------------------------
# The default weights decay as exp(-l / T). At T = 1 length-2 walks are
# heavily discounted and the ranking flips: a leaf's partition is small, so
# its one self-loop term dominates. Raising T moves back toward flat weights.
for temperature in (1.0, 3.0, 100.0):
    m = met_matrix(star, boltzmann_weights(2, temperature), "sym")
    print(f"T={temperature:>5}: diag {m.diag}")

# %%
# The two normalizations are similar matrices (Z^-1 S versus
# Z^-1/2 S Z^-1/2), so their spectra coincide.
w = boltzmann_weights(3)
row = met_matrix(triangle, w, "row").m
sym = met_matrix(triangle, w, "sym").m
print(np.sort(np.linalg.eigvals(row).real), np.linalg.eigvalsh(sym))
