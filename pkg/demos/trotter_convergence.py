"""Lie-Trotter splitting of a mutation drift and Wright-Fisher noise.

The drift flow and the diffusion are applied alternately n times.  For f(x) = x
each factor is exact, so every n gives the mean 0.5 + (x - 0.5) e^{-t};
for f(x) = x^2 the split error halves as n doubles.
"""

import math

import numpy as np

from semireg import GridSpec, builtin, trotter_compose

sys_ = builtin("mutation", {"kappa": 1.0, "mbar": 0.5}, 1)
grid = GridSpec.uniform(1, 401)
print("mean at x=0.2, exact:", 0.5 - 0.3 * math.exp(-1))
prev = None
for n in (1, 2, 4, 8, 16, 32):
    lin = trotter_compose(sys_, "x1", 1.0, n, grid)
    sq = trotter_compose(sys_, "x1^2", 1.0, n, grid)
    step = "" if prev is None else f"  change in x^2 result {np.max(np.abs(sq.values - prev)):.4f}"
    print(f"n={n:2d}  mean(0.2) {lin(0.2):.6f}{step}")
    prev = sq.values
