"""Wright-Fisher moments three ways: Monte Carlo, Crank-Nicolson and the closed form.

For a(x) = x(1 - x) the semigroup maps x^2 to x^2 e^{-t} + x (1 - e^{-t}).
"""

import math

import numpy as np

from semireg import NoiseStream, Propagator1D, builtin, mc_estimate, propagate_1d

t = 1.0
wf = builtin("wright-fisher")
prop = Propagator1D(wf.sqdiff[0], 400)
grid = propagate_1d(prop, lambda x: x * x, t)

print(f"{'x':>5} {'closed form':>12} {'grid':>12} {'Monte Carlo':>12} {'SE':>9}")
for x in (0.1, 0.3, 0.5, 0.7, 0.9):
    exact = x * x * math.exp(-t) + x * (1 - math.exp(-t))
    mc, se = mc_estimate(wf, "x1^2", [x], t, 1e-3, 50_000, NoiseStream(1))
    print(f"{x:5.2f} {exact:12.6f} {np.interp(x, prop.x, grid):12.6f} {mc:12.6f} {se:9.2e}")
