"""Regularity constants of mean-field migration do not grow with dimension.

Each coordinate relaxes toward the average of the others at rate 1 and carries
Wright-Fisher noise.  The drift constant is 2(1 - 1/d), so the C^m bound
factor stays below its d -> infinity limit.  Pass --certify to also run Monte
Carlo certificates (a few minutes).
"""

import sys

from semireg.cli import sweep_dimension

certify_m = 1 if "--certify" in sys.argv else None
rows, reports = sweep_dimension("migration", {"kappa": 1.0}, [1, 2, 4, 8, 16, 32, 64],
                                ms=(0, 1, 2), t=0.5, certify_m=certify_m)
print(f"{'d':>3} {'m':>2} {'lambda_m':>9} {'mu_m':>5} {'factor':>9} {'estimate':>9}")
for d, m, lam, mu, factor, est, ok in rows:
    shown = "" if est is None else f"{est:9.4f} {'pass' if ok else 'FAIL'}"
    print(f"{d:3d} {m:2d} {lam:9.5f} {mu:5.2f} {factor:9.4f} {shown}")
