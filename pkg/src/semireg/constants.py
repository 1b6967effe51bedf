"""Regularity constants of the drift and squared-diffusion coefficients.

``lambda_m`` is the largest column sum ``sum_i ||d^alpha b_i||_inf`` over
multiindices ``0 < |alpha| <= m``; ``mu_m`` and the per-coordinate ``nu_m``
come from sup norms of ``a_i''`` and ``a_i'''``.  Sup norms are grid maxima,
which can only under-estimate the true supremum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .coeffs import CoefficientSystem, PolyExpr, TestFunction, multiindices, partial

UNIVARIATE_POINTS = 1001
MULTIVARIATE_POINTS = 101
MAX_GRID_POINTS = 20_000_000
QMC_SAMPLES = 100_000
MAX_TENSOR_DIM = 6
_CHUNK = 1_000_000


class GridSizeError(ValueError):
    """The requested tensor grid is too large; reduce the resolution."""


def _affine_sup(p: PolyExpr) -> float:
    c0 = p.constant_term()
    hi = c0 + sum(max(c, 0.0) for m, c in p.sparse_terms if m)
    lo = c0 + sum(min(c, 0.0) for m, c in p.sparse_terms if m)
    return max(abs(hi), abs(lo))


def default_points(n_vars: int) -> int:
    if n_vars <= 1:
        return UNIVARIATE_POINTS
    return max(2, min(MULTIVARIATE_POINTS, int(MAX_GRID_POINTS ** (1.0 / n_vars))))


def _tensor_max(p: PolyExpr, vars_, n: int) -> float:
    k = len(vars_)
    g = np.linspace(0.0, 1.0, n)
    total = n ** k
    best = 0.0
    # enumerate the flattened grid in chunks so memory stays bounded
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(total, start + _CHUNK))
        pts = np.zeros((idx.size, p.arity))
        rem = idx
        for axis in reversed(range(k)):
            pts[:, vars_[axis]] = g[rem % n]
            rem = rem // n
        best = max(best, float(np.max(np.abs(p(pts)))))
    return best


def _sampled_max(p: PolyExpr, vars_) -> float:
    from scipy.stats import qmc

    k = len(vars_)
    sob = qmc.Halton(k, scramble=True, seed=7).random(QMC_SAMPLES)
    if k <= 10:
        corners = np.array(list(product((0.0, 1.0), repeat=k)))
    else:
        rng = np.random.default_rng(11)
        corners = rng.integers(0, 2, size=(1 << 10, k)).astype(float)
    best = 0.0
    for block in (sob, corners):
        pts = np.zeros((block.shape[0], p.arity))
        pts[:, list(vars_)] = block
        best = max(best, float(np.max(np.abs(p(pts)))))
    return best


def sup_norm(p: PolyExpr, grid_points_per_axis: int | None = None) -> float:
    """Maximum of ``|p|`` over a tensor grid on the cube, boundary included.

    Only the variables that occur in ``p`` are gridded.  Affine polynomials are
    maximized exactly at a vertex.  With more than six active variables the
    grid is replaced by 10^5 scrambled Halton points plus up to 1024 corners.
    Refining from ``n`` to ``2n - 1`` points nests the grids, so the result is
    nondecreasing under that refinement.
    """
    if grid_points_per_axis is not None and grid_points_per_axis < 2:
        raise ValueError("grid_points_per_axis must be >= 2")
    if p.is_zero():
        return 0.0
    if p.is_affine():
        return _affine_sup(p)
    vars_ = p.variables
    k = len(vars_)
    if k > MAX_TENSOR_DIM:
        return _sampled_max(p, vars_)
    n = grid_points_per_axis or default_points(k)
    if k * math.log(n) > math.log(MAX_GRID_POINTS):
        raise GridSizeError(
            f"{n}^{k} grid points exceed the cap of {MAX_GRID_POINTS}; reduce the resolution")
    return _tensor_max(p, vars_, n)


# -- constants report -----------------------------------------------------------
@dataclass
class ConstantsReport:
    lam: list
    mu: list
    nu: list
    nu_tilde3: list
    grid_resolution: int | None = None
    lambda_argmax: list = field(default_factory=list)
    dim: int = 1

    @property
    def lambda_(self):
        return self.lam

    def rows(self):
        """``(name, index, value)`` rows in a fixed order."""
        out = [("lambda", m, v) for m, v in enumerate(self.lam)]
        out += [("mu", m, v) for m, v in enumerate(self.mu)]
        for i, nus in enumerate(self.nu, start=1):
            out += [(f"nu{m}", i, v) for m, v in enumerate(nus)]
            out.append(("nu_tilde3", i, self.nu_tilde3[i - 1]))
        return out


def _drift_derivative_sups(sys: CoefficientSystem, max_order: int, grid):
    """``{alpha: sum_i ||d^alpha b_i||}`` over every alpha that can be nonzero.

    Derivatives are accumulated term by term, so the cost is linear in the
    number of terms rather than in the number of multiindices.
    """
    totals: dict = {}
    for b in sys.drift:
        derivs: dict = {}
        for mono, coef in b.sparse_terms:
            if not mono:
                continue
            # each sub-multiindex alpha <= mono with 1 <= |alpha| <= max_order
            ranges = [range(e + 1) for _, e in mono]
            for ks in product(*ranges):
                order = sum(ks)
                if not 1 <= order <= max_order:
                    continue
                c = coef
                rest = []
                alpha = []
                for (j, e), k in zip(mono, ks):
                    if k:
                        alpha.append((j, k))
                        c *= math.perm(e, k)
                    if e - k:
                        rest.append((j, e - k))
                derivs.setdefault(tuple(alpha), []).append((tuple(rest), c))
        for alpha, items in derivs.items():
            if all(not m for m, _ in items):
                s = abs(math.fsum(c for _, c in items))
            else:
                s = sup_norm(PolyExpr.from_sparse(items, b.arity), grid)
            totals[alpha] = totals.get(alpha, 0.0) + s
    return totals


def _alpha_dense(alpha_sparse, d):
    out = [0] * d
    for j, k in alpha_sparse:
        out[j] = k
    return tuple(out)


def compute_constants(sys: CoefficientSystem, grid_points_per_axis: int | None = None,
                      univariate_points: int = UNIVARIATE_POINTS) -> ConstantsReport:
    """``lambda_0..3``, ``mu_0..3`` and per-coordinate ``nu_0..3``, ``nu~_3``."""
    totals = _drift_derivative_sups(sys, 3, grid_points_per_axis)
    lam = [0.0]
    argmax = [None]
    for m in (1, 2, 3):
        best, arg = 0.0, None
        for alpha, s in totals.items():
            if sum(k for _, k in alpha) <= m and s > best:
                best, arg = s, alpha
        # lambda_m is a max over a growing set, hence nondecreasing in m
        lam.append(max(best, lam[-1]))
        argmax.append(_alpha_dense(arg, sys.dim) if arg is not None else argmax[-1])

    nu, nu_t = [], []
    for a in sys.sqdiff:
        a2 = partial(partial(a, 1), 1)
        a3 = partial(a2, 1)
        s2 = sup_norm(a2, univariate_points)
        s3 = sup_norm(a3, univariate_points)
        nu3 = s3 + 1.5 * s2
        nu.append([0.0, 0.0, 0.5 * s2, nu3])
        nu_t.append(nu3 - 0.5 * s3)
    mu = [max(col) for col in zip(*nu)]
    return ConstantsReport(lam=lam, mu=mu, nu=nu, nu_tilde3=nu_t,
                           grid_resolution=grid_points_per_axis or MULTIVARIATE_POINTS,
                           lambda_argmax=argmax, dim=sys.dim)


BOUND_KINDS = ("full", "drift-only", "diffusion-only", "split-product")
_DRIFT_MULT = {0: 0, 1: 1, 2: 4, 3: 13}


def bound_factor(report: ConstantsReport, m: int, t: float, kind: str = "full") -> float:
    """Operator-norm bound on ``C^m`` for the semigroup (or one of its pieces) at time ``t``.

    ``full``: ``exp((m^2 lambda_m + mu_m) t)``; ``drift-only``: ``exp(c_m lambda_m t)``
    with ``c = 0, 1, 4, 13``; ``diffusion-only``: ``exp(mu_m t)``;
    ``split-product``: ``exp(((m^2 + 4[m=3]) lambda_m + mu_m) t)``.
    """
    if m not in (0, 1, 2, 3):
        raise ValueError(f"m must be in 0..3, got {m}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    lam, mu = report.lam[m], report.mu[m]
    if kind == "full":
        rate = m * m * lam + mu
    elif kind == "drift-only":
        rate = _DRIFT_MULT[m] * lam
    elif kind == "diffusion-only":
        rate = mu
    elif kind == "split-product":
        rate = (m * m + (4 if m == 3 else 0)) * lam + mu
    else:
        raise ValueError(f"unknown bound kind {kind!r}; expected one of {BOUND_KINDS}")
    return math.exp(rate * t)


def cm_norm(f: TestFunction, m: int, grid_points_per_axis: int | None = None,
            alphas=None) -> float:
    """``max_{|alpha| <= m} ||d^alpha f||_inf`` from exact partials.

    Closed-form sups are used when the test function provides them, grid
    maxima (see :func:`sup_norm`) otherwise.
    """
    from .coeffs import PolyFunction

    d = f.arity
    alphas = alphas if alphas is not None else multiindices(d, m)
    best = 0.0
    for alpha in alphas:
        g = f.derivative(alpha)
        s = g.sup_exact()
        if s is None:
            if isinstance(g, PolyFunction):
                s = sup_norm(g.poly, grid_points_per_axis)
            else:  # pragma: no cover - every shipped family has a closed form or is polynomial
                raise TypeError(f"no sup-norm route for {g!r}")
        best = max(best, s)
    return best


__all__ = [
    "ConstantsReport", "GridSizeError", "BOUND_KINDS", "bound_factor", "cm_norm",
    "compute_constants", "sup_norm",
]
