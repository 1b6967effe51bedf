"""The diffusion-only semigroup on ``[0, 1]^d`` as a product of independent coordinates.

On a tensor grid the semigroup is the 1D propagator of coordinate ``k``
applied along axis ``k`` for every ``k``; the coordinate operators act on
different axes and therefore commute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import noise as _noise
from .checks import CheckReport
from .coeffs import CoefficientSystem
from .constants import compute_constants
from .diffusion1d import DEFAULT_DT, Propagator1D
from .grid import GridDimensionError, GridFunction, GridSpec, MAX_GRID_DIM, apply_along, sample_function
from .noise import NoiseStream


class T2Operator:
    """Cached per-axis propagators for one system and grid."""

    def __init__(self, sys: CoefficientSystem, spec: GridSpec, dt: float = DEFAULT_DT):
        if sys.dim != spec.dim:
            raise ValueError("grid dimension does not match the system")
        if sys.dim > MAX_GRID_DIM:
            raise GridDimensionError(f"grid mode is limited to d <= {MAX_GRID_DIM}")
        self.sys = sys
        self.spec = spec
        shared: dict = {}
        self.props = []
        for a, n in zip(sys.sqdiff, spec.points):
            key = (a, n)
            if key not in shared:
                shared[key] = Propagator1D(a, n - 1, dt)
            self.props.append(shared[key])

    def axis_matrix(self, k: int, t: float) -> np.ndarray:
        return self.props[k].matrix(t)

    def apply(self, values: np.ndarray, t: float, axis_order=None) -> np.ndarray:
        order = range(self.spec.dim) if axis_order is None else axis_order
        out = values
        for k in order:
            out = apply_along(out, self.axis_matrix(k, t), k)
        return out


def apply_T2_grid(sys: CoefficientSystem, f, t: float, grid: GridSpec | None = None,
                  axis_order=None, dt: float = DEFAULT_DT, operator: T2Operator | None = None) -> GridFunction:
    """Discrete diffusion semigroup at time ``t`` applied to grid values of ``f``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if grid is None:
        if not isinstance(f, GridFunction):
            raise ValueError("a grid is required for test-function input")
        grid = f.spec
    if sys.dim > MAX_GRID_DIM:
        raise GridDimensionError(f"grid mode is limited to d <= {MAX_GRID_DIM}")
    interp = f.interpolation if isinstance(f, GridFunction) else "linear"
    g = sample_function(grid, f, interp)
    op = operator or T2Operator(sys, grid, dt)
    return g.with_values(op.apply(g.values, t, axis_order))


@dataclass
class PathEnsembleND:
    """Euler trajectories ``paths[p, k, i]`` from one start point."""

    x0: np.ndarray
    t: float
    dt: float
    paths: np.ndarray
    noise: NoiseStream

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def terminal(self) -> np.ndarray:
        return self.paths[:, -1, :]

    def mean(self, f=None):
        """``(mean, se)`` of ``f(X_t)`` (coordinates when ``f`` is omitted)."""
        v = self.terminal if f is None else np.asarray(f(self.terminal), dtype=float)
        n = v.shape[0]
        return v.mean(axis=0), v.std(axis=0, ddof=1) / math.sqrt(n)

    def covariance(self):
        """Sample covariance of the terminal coordinates and elementwise standard errors."""
        y = self.terminal
        n = y.shape[0]
        c = y - y.mean(axis=0)
        prod = c[:, :, None] * c[:, None, :]
        return prod.sum(axis=0) / (n - 1), prod.std(axis=0, ddof=1) / math.sqrt(n)


def simulate_nd_diffusion(sys: CoefficientSystem, x0, t: float, dt: float, n_paths: int,
                          noise: NoiseStream | None = None, workers: int = 1) -> PathEnsembleND:
    """Independent coordinate diffusions; the drift of ``sys`` is ignored.

    Coordinate ``i`` draws its increments from its own counter-based stream,
    so the coordinates are independent.
    """
    noise = noise or NoiseStream()
    diff = sys.diffusion_only()
    paths, dt_eff = _noise.trajectories(diff, np.asarray(x0, dtype=float)[None, :], t, dt,
                                        n_paths, noise, workers)
    return PathEnsembleND(np.asarray(x0, dtype=float), float(t), dt_eff, paths, noise)


def grid_cm_entries(f: GridFunction, m: int, alphas=None) -> dict:
    return f.cm_entries(m, alphas)


def check_mu_bound(sys: CoefficientSystem, fs, t: float, m: int, grid: GridSpec,
                   tol: float = 1e-3, dt: float = DEFAULT_DT, constants=None) -> CheckReport:
    """Discrete ``||T^2_t f||_{C^m} <= exp(mu_m t) ||f||_{C^m}`` for each ``f`` in ``fs``."""
    if m not in (0, 1, 2, 3):
        raise ValueError("m must be in 0..3")
    rep = constants or compute_constants(sys)
    factor = math.exp(rep.mu[m] * t)
    op = T2Operator(sys, grid, dt)
    report = CheckReport(f"diffusion bound(m={m}, t={t:g}, d={sys.dim})", tol)
    for j, f in enumerate(fs):
        g = sample_function(grid, f)
        out = g.with_values(op.apply(g.values, t))
        label = f.describe() if hasattr(f, "describe") else f"f[{j}]"
        report.add(label, out.cm_norm(m), factor * g.cm_norm(m))
    return report


__all__ = [
    "PathEnsembleND", "T2Operator", "apply_T2_grid", "check_mu_bound", "grid_cm_entries",
    "simulate_nd_diffusion",
]
