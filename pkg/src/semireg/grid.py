"""Uniform tensor grids on the cube, grid functions, and discrete derivatives.

Derivatives up to order three are second-order accurate: central stencils in
the interior and one-sided stencils of the same order at the boundary nodes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np
from scipy.interpolate import NdBSpline, RegularGridInterpolator, make_interp_spline

from .coeffs import PolyExpr, TestFunction, as_test_function, multiindices

MAX_GRID_DIM = 4
INTERPOLATION = ("linear", "cubic")


class GridDimensionError(ValueError):
    """Grid mode supports at most four dimensions."""


@dataclass(frozen=True)
class GridSpec:
    """``points[k]`` equispaced nodes on ``[0, 1]`` along axis ``k``, endpoints included."""

    points: tuple

    def __post_init__(self):
        pts = tuple(int(n) for n in self.points)
        object.__setattr__(self, "points", pts)
        if not pts or any(n < 2 for n in pts):
            raise ValueError("every axis needs at least two nodes")
        if len(pts) > MAX_GRID_DIM:
            raise GridDimensionError(
                f"grid mode is limited to d <= {MAX_GRID_DIM}; use Monte Carlo for d = {len(pts)}")

    @classmethod
    def uniform(cls, dim: int, n: int) -> "GridSpec":
        return cls((n,) * dim)

    @property
    def dim(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple:
        return self.points

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    def axis_nodes(self, k: int) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.points[k])

    def nodes(self) -> tuple:
        return tuple(self.axis_nodes(k) for k in range(self.dim))

    def mesh(self) -> np.ndarray:
        """All nodes as ``(size, d)`` in C order (last axis fastest)."""
        grids = np.meshgrid(*self.nodes(), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)


def _forward_stencil(order: int):
    # second-order one-sided stencils, numerator over (2h)^order-type scaling
    return {
        1: (np.array([-3.0, 4.0, -1.0]), 2.0),
        2: (np.array([2.0, -5.0, 4.0, -1.0]), 1.0),
        3: (np.array([-5.0, 18.0, -24.0, 14.0, -3.0]), 2.0),
    }[order]


@lru_cache(maxsize=64)
def _derivative_matrix_cached(n: int, order: int) -> np.ndarray:
    if order == 0:
        return np.eye(n)
    if n < 5:
        raise ValueError("discrete derivatives need at least 5 nodes per axis")
    h = 1.0 / (n - 1)
    D = np.zeros((n, n))
    if order == 1:
        central, reach = np.array([-1.0, 0.0, 1.0]) / 2.0, 1
    elif order == 2:
        central, reach = np.array([1.0, -2.0, 1.0]), 1
    elif order == 3:
        central, reach = np.array([-1.0, 2.0, 0.0, -2.0, 1.0]) / 2.0, 2
    else:
        raise ValueError("derivative order must be 0..3")
    for j in range(reach, n - reach):
        D[j, j - reach:j + reach + 1] = central
    fw, den = _forward_stencil(order)
    sign = (-1.0) ** order
    for j in range(reach):
        D[j, j:j + fw.size] = fw / den
        # mirrored stencil at the right end; odd orders flip sign
        D[n - 1 - j, n - 1 - j - fw.size + 1:n - j] = sign * fw[::-1] / den
    D /= h ** order
    D.setflags(write=False)
    return D


def derivative_matrix(n: int, order: int) -> np.ndarray:
    """``(n, n)`` matrix of the discrete ``order``-th derivative on ``n`` nodes."""
    return _derivative_matrix_cached(int(n), int(order))


def apply_along(values: np.ndarray, mat: np.ndarray, axis: int) -> np.ndarray:
    """``mat`` applied to the 1D fibres of ``values`` along ``axis``."""
    out = np.tensordot(mat, values, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def discrete_partial(values: np.ndarray, alpha) -> np.ndarray:
    out = values
    for axis, k in enumerate(alpha):
        if k:
            out = apply_along(out, derivative_matrix(values.shape[axis], k), axis)
    return out


def _cubic_spline(nodes, values):
    c = values
    knots = []
    for axis, g in enumerate(nodes):
        s = make_interp_spline(g, c, k=3, axis=axis)
        knots.append(s.t)
        # BSpline stores the interpolation axis first
        c = np.moveaxis(s.c, 0, axis)
    return NdBSpline(tuple(knots), c, 3)


class GridFunction:
    """Values on a :class:`GridSpec` with multilinear (default) or tensor-cubic interpolation."""

    def __init__(self, spec: GridSpec, values, interpolation: str = "linear"):
        values = np.asarray(values, dtype=float)
        if values.size != spec.size:
            raise ValueError(f"expected {spec.size} values, got {values.size}")
        values = values.reshape(spec.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite")
        if interpolation not in INTERPOLATION:
            raise ValueError(f"interpolation must be one of {INTERPOLATION}")
        self.spec = spec
        self.values = values
        self.interpolation = interpolation
        self._interp = None

    @classmethod
    def sample(cls, spec: GridSpec, f, interpolation: str = "linear") -> "GridFunction":
        """Sample a callable on ``(..., d)`` points at every node."""
        return cls(spec, np.asarray(f(spec.mesh()), dtype=float), interpolation)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.spec, values, self.interpolation)

    @property
    def dim(self) -> int:
        return self.spec.dim

    def _interpolator(self):
        if self._interp is None:
            nodes = self.spec.nodes()
            if self.interpolation == "cubic" and min(self.spec.points) >= 4:
                self._interp = _cubic_spline(nodes, self.values)
            else:
                self._interp = RegularGridInterpolator(nodes, self.values, method="linear")
        return self._interp

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        lead = x.shape[:-1]
        pts = np.clip(x.reshape(-1, self.dim), 0.0, 1.0)
        out = np.asarray(self._interpolator()(pts)).reshape(lead)
        return out if out.ndim else float(out)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def partial(self, alpha) -> "GridFunction":
        return self.with_values(discrete_partial(self.values, alpha))

    def cm_entries(self, m: int, alphas=None) -> dict:
        """``{alpha: max |D^alpha values|}`` over ``|alpha| <= m``."""
        alphas = alphas if alphas is not None else multiindices(self.dim, m)
        return {a: float(np.max(np.abs(discrete_partial(self.values, a)))) for a in alphas}

    def cm_norm(self, m: int, alphas=None) -> float:
        return max(self.cm_entries(m, alphas).values())

    def to_csv(self, path) -> None:
        """Flattened C-order index and value, one row per node."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "value"])
            for i, v in enumerate(self.values.ravel()):
                w.writerow([i, repr(float(v))])

    def __repr__(self):
        return f"GridFunction(points={self.spec.points}, interpolation={self.interpolation!r})"


def sample_function(spec: GridSpec, f, interpolation: str = "linear") -> GridFunction:
    """Grid samples of a :class:`TestFunction` (or polynomial string), a
    :class:`GridFunction` or a callable."""
    if isinstance(f, (str, PolyExpr)):
        f = as_test_function(f, spec.dim)
    if isinstance(f, GridFunction):
        if f.spec == spec:
            return GridFunction(spec, f.values, interpolation)
        return GridFunction(spec, f(spec.mesh()), interpolation)
    if isinstance(f, TestFunction) and f.arity != spec.dim:
        raise ValueError("test function arity does not match the grid dimension")
    return GridFunction.sample(spec, f, interpolation)


def outer(vectors) -> np.ndarray:
    """Outer product of 1D arrays as a ``d``-dimensional array."""
    out = np.asarray(vectors[0], dtype=float)
    for v in vectors[1:]:
        out = np.multiply.outer(out, np.asarray(v, dtype=float))
    return out


def grid_corners(d: int) -> np.ndarray:
    return np.array(list(product((0.0, 1.0), repeat=d)))
