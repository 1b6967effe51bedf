"""The deterministic drift flow ``dy/dt = b(y)`` on the cube and its variational equations.

A batched Dormand-Prince 5(4) integrator advances the state, the Jacobian
``J = dy/dx`` and the second derivative ``H[i, k, j] = d^2 y_i / dx_k dx_j``
jointly, with one shared adaptive step per batch.  After each accepted step
the state is clamped to ``[0, 1]^d`` and the clamp magnitude accumulated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .checks import CheckReport
from .coeffs import CoefficientSystem, PolyExpr, TestFunction
from .constants import compute_constants
from .grid import GridFunction, GridSpec

DEFAULT_TOL = 1e-9

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


class FlowError(RuntimeError):
    """Step size underflow; ``time`` is where integration stopped."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


@dataclass
class FlowResult:
    t: float
    x: np.ndarray
    y: np.ndarray
    jac: np.ndarray | None
    hess: np.ndarray | None
    steps: int
    rejected: int
    tol: float
    clamp: float


@dataclass
class FlowBatch:
    """Flows of many start points at one time; arrays carry a leading point axis."""

    t: float
    x: np.ndarray
    y: np.ndarray
    jac: np.ndarray | None
    hess: np.ndarray | None
    steps: int
    rejected: int
    tol: float
    clamp: np.ndarray

    def __getitem__(self, p: int) -> FlowResult:
        return FlowResult(self.t, self.x[p], self.y[p],
                          None if self.jac is None else self.jac[p],
                          None if self.hess is None else self.hess[p],
                          self.steps, self.rejected, self.tol, float(self.clamp[p]))

    def __len__(self):
        return self.x.shape[0]


class _DriftDerivatives:
    """Vectorized ``b``, ``Db`` and ``D^2 b``; constant entries are evaluated once."""

    def __init__(self, sys: CoefficientSystem, order: int):
        d = self.d = sys.dim
        self.order = order
        self.b = [(i, p) for i, p in enumerate(sys.drift) if not p.is_zero()]
        self.db_const = np.zeros((d, d))
        self.db_var = []
        self.d2b_const = np.zeros((d, d, d))
        self.d2b_var = []
        if order < 1:
            return
        for i, p in enumerate(sys.drift):
            for k in p.variables:
                q = p.partial(k + 1)
                self._store(q, (i, k), self.db_const, self.db_var)
                if order >= 2:
                    for n in q.variables:
                        r = q.partial(n + 1)
                        self._store(r, (i, k, n), self.d2b_const, self.d2b_var)
        self.has_d2b = bool(self.d2b_var) or bool(np.any(self.d2b_const))

    @staticmethod
    def _store(q: PolyExpr, idx, const, var):
        if q.is_zero():
            return
        if q.is_constant():
            const[idx] = q.constant_term()
        else:
            var.append((idx, q))

    def drift(self, y):
        out = np.zeros_like(y)
        for i, p in self.b:
            out[:, i] = p(y)
        return out

    def jacobian(self, y):
        out = np.broadcast_to(self.db_const, (y.shape[0],) + self.db_const.shape).copy()
        for (i, k), q in self.db_var:
            out[:, i, k] = q(y)
        return out

    def hessian(self, y):
        out = np.broadcast_to(self.d2b_const, (y.shape[0],) + self.d2b_const.shape).copy()
        for (i, k, n), q in self.d2b_var:
            out[:, i, k, n] = q(y)
        return out


def _pack(y, J, H):
    parts = [y]
    if J is not None:
        parts.append(J.reshape(y.shape[0], -1))
    if H is not None:
        parts.append(H.reshape(y.shape[0], -1))
    return np.concatenate(parts, axis=1)


def _rhs_factory(der: _DriftDerivatives, order: int):
    d = der.d

    def rhs(state):
        P = state.shape[0]
        y = np.clip(state[:, :d], 0.0, 1.0)
        out = [der.drift(y)]
        if order >= 1:
            J = state[:, d:d + d * d].reshape(P, d, d)
            Db = der.jacobian(y)
            out.append(np.matmul(Db, J).reshape(P, -1))
            if order >= 2:
                H = state[:, d + d * d:].reshape(P, d, d, d)
                dH = np.einsum("pil,plkj->pikj", Db, H)
                if der.has_d2b:
                    D2 = der.hessian(y)
                    dH += np.einsum("piln,plk,pnj->pikj", D2, J, J)
                out.append(dH.reshape(P, -1))
        return np.concatenate(out, axis=1)

    return rhs


def flow_batch(sys: CoefficientSystem, x, t: float, order: int = 0,
               tol: float = DEFAULT_TOL, max_steps: int = 1_000_000) -> FlowBatch:
    """Flow every row of ``x`` to time ``t``; see :func:`flow`."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if t < 0:
        raise ValueError("t must be nonnegative")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = sys.dim
    if x.shape[1] != d:
        raise ValueError(f"start points must have {d} coordinates")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("start points must lie in [0, 1]^d")
    P = x.shape[0]
    J0 = np.broadcast_to(np.eye(d), (P, d, d)).copy() if order >= 1 else None
    H0 = np.zeros((P, d, d, d)) if order >= 2 else None
    state = _pack(x.copy(), J0, H0)
    clamp = np.zeros(P)
    steps = rejected = 0

    der = _DriftDerivatives(sys, order)
    if t > 0 and der.b:
        rhs = _rhs_factory(der, order)
        s = 0.0
        k1 = rhs(state)
        scale0 = tol + tol * np.abs(state)
        d0 = np.max(np.abs(state) / scale0)
        d1 = np.max(np.abs(k1) / scale0)
        h = 0.01 * d0 / d1 if d1 > 1e-5 and d0 > 1e-5 else 1e-3
        h = min(h, t)
        while s < t:
            if steps + rejected > max_steps:
                raise FlowError(f"too many steps before reaching t={t}", s)
            remaining = t - s
            h = min(h, remaining)
            # a final step clipped to the remaining interval may be arbitrarily short
            if h < remaining and h < 1e-14 * max(1.0, t):
                raise FlowError(f"step size underflow at t={s:.6g}", s)
            ks = [k1]
            for st in range(1, 7):
                inc = sum(a * k for a, k in zip(_A[st], ks) if a)
                ks.append(rhs(state + h * inc))
            new = state + h * sum(b * k for b, k in zip(_B5, ks) if b)
            err = h * sum(e * k for e, k in zip(_E, ks) if e)
            scale = tol + tol * np.maximum(np.abs(state), np.abs(new))
            enorm = float(np.sqrt(np.max(np.mean((err / scale) ** 2, axis=1))))
            if enorm <= 1.0:
                s = t if t - s - h <= 1e-15 * t else s + h
                yv = new[:, :d]
                clipped = np.clip(yv, 0.0, 1.0)
                clamp += np.max(np.abs(clipped - yv), axis=1)
                new[:, :d] = clipped
                state = new
                k1 = ks[6] if not clamp.any() else rhs(state)
                steps += 1
                fac = 0.9 * enorm ** -0.2 if enorm > 0 else 5.0
                h *= min(5.0, max(0.2, fac))
            else:
                rejected += 1
                h *= max(0.2, 0.9 * enorm ** -0.25)

    y = state[:, :d].copy()
    J = state[:, d:d + d * d].reshape(P, d, d).copy() if order >= 1 else None
    H = state[:, d + d * d:].reshape(P, d, d, d).copy() if order >= 2 else None
    return FlowBatch(t, x, y, J, H, steps, rejected, tol, clamp)


def flow(sys: CoefficientSystem, x, t: float, order: int = 0, tol: float = DEFAULT_TOL) -> FlowResult:
    """End point ``y(t, x)`` of the drift flow, with its first (``order >= 1``)
    and second (``order == 2``) derivatives in ``x``."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return flow_batch(sys, x, t, order, tol)[0]


def flowed_nodes(sys: CoefficientSystem, spec: GridSpec, t: float, tol: float = DEFAULT_TOL):
    """``y(t, x)`` for every node of ``spec``, shape ``(size, d)``."""
    return flow_batch(sys, spec.mesh(), t, 0, tol).y


def apply_T1(sys: CoefficientSystem, f, t: float, grid: GridSpec | None = None,
             tol: float = DEFAULT_TOL, nodes_y=None, interpolation: str | None = None) -> GridFunction:
    """``x -> f(y(t, x))`` on the nodes of ``grid``.

    ``f`` may be a :class:`TestFunction` (evaluated exactly) or a
    :class:`GridFunction` (interpolated; its grid is used when ``grid`` is
    omitted).  ``nodes_y`` lets callers reuse precomputed flowed nodes.
    """
    if grid is None:
        if not isinstance(f, GridFunction):
            raise ValueError("a grid is required for test-function input")
        grid = f.spec
    if interpolation is None:
        interpolation = f.interpolation if isinstance(f, GridFunction) else "linear"
    if nodes_y is None:
        nodes_y = flowed_nodes(sys, grid, t, tol)
    if not isinstance(f, (GridFunction, TestFunction)) and not callable(f):
        raise TypeError("f must be a TestFunction, GridFunction or callable")
    return GridFunction(grid, np.asarray(f(nodes_y), dtype=float), interpolation)


def second_order_bound(lam2: float, t: float) -> float:
    """``(exp(2 lambda_2 t) - 1) exp(lambda_2 t) / 2``."""
    return 0.5 * math.expm1(2.0 * lam2 * t) * math.exp(lam2 * t)


def check_gronwall(sys: CoefficientSystem, t: float, order: int = 2, sample_points: int = 50,
                   tol_margin: float = 1e-6, seed: int = 0, tol: float = DEFAULT_TOL,
                   constants=None) -> CheckReport:
    """Column sums of the flow derivatives against their exponential bounds.

    First order: ``max_j sum_i |dy_i/dx_j| <= exp(lambda_1 t)``.  Second order:
    ``max_{k,j} sum_i |d^2 y_i/dx_k dx_j| <= (exp(2 lambda_2 t) - 1) exp(lambda_2 t) / 2``.
    Points are scrambled Halton samples in the cube.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    rep = constants or compute_constants(sys)
    d = sys.dim
    pts = qmc.Halton(d, scramble=True, seed=seed).random(sample_points)
    fb = flow_batch(sys, pts, t, order, tol)
    report = CheckReport(f"gronwall(order<={order}, t={t:g}, d={d})", tol_margin)
    col1 = np.abs(fb.jac).sum(axis=1).max(axis=1)
    b1 = math.exp(rep.lam[1] * t)
    worst = int(np.argmax(col1))
    report.add("first-order column sum", col1[worst], b1)
    if order == 2:
        col2 = np.abs(fb.hess).sum(axis=1).reshape(len(pts), -1).max(axis=1)
        worst = int(np.argmax(col2))
        report.add("second-order column sum", col2[worst], second_order_bound(rep.lam[2], t),
                   zero_tol=10 * tol)
    report.add("clamp magnitude", float(fb.clamp.max()), tol, zero_tol=0.0)
    return report


__all__ = [
    "FlowBatch", "FlowError", "FlowResult", "apply_T1", "check_gronwall", "flow", "flow_batch",
    "flowed_nodes", "second_order_bound",
]
