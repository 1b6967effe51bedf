"""One-dimensional square-root diffusion ``dY = sqrt(a(Y)) dW`` on ``[0, 1]``.

Three routes to the diffusion semigroup: full-truncation Euler paths, a
Crank-Nicolson propagator for ``u_t = a u'' / 2`` on a uniform grid, and the
resolvent ``(lambda - A_h)^{-1}`` of the same discrete generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve, solve_banded

from . import noise as _noise
from .checks import CheckReport
from .coeffs import CoefficientSystem, PolyExpr, TestFunction, partial
from .constants import sup_norm
from .grid import derivative_matrix
from .noise import NoiseStream

DEFAULT_NODES = 400
DEFAULT_DT = 1e-3


def _system(a: PolyExpr) -> CoefficientSystem:
    if a.arity != 1:
        raise ValueError("a must be univariate")
    return CoefficientSystem(1, [PolyExpr((), 1)], [a], name="diffusion1d")


# -- paths ------------------------------------------------------------------------
@dataclass
class Path1D:
    dt: float
    values: np.ndarray
    absorbed_at: int | None


@dataclass
class Ensemble1D:
    """Euler paths of one 1D diffusion; ``paths[p, k]`` is the state after ``k`` steps."""

    x0: float
    t: float
    dt: float
    paths: np.ndarray
    noise: NoiseStream

    def __len__(self):
        return self.paths.shape[0]

    def __getitem__(self, p: int) -> Path1D:
        return Path1D(self.dt, self.paths[p], _absorbed_at(self.paths[p]))

    @property
    def terminal(self) -> np.ndarray:
        return self.paths[:, -1]

    def absorption_steps(self) -> np.ndarray:
        """First step index on ``{0, 1}`` per path, ``-1`` if never."""
        on = (self.paths == 0.0) | (self.paths == 1.0)
        first = np.argmax(on, axis=1)
        return np.where(on.any(axis=1), first, -1)

    def summary(self) -> dict:
        """``{stat: (value, se)}`` for the terminal mean, variance and absorbed fraction."""
        y = self.terminal
        n = y.size
        mean = float(y.mean())
        var = float(y.var(ddof=1)) if n > 1 else 0.0
        # SE of the sample variance from the fourth central moment
        m4 = float(np.mean((y - mean) ** 4))
        var_se = math.sqrt(max(m4 - var * var, 0.0) / n)
        absorbed = float(np.mean((y == 0.0) | (y == 1.0)))
        return {
            "mean": (mean, math.sqrt(var / n)),
            "variance": (var, var_se),
            "absorbed_fraction": (absorbed, math.sqrt(absorbed * (1 - absorbed) / n)),
        }


def _absorbed_at(values: np.ndarray):
    hits = np.flatnonzero((values == 0.0) | (values == 1.0))
    return int(hits[0]) if hits.size else None


def simulate_1d(a: PolyExpr, x0: float, t: float, dt: float, n_paths: int,
                noise: NoiseStream | None = None, workers: int = 1) -> Ensemble1D:
    """Full-truncation Euler paths ``Y_{k+1} = clamp(Y_k + sqrt(a(Y_k)) sqrt(dt) Z_k)``.

    ``a`` is taken as zero on ``{0, 1}``, so boundary hits are absorbing.
    """
    noise = noise or NoiseStream()
    paths, dt_eff = _noise.trajectories(_system(a), [[x0]], t, dt, n_paths, noise, workers)
    return Ensemble1D(float(x0), float(t), dt_eff, paths[:, :, 0], noise)


def terminal_moments_1d(a: PolyExpr, x0: float, t: float, dt: float, n_paths: int,
                        noise: NoiseStream | None = None, workers: int = 1):
    """Streamed ``(mean, se)`` of ``Y_t`` and ``Y_t^2`` without storing paths."""
    noise = noise or NoiseStream()
    mean, se, stats = _noise.path_statistics(
        _system(a), [[x0]], t, dt, n_paths, noise,
        lambda out: np.stack([out[:, 0, 0], out[:, 0, 0] ** 2], axis=1), 2, workers)
    return mean, se, stats


# -- deterministic propagation -------------------------------------------------------
def positivity_step(a_nodes: np.ndarray, dx: float) -> float:
    """Largest step for which ``I + (k/2) A_h`` has nonnegative entries."""
    amax = float(np.max(a_nodes))
    return math.inf if amax <= 0 else 2.0 * dx * dx / amax


def _generator_matrix(a_nodes: np.ndarray, dx: float) -> np.ndarray:
    n = a_nodes.size
    A = np.zeros((n, n))
    c = 0.5 * a_nodes[1:-1] / (dx * dx)
    idx = np.arange(1, n - 1)
    A[idx, idx - 1] = c
    A[idx, idx] = -2.0 * c
    A[idx, idx + 1] = c
    return A


@dataclass
class Propagator1D:
    """Crank-Nicolson propagation of ``u_t = a(x) u'' / 2`` on ``N + 1`` uniform nodes.

    Boundary rows of the discrete generator vanish because ``a(0) = a(1) = 0``,
    so boundary values are frozen.  The time step is capped by
    :func:`positivity_step`; two implicit-Euler half steps start the scheme.
    Propagation matrices are cached per ``t``.
    """

    a: PolyExpr
    N: int = DEFAULT_NODES
    dt: float = DEFAULT_DT
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.N < 4:
            raise ValueError("need at least 4 intervals")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        self.x = np.linspace(0.0, 1.0, self.N + 1)
        self.dx = 1.0 / self.N
        a = np.asarray(self.a(self.x), dtype=float)
        a[0] = a[-1] = 0.0
        self.a_nodes = a
        self.A = _generator_matrix(a, self.dx)
        self.max_dt = positivity_step(a, self.dx)

    @property
    def n_nodes(self) -> int:
        return self.N + 1

    def time_grid(self, t: float) -> tuple[int, float]:
        """Number of steps and step size used to reach ``t``."""
        if t <= 0:
            return 0, 0.0
        k = min(self.dt, t / 100.0, self.max_dt * (1 - 1e-12))
        n = max(1, math.ceil(t / k - 1e-9))
        return n, t / n

    def explicit_factor_nonnegative(self, k: float) -> bool:
        E = np.eye(self.n_nodes) + 0.5 * k * self.A
        return bool(np.all(E >= -1e-15))

    def matrix(self, t: float) -> np.ndarray:
        """Dense propagation matrix ``P(t)`` with ``u(t) = P(t) u(0)``."""
        key = float(t)
        if key in self._cache:
            return self._cache[key]
        n, k = self.time_grid(t)
        I = np.eye(self.n_nodes)
        if n == 0:
            P = I
        else:
            if not self.explicit_factor_nonnegative(k):  # pragma: no cover - guarded by max_dt
                raise RuntimeError("time step violates positivity")
            # an implicit-Euler half step and the CN step share I - (k/2) A
            lhs = lu_factor(I - 0.5 * k * self.A)
            ie = lu_solve(lhs, I)
            start = ie @ ie
            cn = lu_solve(lhs, I + 0.5 * k * self.A)
            P = np.linalg.matrix_power(cn, n - 1) @ start if n > 1 else start
        P.setflags(write=False)
        self._cache[key] = P
        return P


def propagate_1d(prop: Propagator1D, phi, t: float) -> np.ndarray:
    """Node values of the discrete semigroup applied to ``phi`` (node values or a callable)."""
    phi = _node_values(prop, phi)
    return prop.matrix(t) @ phi


def _node_values(prop: Propagator1D, phi) -> np.ndarray:
    if callable(phi):
        phi = np.asarray(phi(prop.x), dtype=float)
    phi = np.asarray(phi, dtype=float)
    if phi.shape[0] != prop.n_nodes:
        raise ValueError(f"expected {prop.n_nodes} node values")
    return phi


def resolvent_solve(prop: Propagator1D, phi, lam: float) -> np.ndarray:
    """Solve ``(lambda - A_h) u = phi``; boundary values are ``phi / lambda``."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    phi = _node_values(prop, phi)
    n = prop.n_nodes
    ab = np.zeros((3, n))
    ab[1] = lam - np.diag(prop.A)
    ab[0, 1:] = -np.diag(prop.A, 1)
    ab[2, :-1] = -np.diag(prop.A, -1)
    return solve_banded((1, 1), ab, phi)


def discrete_derivative_norms(values: np.ndarray, m: int) -> list:
    """``[max |D^k values| for k = 0..m]`` with second-order stencils."""
    n = values.shape[0]
    return [float(np.max(np.abs(derivative_matrix(n, k) @ values))) for k in range(m + 1)]


def discrete_cm_norm(values: np.ndarray, m: int) -> float:
    return max(discrete_derivative_norms(values, m))


def nu_constants(a: PolyExpr, points: int = 1001) -> tuple[list, float]:
    """``[nu_0, ..., nu_3]`` and ``nu~_3`` for one squared-diffusion profile."""
    a2 = partial(partial(a, 1), 1)
    a3 = partial(a2, 1)
    s2 = sup_norm(a2, points)
    s3 = sup_norm(a3, points)
    nu3 = s3 + 1.5 * s2
    return [0.0, 0.0, 0.5 * s2, nu3], nu3 - 0.5 * s3


def check_nu_bounds(a: PolyExpr, t: float, m: int, test_phis, N: int = DEFAULT_NODES,
                    dt: float = DEFAULT_DT, tol: float = 1e-3) -> CheckReport:
    """Discrete ``||S_t phi||_{C^m} <= exp(nu_m t) ||phi||_{C^m}`` for each ``phi``."""
    if m not in (0, 1, 2, 3):
        raise ValueError("m must be in 0..3")
    nu, _ = nu_constants(a)
    prop = Propagator1D(a, N, dt)
    factor = math.exp(nu[m] * t)
    report = CheckReport(f"nu-bound(m={m}, t={t:g})", tol)
    for j, phi in enumerate(test_phis):
        v0 = _node_values(prop, phi)
        vt = propagate_1d(prop, v0, t)
        label = phi.describe() if isinstance(phi, TestFunction) else f"phi[{j}]"
        report.add(label, discrete_cm_norm(vt, m), factor * discrete_cm_norm(v0, m))
    return report


def check_resolvent(a: PolyExpr, m: int, test_phis, lam: float | None = None,
                    N: int = 1000, tol: float = 1e-3) -> CheckReport:
    """Discrete ``||d^m J phi|| <= ||d^m phi|| / (lambda - nu_m)``; ``lambda`` defaults to ``2 nu_m + 1``."""
    if m not in (0, 1, 2):
        raise ValueError("m must be in 0..2")
    nu, _ = nu_constants(a)
    lam = 2.0 * nu[m] + 1.0 if lam is None else lam
    if lam <= nu[m]:
        raise ValueError("lambda must exceed nu_m")
    prop = Propagator1D(a, N)
    D = derivative_matrix(prop.n_nodes, m)
    report = CheckReport(f"resolvent(m={m}, lambda={lam:g}, N={N})", tol)
    for j, phi in enumerate(test_phis):
        v = _node_values(prop, phi)
        u = resolvent_solve(prop, v, lam)
        label = phi.describe() if isinstance(phi, TestFunction) else f"phi[{j}]"
        report.add(label, np.max(np.abs(D @ u)), np.max(np.abs(D @ v)) / (lam - nu[m]))
    return report


__all__ = [
    "Ensemble1D", "NoiseStream", "Path1D", "Propagator1D", "check_nu_bounds", "check_resolvent",
    "discrete_cm_norm", "discrete_derivative_norms", "nu_constants", "positivity_step",
    "propagate_1d", "resolvent_solve", "simulate_1d", "terminal_moments_1d",
]
