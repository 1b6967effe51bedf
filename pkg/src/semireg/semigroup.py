"""The full semigroup ``T_t f(x) = E f(X_t^x)``: Monte Carlo, splitting, generator, certificates.

Finite-difference derivatives combine Monte Carlo values at stencil points
that all see the same increments (common random numbers), so the standard
error of a stencil is computed from the per-path weighted combination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.stats import qmc

from . import noise as _noise
from .coeffs import CoefficientSystem, TestFunction, as_test_function, multiindices
from .constants import bound_factor, cm_norm, compute_constants
from .diffusion1d import DEFAULT_DT
from .drift_flow import DEFAULT_TOL, apply_T1, flowed_nodes
from .grid import GridFunction, GridSpec, sample_function
from .noise import NoiseStream
from .tensor_diffusion import PathEnsembleND, T2Operator

H_FLOOR = 1e-2
PILOT_PATHS = 2048
#: default probe-group size (stencil points per Monte Carlo call)
GROUP_POINTS = 4096


class StencilError(ValueError):
    """No finite-difference stencil fits in the cube at the requested point."""


# -- direct simulation -------------------------------------------------------------
def simulate_full(sys: CoefficientSystem, x0, t: float, dt: float, n_paths: int,
                  noise: NoiseStream | None = None, workers: int = 1) -> PathEnsembleND:
    """Full-truncation Euler paths of the drift-diffusion system from ``x0``."""
    noise = noise or NoiseStream()
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    paths, dt_eff = _noise.trajectories(sys, x0[None, :], t, dt, n_paths, noise, workers)
    return PathEnsembleND(x0, float(t), dt_eff, paths, noise)


def mc_estimate(sys: CoefficientSystem, f, x, t: float, dt: float, n_paths: int,
                noise: NoiseStream | None = None, workers: int = 1) -> tuple[float, float]:
    """Sample mean and standard error of ``f(X_t^x)``."""
    noise = noise or NoiseStream()
    f = as_test_function(f, sys.dim)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    mean, se, _ = _noise.path_statistics(
        sys, x, t, dt, n_paths, noise, lambda out: f(out[:, 0, :])[:, None], 1, workers)
    return float(mean[0]), float(se[0])


# -- stencils ---------------------------------------------------------------------------
_CENTRAL = {
    1: (np.array([-1, 1]), np.array([-0.5, 0.5])),
    2: (np.array([-1, 0, 1]), np.array([1.0, -2.0, 1.0])),
    3: (np.array([-2, -1, 1, 2]), np.array([-0.5, 1.0, -1.0, 0.5])),
}
_FORWARD = {
    1: (np.arange(3), np.array([-3.0, 4.0, -1.0]) / 2.0),
    2: (np.arange(4), np.array([2.0, -5.0, 4.0, -1.0])),
    3: (np.arange(5), np.array([-5.0, 18.0, -24.0, 14.0, -3.0]) / 2.0),
}


def axis_stencil(xj: float, order: int, h: float, max_shrink: int = 20):
    """Offsets, weights and the step actually used for a 1D derivative at ``xj``.

    Central when it fits in ``[0, 1]``, else one-sided towards the interior;
    ``h`` is halved until one of them fits.
    """
    if order == 0:
        return np.zeros(1), np.ones(1), h
    for _ in range(max_shrink):
        off, w = _CENTRAL[order]
        if xj + off.min() * h >= 0.0 and xj + off.max() * h <= 1.0:
            return off * h, w / h ** order, h
        off, w = _FORWARD[order]
        if xj + off.max() * h <= 1.0:
            return off * h, w / h ** order, h
        if xj - off.max() * h >= 0.0:
            return -off * h, (-1.0) ** order * w / h ** order, h
        h *= 0.5
    raise StencilError(f"no order-{order} stencil fits at x={xj}")


def stencil(x, alpha, h) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product stencil ``(points, weights)`` for ``d^alpha`` at ``x``.

    ``h`` is a scalar or one step per derivative order (index ``|alpha|``).
    """
    x = np.asarray(x, dtype=float)
    order = sum(alpha)
    hh = h if np.isscalar(h) else h[order]
    pts = x[None, :].copy()
    wts = np.ones(1)
    for j, k in enumerate(alpha):
        if not k:
            continue
        off, w, _ = axis_stencil(x[j], k, hh)
        new = np.repeat(pts, off.size, axis=0)
        new[:, j] += np.tile(off, pts.shape[0])
        pts = new
        wts = np.repeat(wts, off.size) * np.tile(w, wts.size)
    return np.clip(pts, 0.0, 1.0), wts


def fd_derivative(sys: CoefficientSystem, f, x, t: float, alpha, h, dt: float, n_paths: int,
                  noise: NoiseStream | None = None, workers: int = 1) -> tuple[float, float]:
    """Finite-difference estimate of ``d^alpha T_t f(x)`` with common random numbers."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != sys.dim or sum(alpha) > 3 or min(alpha) < 0:
        raise ValueError("alpha must be a multiindex of length d with |alpha| <= 3")
    f = as_test_function(f, sys.dim)
    pts, w = stencil(x, alpha, h)
    if t == 0:
        return float(np.dot(w, f(pts))), 0.0
    noise = noise or NoiseStream()
    mean, se, _ = _noise.path_statistics(
        sys, pts, t, dt, n_paths, noise, lambda out: (f(out) @ w)[:, None], 1, workers)
    return float(mean[0]), float(se[0])


# -- C^m norm estimation ------------------------------------------------------------------
def default_probes(d: int, seed: int = 0) -> tuple[np.ndarray, str]:
    """Probe points and the sampling label.

    ``d <= 3``: the tensor grid ``{0, 1/4, 1/2, 3/4, 1}^d``.  Larger ``d``: the
    cube center followed by ``2d + 32`` scrambled Halton points inside it.
    """
    if d <= 3:
        g = np.linspace(0.0, 1.0, 5)
        mesh = np.meshgrid(*([g] * d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1), "grid-sup"
    inner = qmc.Halton(d, scramble=True, seed=seed).random(2 * d + 32)
    return np.vstack([np.full((1, d), 0.5), inner]), "sampled-sup"


def default_alphas(d: int, m: int, seed: int = 0) -> tuple[list, str]:
    """All ``|alpha| <= m`` for ``d <= 3``; else zero, every pure alpha and ``2d`` random mixed ones."""
    if d <= 3:
        return multiindices(d, m), "all"
    out = [tuple([0] * d)]
    for k in range(1, m + 1):
        for j in range(d):
            a = [0] * d
            a[j] = k
            out.append(tuple(a))
    mixed = [a for a in multiindices(d, m, 2) if sum(1 for v in a if v) >= 2]
    if mixed:
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(mixed), size=min(2 * d, len(mixed)), replace=False)
        out += [mixed[i] for i in sorted(pick)]
    return out, f"sampled(pure + {min(2 * d, len(mixed))} mixed)"


def default_steps(f: TestFunction, se: float, m: int) -> list:
    """``h_k = max(1e-2, (3 SE / ||f||_inf)^{1/(k+1)})`` for ``k = 0..m``."""
    fsup = cm_norm(f, 0)
    out = [0.0]
    for k in range(1, m + 1):
        rel = 3.0 * se / fsup if fsup > 0 else 0.0
        out.append(max(H_FLOOR, rel ** (1.0 / (k + 1)) if rel > 0 else 0.0))
    return out


@dataclass(frozen=True)
class NormEntry:
    alpha: tuple
    point: tuple
    value: float
    se: float
    h: float


@dataclass
class NormEstimate:
    m: int
    t: float
    entries: list
    h: list
    probe_label: str
    alpha_label: str
    probes_done: int
    probes_total: int
    work: int

    @property
    def partial(self) -> bool:
        return self.probes_done < self.probes_total

    def argmax(self) -> NormEntry | None:
        if not self.entries:
            return None
        return max(self.entries, key=lambda e: (abs(e.value), -e.se))

    @property
    def value(self) -> float:
        e = self.argmax()
        return abs(e.value) if e else math.nan

    @property
    def se(self) -> float:
        e = self.argmax()
        return e.se if e else math.nan

    def per_alpha(self) -> dict:
        out: dict = {}
        for e in self.entries:
            if e.alpha not in out or abs(e.value) > abs(out[e.alpha].value):
                out[e.alpha] = e
        return out


def _plan(probes, alphas, h):
    """Stencils per probe: ``[(probe, [(alpha, points, weights, h_used), ...]), ...]``."""
    plan = []
    for x in probes:
        rows = []
        for a in alphas:
            pts, w = stencil(x, a, h)
            k = sum(a)
            rows.append((a, pts, w, h[k] if k else 0.0))
        plan.append((x, rows))
    return plan


def _group_matrix(group):
    """Unique points and the sparse weight matrix mapping point values to entries."""
    index: dict = {}
    pts = []
    r, c, v = [], [], []
    meta = []
    for x, rows in group:
        for a, p, w, hk in rows:
            e = len(meta)
            meta.append((a, tuple(float(u) for u in x), hk))
            for q, wq in zip(p, w):
                key = q.tobytes()
                j = index.get(key)
                if j is None:
                    j = index[key] = len(pts)
                    pts.append(q)
                r.append(e)
                c.append(j)
                v.append(wq)
    W = sparse.csr_matrix((v, (r, c)), shape=(len(meta), len(pts)))
    return np.array(pts), W, meta


def cm_norm_estimate(sys: CoefficientSystem, f, m: int, t: float, probes=None, h=None,
                     dt: float | None = None, n_paths: int = 100_000,
                     noise: NoiseStream | None = None, alphas=None, workers: int = 1,
                     budget: float | None = None, seed: int = 0) -> NormEstimate:
    """Largest ``|d^alpha T_t f|`` over probe points and multiindices ``|alpha| <= m``.

    ``budget`` caps the work, counted in coordinate-steps
    (paths x steps x stencil points x d); probes are processed in order until
    the next one would exceed it.  The first probe is always evaluated.
    """
    if m not in (0, 1, 2, 3):
        raise ValueError("m must be in 0..3")
    noise = noise or NoiseStream()
    f = as_test_function(f, sys.dim)
    d = sys.dim
    dt = dt if dt is not None else (t / 10.0 if t > 0 else 1.0)
    if probes is None:
        probes, probe_label = default_probes(d, seed)
    else:
        probes, probe_label = np.atleast_2d(np.asarray(probes, dtype=float)), "user"
    if alphas is None:
        alphas, alpha_label = default_alphas(d, m, seed)
    else:
        alphas, alpha_label = [tuple(a) for a in alphas], "user"
    n_steps, _ = _noise.n_steps_for(t, dt)
    if h is None:
        se = 0.0
        if t > 0:
            n_pilot = min(n_paths, PILOT_PATHS)
            pilot_noise = NoiseStream(noise.root_seed, noise.stream + 1_000_003, noise.substeps)
            _, se_p = mc_estimate(sys, f, np.full(d, 0.5), t, dt, n_pilot, pilot_noise, workers)
            se = se_p * math.sqrt(n_pilot / n_paths)
        h = default_steps(f, se, m)
    elif np.isscalar(h):
        h = [0.0] + [float(h)] * m
    plan = _plan(probes, alphas, h)

    entries = []
    work = 0
    done = 0
    comp = None
    i = 0
    while i < len(plan):
        # grow the next group up to GROUP_POINTS stencil points and the remaining budget
        group, npts = [], 0
        while i < len(plan):
            cost_pts = sum(p.shape[0] for _, p, _, _ in plan[i][1])
            cost = cost_pts * n_paths * max(n_steps, 1) * d
            # the first probe always runs so that a report is never empty
            if budget is not None and work + cost > budget and (group or done):
                break
            if group and npts + cost_pts > GROUP_POINTS:
                break
            group.append(plan[i])
            npts += cost_pts
            work += cost
            i += 1
        if not group:
            break
        pts, W, meta = _group_matrix(group)
        if t == 0:
            vals = W @ f(pts)
            ses = np.zeros(len(meta))
        else:
            if comp is None:
                from ._kernels import CompiledSystem
                comp = CompiledSystem(sys)
            mean, se_, _ = _noise.path_statistics(
                sys, pts, t, dt, n_paths, noise,
                lambda out: (W @ f(out).T).T, len(meta), workers, compiled=comp)
            vals, ses = mean, se_
        for (a, x, hk), v, s in zip(meta, vals, ses):
            entries.append(NormEntry(a, x, float(v), float(s), hk))
        done += len(group)
        if budget is not None and i < len(plan) and work >= budget:
            break
    return NormEstimate(m, t, entries, list(h), probe_label, alpha_label, done, len(plan), work)


# -- Trotter splitting --------------------------------------------------------------
@dataclass
class TrotterResult:
    result: GridFunction
    n: int
    half_step_sups: list = field(default_factory=list)

    @property
    def sup_nonincreasing(self) -> bool:
        s = self.half_step_sups
        return all(b <= a * (1 + 1e-12) + 1e-14 for a, b in zip(s, s[1:]))


def trotter_compose(sys: CoefficientSystem, f, t: float, n: int, grid: GridSpec | None = None,
                    interpolation: str = "linear", dt: float = DEFAULT_DT,
                    tol: float = DEFAULT_TOL, record: bool = False):
    """``(T^1_{t/n} T^2_{t/n})^n f`` on a tensor grid.

    Each step applies the diffusion part and then composes with the drift
    flow, i.e. ``g <- T^1(T^2 g)``.  Flowed node positions are computed once.
    With ``record`` a :class:`TrotterResult` with the sup norm after every
    half step is returned.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if grid is None:
        if not isinstance(f, GridFunction):
            raise ValueError("a grid is required for test-function input")
        grid = f.spec
    g = sample_function(grid, f, interpolation)
    tau = t / n
    op = T2Operator(sys, grid, dt) if sys.has_diffusion() else None
    ys = flowed_nodes(sys, grid, tau, tol) if sys.has_drift() else None
    sups = [g.sup()]
    for _ in range(n):
        if op is not None:
            g = g.with_values(op.apply(g.values, tau))
        sups.append(g.sup())
        if ys is not None:
            g = apply_T1(sys, g, tau, grid, nodes_y=ys)
        sups.append(g.sup())
    if record:
        return TrotterResult(g, n, sups)
    return g


# -- generator ------------------------------------------------------------------------
@dataclass(frozen=True)
class GeneratorValue:
    G: float
    G1: float
    G2: float


def generator_apply(sys: CoefficientSystem, f, x, parts: bool = False):
    """``G f(x) = sum_i b_i d_i f + (1/2) sum_i a_i(x_i) d_i^2 f``.

    With ``parts`` the drift part ``G1``, the diffusion part ``G2`` and
    ``G = G1 + G2`` are returned together.
    """
    f = as_test_function(f, sys.dim)
    x = np.asarray(x, dtype=float)
    d = sys.dim
    g1 = np.zeros(x.shape[:-1]) if x.ndim > 1 else 0.0
    g2 = np.zeros_like(g1) if x.ndim > 1 else 0.0
    for i in range(d):
        e = [0] * d
        e[i] = 1
        b = sys.drift[i]
        if not b.is_zero():
            g1 = g1 + b(x) * f.derivative(e)(x)
        a = sys.sqdiff[i]
        if not a.is_zero():
            e[i] = 2
            g2 = g2 + 0.5 * a(x[..., i]) * f.derivative(e)(x)
    G = g1 + g2
    if parts:
        if np.ndim(G) == 0:
            return GeneratorValue(float(G), float(g1), float(g2))
        return GeneratorValue(G, g1, g2)
    return float(G) if np.ndim(G) == 0 else G


@dataclass
class ConsistencyReport:
    hs: list
    errors: np.ndarray
    slope: float
    point_slopes: np.ndarray
    min_slope: float

    @property
    def passed(self) -> bool:
        return self.slope >= self.min_slope


def _slope(hs, err):
    return float(np.polyfit(np.log(hs), np.log(err), 1)[0])


def generator_consistency(sys: CoefficientSystem, f, points, h0: float = 0.1, halvings: int = 3,
                          grid: GridSpec | None = None, n_split: int = 4,
                          min_slope: float = 0.8, dt: float = DEFAULT_DT) -> ConsistencyReport:
    """Observed order of ``(T_h f - f)/h -> G f`` as ``h`` halves.

    ``T_h`` is the grid semigroup from :func:`trotter_compose` with tensor-cubic
    interpolation, which reproduces polynomials of degree <= 3 per axis.
    """
    f = as_test_function(f, sys.dim)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    grid = grid or GridSpec.uniform(sys.dim, 41 if sys.dim > 1 else 201)
    hs = [h0 / 2 ** k for k in range(halvings + 1)]
    G = np.asarray(generator_apply(sys, f, points))
    fx = np.asarray(f(points))
    errs = []
    for h in hs:
        g = trotter_compose(sys, f, h, n_split, grid, interpolation="cubic", dt=min(dt, h / 10))
        errs.append(np.abs((np.asarray(g(points)) - fx) / h - G))
    errs = np.array(errs)
    worst = errs.max(axis=1)
    slopes = np.array([_slope(hs, errs[:, j]) if np.all(errs[:, j] > 0) else math.inf
                       for j in range(points.shape[0])])
    return ConsistencyReport(hs, errs, _slope(hs, worst), slopes, min_slope)


# -- certification ------------------------------------------------------------------------
DEFAULT_BUDGET = 5e10


@dataclass
class CertificateReport:
    m: int
    t: float
    f: str
    dim: int
    estimate: float
    se: float
    f_norm: float
    factor: float
    passed: bool
    k: float
    norm: NormEstimate
    sampling: str
    budget_exhausted: bool
    rates: dict = field(default_factory=dict)

    @property
    def bound(self) -> float:
        return self.factor * self.f_norm

    @property
    def margin(self) -> float:
        """``bound - (estimate - k SE)``; nonnegative exactly when the certificate passes."""
        return self.bound - (self.estimate - self.k * self.se)

    @property
    def ratio(self) -> float:
        return self.estimate / self.bound if self.bound > 0 else math.nan

    def rows(self):
        """``(alpha, point, value, se, bound_share)`` for every entry."""
        b = self.bound
        for e in self.norm.entries:
            yield e.alpha, e.point, e.value, e.se, abs(e.value) / b if b > 0 else math.nan

    def verdict(self) -> str:
        state = "PASS" if self.passed else "FAIL"
        extra = " (partial: budget exhausted)" if self.budget_exhausted else ""
        return (f"{state} m={self.m} t={self.t:g} d={self.dim} f={self.f}: "
                f"estimate {self.estimate:.6g} +- {self.se:.3g} vs bound {self.bound:.6g} "
                f"(factor {self.factor:.6g}, {self.sampling}){extra}")


def certify(sys: CoefficientSystem, f, m: int, t: float, budget: float | None = DEFAULT_BUDGET,
            n_paths: int = 100_000, dt: float | None = None, h=None,
            noise: NoiseStream | None = None, probes=None, alphas=None, workers: int = 1,
            k: float = 3.0, seed: int = 0, constants=None) -> CertificateReport:
    """Check ``||T_t f||_{C^m} <= exp((m^2 lambda_m + mu_m) t) ||f||_{C^m}`` empirically.

    Passes iff the largest entry minus ``k`` standard errors stays below the
    bound.  For ``d > 3`` the probe and multiindex sets are samples, so a pass
    means no violation was found.
    """
    if m not in (0, 1, 2):
        raise ValueError("certify supports m in {0, 1, 2}")
    f = as_test_function(f, sys.dim)
    rep = constants or compute_constants(sys)
    factor = bound_factor(rep, m, t, "full")
    fnorm = cm_norm(f, m)
    est = cm_norm_estimate(sys, f, m, t, probes, h, dt, n_paths, noise, alphas, workers,
                           budget, seed)
    value, se = est.value, est.se
    ok = bool(est.entries) and value - k * se <= factor * fnorm
    return CertificateReport(m, t, f.describe(), sys.dim, value, se, fnorm, factor, ok, k, est,
                             f"{est.probe_label}/{est.alpha_label}", est.partial,
                             {"lambda": rep.lam[m], "mu": rep.mu[m]})


__all__ = [
    "CertificateReport", "ConsistencyReport", "GeneratorValue", "NormEntry",
    "NormEstimate", "StencilError", "TrotterResult", "axis_stencil", "certify", "cm_norm_estimate",
    "default_alphas", "default_probes", "default_steps", "fd_derivative", "generator_apply",
    "generator_consistency", "mc_estimate", "simulate_full", "stencil", "trotter_compose",
]
