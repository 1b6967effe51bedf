"""Compiled Euler-Maruyama kernels for the full-truncation scheme on the cube.

The drift is flattened to ``b(x) = c0 + C @ monomials(x)`` over the distinct
non-constant monomials of the system; when every monomial is a single
coordinate (affine drift) the monomial pass is skipped.  All kernels release
the GIL and use no fast-math, so results are bitwise deterministic.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

from .coeffs import CoefficientSystem


class CompiledSystem:
    """Array form of a :class:`CoefficientSystem` for the kernels."""

    def __init__(self, sys: CoefficientSystem):
        d = self.dim = sys.dim
        index: dict = {}
        c0 = np.zeros(d)
        entries = []
        for i, b in enumerate(sys.drift):
            for mono, c in b.sparse_terms:
                if not mono:
                    c0[i] += c
                    continue
                u = index.setdefault(mono, len(index))
                entries.append((i, u, c))
        monos = list(index)
        self.affine = all(len(m) == 1 and m[0][1] == 1 for m in monos)
        if self.affine:
            # columns indexed by coordinate directly
            C = np.zeros((d, d))
            for i, u, c in entries:
                C[i, monos[u][0][0]] += c
        else:
            C = np.zeros((d, len(monos)))
            for i, u, c in entries:
                C[i, u] += c
        mptr, mvar, mexp = [0], [], []
        for m in monos:
            for j, e in m:
                mvar.append(j)
                mexp.append(e)
            mptr.append(len(mvar))
        self.c0 = c0
        self.C = C
        self.mptr = np.asarray(mptr, dtype=np.int64)
        self.mvar = np.asarray(mvar, dtype=np.int64)
        self.mexp = np.asarray(mexp, dtype=np.int64)
        deg = max((a.degree for a in sys.sqdiff), default=0)
        # Horner coefficients, highest degree first
        self.acoef = np.zeros((d, deg + 1))
        for i, a in enumerate(sys.sqdiff):
            for mono, c in a.sparse_terms:
                k = mono[0][1] if mono else 0
                self.acoef[i, deg - k] = c

    def args(self):
        return (self.affine, self.c0, self.C, self.mptr, self.mvar, self.mexp, self.acoef)


@nb.njit(nogil=True, cache=True, inline="always")
def _step(x, xn, mon, Z, p, k, dt, sqdt, affine, c0, C, mptr, mvar, mexp, acoef):
    d = x.shape[0]
    U = C.shape[1]
    if not affine:
        for u in range(U):
            v = 1.0
            for f in range(mptr[u], mptr[u + 1]):
                xe = x[mvar[f]]
                for _ in range(mexp[f]):
                    v *= xe
            mon[u] = v
    deg1 = acoef.shape[1]
    for i in range(d):
        s = c0[i]
        if affine:
            for j in range(d):
                s += C[i, j] * x[j]
        else:
            for u in range(U):
                s += C[i, u] * mon[u]
        xi = x[i]
        sd = 0.0
        # a vanishes on {0, 1}; enforce it exactly so that boundary hits
        # are absorbing wherever the drift vanishes too
        if 0.0 < xi < 1.0:
            av = 0.0
            for kk in range(deg1):
                av = av * xi + acoef[i, kk]
            if av > 0.0:
                sd = math.sqrt(av)
        v = xi + s * dt + sd * sqdt * Z[p, k, i]
        if v < 0.0:
            v = 0.0
        elif v > 1.0:
            v = 1.0
        xn[i] = v


@nb.njit(nogil=True, cache=True)
def euler_terminal(x0s, Z, dt, affine, c0, C, mptr, mvar, mexp, acoef, out, hit, track):
    """Terminal states for every (path, start point) pair under shared noise.

    ``Z`` has shape ``(n_paths, n_steps, d)`` and ``out`` ``(n_paths, n_points, d)``.
    When ``track`` is set, ``hit`` receives the first step index at which a
    coordinate sat on ``{0, 1}`` (``-1`` if never).
    """
    n_paths, n_steps, d = Z.shape
    n_pts = x0s.shape[0]
    sqdt = math.sqrt(dt)
    x = np.empty(d)
    xn = np.empty(d)
    mon = np.empty(max(C.shape[1], 1))
    for p in range(n_paths):
        for q in range(n_pts):
            for i in range(d):
                x[i] = x0s[q, i]
                if track:
                    hit[p, q, i] = 0 if (x[i] == 0.0 or x[i] == 1.0) else -1
            for k in range(n_steps):
                _step(x, xn, mon, Z, p, k, dt, sqdt, affine, c0, C, mptr, mvar, mexp, acoef)
                for i in range(d):
                    x[i] = xn[i]
                if track:
                    for i in range(d):
                        if hit[p, q, i] < 0 and (x[i] == 0.0 or x[i] == 1.0):
                            hit[p, q, i] = k + 1
            for i in range(d):
                out[p, q, i] = x[i]


@nb.njit(nogil=True, cache=True)
def euler_paths(x0, Z, dt, affine, c0, C, mptr, mvar, mexp, acoef, out):
    """Full trajectories from one start point; ``out`` has shape ``(n_paths, n_steps + 1, d)``."""
    n_paths, n_steps, d = Z.shape
    sqdt = math.sqrt(dt)
    x = np.empty(d)
    xn = np.empty(d)
    mon = np.empty(max(C.shape[1], 1))
    for p in range(n_paths):
        for i in range(d):
            x[i] = x0[i]
            out[p, 0, i] = x0[i]
        for k in range(n_steps):
            _step(x, xn, mon, Z, p, k, dt, sqdt, affine, c0, C, mptr, mvar, mexp, acoef)
            for i in range(d):
                x[i] = xn[i]
                out[p, k + 1, i] = xn[i]
