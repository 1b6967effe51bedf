"""Counter-based Gaussian increments and the block-parallel Monte Carlo driver.

Noise for path ``p``, coordinate ``i`` comes from a Philox generator keyed by
``(root_seed, stream, i, p // BLOCK)``, so it depends only on the lineage and
the path index: never on the number of paths requested or on how blocks are
distributed over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .coeffs import CoefficientSystem

BLOCK = 1024
_MAX_CHUNK_ELEMS = 4_000_000
_NO_HIT = np.empty((1, 1, 1), dtype=np.int64)


@dataclass(frozen=True)
class NoiseStream:
    """Deterministic Gaussian increments for a ``(root_seed, stream)`` lineage.

    ``substeps > 1`` aggregates that many base-level normals per step
    (``sum / sqrt(substeps)``), which couples a coarse simulation to a fine one
    run on the same lineage with ``substeps=1``.
    """

    root_seed: int = 0
    stream: int = 0
    substeps: int = 1

    def __post_init__(self):
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    @property
    def lineage(self) -> tuple:
        return (self.root_seed, self.stream, self.substeps)

    def with_substeps(self, substeps: int) -> "NoiseStream":
        return NoiseStream(self.root_seed, self.stream, substeps)

    def generator(self, coord: int, block: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.root_seed, spawn_key=(self.stream, coord, block))
        return np.random.Generator(np.random.Philox(ss))

    def block_normals(self, block: int, n_steps: int, d: int) -> np.ndarray:
        """Increments for paths ``block*BLOCK ... block*BLOCK + BLOCK - 1``: shape ``(BLOCK, n_steps, d)``."""
        s = self.substeps
        out = np.empty((BLOCK, n_steps, d))
        for i in range(d):
            raw = self.generator(i, block).standard_normal((n_steps * s, BLOCK))
            if s > 1:
                raw = raw.reshape(n_steps, s, BLOCK).sum(axis=1) / math.sqrt(s)
            out[:, :, i] = raw.T
        return out


def n_steps_for(t: float, dt: float) -> tuple[int, float]:
    """Number of Euler steps covering ``[0, t]`` and the effective step size."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 0, dt
    n = max(1, math.ceil(t / dt - 1e-9))
    return n, t / n


def _blocks(n_paths: int):
    return [(b, min(BLOCK, n_paths - b * BLOCK)) for b in range((n_paths + BLOCK - 1) // BLOCK)]


def _map_blocks(fn, n_paths, workers):
    blocks = _blocks(n_paths)
    if workers and workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, blocks))
    return [fn(b) for b in blocks]


def _validate(sys, x0s, n_paths):
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    if x0s.shape[1] != sys.dim:
        raise ValueError(f"start points must have {sys.dim} coordinates")
    if np.any(x0s < 0.0) or np.any(x0s > 1.0):
        raise ValueError("start points must lie in [0, 1]^d")
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    return x0s


def terminal_states(sys: CoefficientSystem, x0s, t, dt, n_paths, noise: NoiseStream,
                    workers: int = 1, compiled=None):
    """Terminal states ``(n_paths, n_points, d)`` and first-hit step indices."""
    x0s = _validate(sys, x0s, n_paths)
    n_steps, dt_eff = n_steps_for(t, dt)
    comp = compiled or _kernels.CompiledSystem(sys)
    d = sys.dim

    def run(block):
        b, n = block
        Z = noise.block_normals(b, n_steps, d)[:n]
        out = np.empty((n, x0s.shape[0], d))
        hit = np.empty((n, x0s.shape[0], d), dtype=np.int64)
        _kernels.euler_terminal(x0s, Z, dt_eff, *comp.args(), out, hit, True)
        return out, hit

    parts = _map_blocks(run, n_paths, workers)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def trajectories(sys: CoefficientSystem, x0, t, dt, n_paths, noise: NoiseStream, workers=1):
    """Full trajectories ``(n_paths, n_steps + 1, d)`` from a single start point."""
    x0 = _validate(sys, x0, n_paths)[0]
    n_steps, dt_eff = n_steps_for(t, dt)
    comp = _kernels.CompiledSystem(sys)
    d = sys.dim

    def run(block):
        b, n = block
        Z = noise.block_normals(b, n_steps, d)[:n]
        out = np.empty((n, n_steps + 1, d))
        _kernels.euler_paths(x0, Z, dt_eff, *comp.args(), out)
        return out

    return np.concatenate(_map_blocks(run, n_paths, workers)), dt_eff


class RunningStats:
    """Mean and sum of squared deviations, merged in a fixed order (Chan et al.)."""

    def __init__(self, k: int):
        self.n = 0
        self.mean = np.zeros(k)
        self.m2 = np.zeros(k)

    def add_batch(self, values: np.ndarray):
        n_b = values.shape[0]
        if n_b == 0:
            return
        mean_b = values.mean(axis=0)
        m2_b = ((values - mean_b) ** 2).sum(axis=0)
        n = self.n + n_b
        delta = mean_b - self.mean
        self.mean = self.mean + delta * (n_b / n)
        self.m2 = self.m2 + m2_b + delta ** 2 * (self.n * n_b / n)
        self.n = n

    @property
    def var(self):
        return self.m2 / max(self.n - 1, 1)

    @property
    def se(self):
        return np.sqrt(self.var / max(self.n, 1))


def path_statistics(sys: CoefficientSystem, x0s, t, dt, n_paths, noise: NoiseStream,
                    values_fn, n_values: int, workers: int = 1, compiled=None,
                    max_chunk_elems: int = _MAX_CHUNK_ELEMS):
    """Streamed mean and standard error of ``values_fn(terminal) -> (n, n_values)``.

    Every start point in ``x0s`` sees the same increments (common random
    numbers).  Chunking follows path indices only, so results are bitwise
    independent of ``workers``.
    """
    x0s = _validate(sys, x0s, n_paths)
    n_steps, dt_eff = n_steps_for(t, dt)
    comp = compiled or _kernels.CompiledSystem(sys)
    d = sys.dim
    n_pts = x0s.shape[0]
    chunk = max(1, min(BLOCK, max_chunk_elems // max(1, n_pts * d)))

    def run(block):
        b, n = block
        Z = noise.block_normals(b, n_steps, d)[:n]
        pieces = []
        for start in range(0, n, chunk):
            z = np.ascontiguousarray(Z[start:start + chunk])
            out = np.empty((z.shape[0], n_pts, d))
            _kernels.euler_terminal(x0s, z, dt_eff, *comp.args(), out, _NO_HIT, False)
            pieces.append(np.asarray(values_fn(out), dtype=float).reshape(z.shape[0], n_values))
        return pieces

    stats = RunningStats(n_values)
    for pieces in _map_blocks(run, n_paths, workers):
        for v in pieces:
            stats.add_batch(v)
    return stats.mean, stats.se, stats
