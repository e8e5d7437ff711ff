"""Euler-Maruyama simulation with the drift frozen at the left grid point.

Paths are processed in chunks of fixed size :data:`CHUNK_PATHS`. Each path
draws its Gaussian increments from its own stream (see
:func:`emweak.core.path_stream`), and chunk results are concatenated in
chunk order, so outputs do not depend on the number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from emweak.core import (
    DriftSpec,
    InvalidConfigError,
    NumericalBlowupError,
    SigmaSpec,
    SimConfig,
    TimeGrid,
    gaussian_increments,
    make_time_grid,
    path_stream,
)

CHUNK_PATHS = 4096
BLOWUP_LIMIT = 1e12

PURPOSE_EM = 0


@dataclass(frozen=True)
class PathResult:
    terminal: np.ndarray
    trajectory: Optional[np.ndarray]
    increments_consumed: int


@dataclass(frozen=True)
class CoupledResult:
    """Fine and coarse terminal states of the same Brownian paths, one row per path."""

    fine_terminal: np.ndarray
    coarse_terminal: np.ndarray
    master_seed: int
    step: float
    step_ref: float


def draw_increments(master_seed: int, indices: Sequence[int], grid: TimeGrid, dim: int,
                    purpose: int = PURPOSE_EM) -> np.ndarray:
    """Increments for a block of paths, shape (len(indices), n_steps, dim)."""
    out = np.empty((len(indices), grid.n_steps, dim), dtype=np.float64)
    for row, i in enumerate(indices):
        path_stream(master_seed, i, purpose).standard_normal(out=out[row])
    # same per-element product as gaussian_increments, done once per block
    out *= np.sqrt(grid.dt)[None, :, None]
    return out


def block_sums(increments: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive groups of ``factor`` steps: (m, n, d) -> (m, n // factor, d)."""
    m, n, d = increments.shape
    if n % factor:
        raise InvalidConfigError(f"{n} steps are not divisible into blocks of {factor}")
    return increments.reshape(m, n // factor, factor, d).sum(axis=2)


def run_chunked(fn: Callable[[range], object], n_paths: int, n_workers: int = 1) -> list:
    """Apply ``fn`` to consecutive index ranges and return results in order."""
    chunks = [range(s, min(s + CHUNK_PATHS, n_paths)) for s in range(0, n_paths, CHUNK_PATHS)]
    if n_workers <= 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, chunks))


def _guard(x: np.ndarray, step: int, offset: int = 0) -> None:
    bad = ~np.isfinite(x) | (np.abs(x) > BLOWUP_LIMIT)
    if bad.any():
        row = int(np.flatnonzero(bad.any(axis=-1))[0])
        raise NumericalBlowupError(
            f"state left the finite range at step {step} (path {offset + row})",
            step=step, path_index=offset + row,
        )


def euler_maruyama(drift: DriftSpec, sigma: SigmaSpec, x0: np.ndarray, dt: np.ndarray,
                   increments: np.ndarray, record: bool = False, offset: int = 0):
    """Vectorized EM recursion over a block of paths.

    ``increments`` has shape (m, n, d) and ``dt`` shape (n,). Returns the
    terminal states (m, d) and, when ``record`` is set, the trajectories
    (m, n + 1, d).
    """
    m, n, d = increments.shape
    x = np.broadcast_to(np.asarray(x0, dtype=np.float64), (m, d)).copy()
    traj = None
    if record:
        traj = np.empty((m, n + 1, d), dtype=np.float64)
        traj[:, 0] = x
    noise = sigma.apply(increments)
    for k in range(n):
        x = x + drift(x) * dt[k] + noise[:, k]
        _guard(x, k, offset)
        if record:
            traj[:, k + 1] = x
    return x, traj


def _check_dims(drift: DriftSpec, sigma: SigmaSpec, cfg: SimConfig) -> None:
    if sigma.dim != cfg.dim or drift.dim != cfg.dim:
        raise InvalidConfigError(
            f"dimension mismatch: x0 has {cfg.dim}, sigma {sigma.dim}, drift {drift.dim}"
        )


def em_path(drift: DriftSpec, sigma: SigmaSpec, cfg: SimConfig, stream: np.random.Generator,
            record: bool = False, increments: Optional[np.ndarray] = None) -> PathResult:
    """Simulate one EM path on ``cfg.grid()``.

    ``increments`` (shape (n_steps, d)) may be supplied instead of drawing
    them from ``stream``.
    """
    _check_dims(drift, sigma, cfg)
    grid = cfg.grid()
    if increments is None:
        increments = gaussian_increments(grid, cfg.dim, stream)
    terminal, traj = euler_maruyama(drift, sigma, cfg.x0_array, grid.dt, increments[None], record)
    return PathResult(terminal[0], None if traj is None else traj[0], grid.n_steps)


def em_terminal_batch(drift: DriftSpec, sigma: SigmaSpec, cfg: SimConfig) -> np.ndarray:
    """Terminal states of ``cfg.n_paths`` EM paths, shape (n_paths, d)."""
    _check_dims(drift, sigma, cfg)
    grid = cfg.grid()
    x0 = cfg.x0_array

    def chunk(idx: range) -> np.ndarray:
        inc = draw_increments(cfg.master_seed, idx, grid, cfg.dim)
        return euler_maruyama(drift, sigma, x0, grid.dt, inc, offset=idx.start)[0]

    return np.concatenate(run_chunked(chunk, cfg.n_paths, cfg.n_workers))


def coupling_factors(T: float, deltas: Sequence[float], delta_ref: float) -> list[int]:
    """Integer ratios delta / delta_ref, validated for the coupled simulation."""
    n_ref = T / delta_ref
    if not (delta_ref > 0) or abs(n_ref - round(n_ref)) > 1e-9 * n_ref:
        raise InvalidConfigError(f"T / delta_ref = {n_ref} is not an integer")
    factors = []
    for delta in deltas:
        ratio = delta / delta_ref
        q = round(ratio)
        if abs(ratio - q) > 1e-9 * ratio:
            raise InvalidConfigError(f"delta / delta_ref = {ratio} is not an integer")
        if q < 4:
            raise InvalidConfigError(f"delta_ref must be at most delta / 4 (ratio {ratio})")
        if round(n_ref) % q:
            raise InvalidConfigError(f"T / delta = {T / delta} is not an integer")
        factors.append(int(q))
    return factors


def em_coupled_grid(drift: DriftSpec, sigma: SigmaSpec, cfg: SimConfig, deltas: Sequence[float],
                    delta_ref: float) -> tuple[np.ndarray, np.ndarray]:
    """Simulate one set of fine paths and every coarse step size on them.

    Returns ``(fine, coarse)`` with shapes (n_paths, d) and
    (len(deltas), n_paths, d). Coarse increments are block sums of the
    fine increments, so all step sizes share the same Brownian paths.
    """
    _check_dims(drift, sigma, cfg)
    factors = coupling_factors(cfg.horizon, deltas, delta_ref)
    fine_grid = make_time_grid(cfg.horizon, delta_ref)
    x0 = cfg.x0_array

    def chunk(idx: range):
        inc = draw_increments(cfg.master_seed, idx, fine_grid, cfg.dim)
        fine = euler_maruyama(drift, sigma, x0, fine_grid.dt, inc, offset=idx.start)[0]
        coarse = np.empty((len(factors),) + fine.shape)
        for i, (q, delta) in enumerate(zip(factors, deltas)):
            dt = np.full(inc.shape[1] // q, q * delta_ref)
            coarse[i] = euler_maruyama(drift, sigma, x0, dt, block_sums(inc, q), offset=idx.start)[0]
        return fine, coarse

    parts = run_chunked(chunk, cfg.n_paths, cfg.n_workers)
    fine = np.concatenate([p[0] for p in parts])
    coarse = np.concatenate([p[1] for p in parts], axis=1)
    return fine, coarse


def em_coupled(drift: DriftSpec, sigma: SigmaSpec, cfg: SimConfig, delta_ref: float) -> CoupledResult:
    """Fine (step ``delta_ref``) and coarse (step ``cfg.step``) EM on shared noise."""
    fine, coarse = em_coupled_grid(drift, sigma, cfg, [cfg.step], delta_ref)
    return CoupledResult(fine, coarse[0], cfg.master_seed, cfg.step, delta_ref)


def dyadic_deltas(T: float, k_min: int, k_max: int) -> list[float]:
    """[T * 2**-k_min, ..., T * 2**-k_max], descending."""
    return [math.ldexp(T, -k) for k in range(k_min, k_max + 1)]
