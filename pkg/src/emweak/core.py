"""Shared domain types, the per-path RNG contract and time-grid arithmetic."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

__all__ = [
    "EmweakError",
    "InvalidConfigError",
    "SingularSigmaError",
    "NumericalBlowupError",
    "SigmaSpec",
    "DriftSpec",
    "SimConfig",
    "TimeGrid",
    "make_time_grid",
    "grid_floor",
    "path_stream",
    "gaussian_increments",
    "sigma_analyze",
]

# snap T/delta to an integer when it is this close (relative), so 0.3/0.1 counts as 3 steps
_RATIO_SNAP = 1e-12

POWER_ITER_MAX = 200
SQUARINGS = 30
POWER_ITER_TOL = 1e-12


class EmweakError(Exception):
    """Base class for all package errors."""


class InvalidConfigError(EmweakError, ValueError):
    pass


class SingularSigmaError(EmweakError, ValueError):
    pass


class NumericalBlowupError(EmweakError, ArithmeticError):
    """Raised when a simulated state or weight stops being finite.

    ``step`` is the time-step index at which the failure was detected and
    ``path_index`` the global path index when known.
    """

    def __init__(self, message: str, step: Optional[int] = None, path_index: Optional[int] = None):
        super().__init__(message)
        self.step = step
        self.path_index = path_index


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SigmaSpec:
    """Invertible constant diffusion matrix with cached norms."""

    matrix: np.ndarray
    op_norm: float
    inv_op_norm: float
    det_gram: float
    inverse: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def condition(self) -> float:
        return self.op_norm * self.inv_op_norm

    def apply(self, v: np.ndarray) -> np.ndarray:
        """sigma @ v for row-stacked vectors v of shape (..., d)."""
        if self.dim == 1:
            return v * self.matrix[0, 0]
        return v @ self.matrix.T

    def apply_inverse(self, v: np.ndarray) -> np.ndarray:
        if self.dim == 1:
            return v * self.inverse[0, 0]
        return v @ self.inverse.T


@dataclass(frozen=True)
class DriftSpec:
    """A named drift with its growth metadata.

    The evaluator maps an array of shape ``(m, d)`` to an array of the same
    shape. ``l1``/``l2`` are the constants of the linear growth bound
    ``|b(x)| <= l1 + l2 |x|``. ``sublinear`` marks drifts for which any
    positive ``l2`` is admissible, so the horizon restriction disappears.
    ``support`` is the compact support of a 1-d drift when known.
    """

    name: str
    evaluator: Callable[[np.ndarray], np.ndarray]
    l1: float
    l2: float
    bounded: bool = False
    theoretical_alpha: Optional[float] = None
    theoretical_p0: Optional[float] = None
    sublinear: bool = False
    sup_norm: Optional[float] = None
    support: Optional[tuple[float, float]] = None
    constant: bool = False
    dim: int = 1
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.l1 < 0 or self.l2 < 0:
            raise InvalidConfigError("growth constants must be nonnegative")
        if self.theoretical_p0 is not None and self.theoretical_p0 < 2:
            raise InvalidConfigError("p0 must be >= 2")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.evaluator(x)

    @property
    def effective_l2(self) -> float:
        """Growth slope to use in the horizon conditions (0 for sublinear drifts)."""
        if self.bounded or self.sublinear:
            return 0.0
        return self.l2

    def scalar(self, x: float) -> float:
        """Evaluate a 1-d drift at a single point."""
        return float(self.evaluator(np.array([[x]], dtype=np.float64))[0, 0])


@dataclass(frozen=True)
class SimConfig:
    horizon: float
    step: float
    x0: tuple[float, ...] = (0.0,)
    n_paths: int = 1
    master_seed: int = 0
    n_workers: int = 1

    def __post_init__(self):
        x0 = tuple(float(v) for v in np.atleast_1d(np.asarray(self.x0, dtype=np.float64)))
        object.__setattr__(self, "x0", x0)
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise InvalidConfigError(f"horizon must be positive, got {self.horizon}")
        if not (0 < self.step < 1):
            raise InvalidConfigError(f"step must lie in (0, 1), got {self.step}")
        if self.step > self.horizon:
            raise InvalidConfigError("step must not exceed the horizon")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise InvalidConfigError(f"n_paths must be a positive integer, got {self.n_paths}")
        if int(self.n_workers) != self.n_workers or self.n_workers < 1:
            raise InvalidConfigError(f"n_workers must be a positive integer, got {self.n_workers}")
        if int(self.master_seed) != self.master_seed:
            raise InvalidConfigError("master_seed must be an integer")

    @property
    def dim(self) -> int:
        return len(self.x0)

    @property
    def x0_array(self) -> np.ndarray:
        return np.array(self.x0, dtype=np.float64)

    def grid(self) -> "TimeGrid":
        return make_time_grid(self.horizon, self.step)


def _full_steps(t: float, delta: float) -> int:
    ratio = t / delta
    k = round(ratio)
    if abs(ratio - k) <= _RATIO_SNAP * max(1.0, abs(ratio)):
        return int(k)
    return math.floor(ratio)


def grid_floor(t: float, delta: float) -> float:
    """Return [t/delta] * delta, the frozen grid point at or before t."""
    return _full_steps(t, delta) * delta


@dataclass(frozen=True)
class TimeGrid:
    times: np.ndarray
    step: float

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def uniform(self) -> bool:
        """True when every interval has length exactly ``step``."""
        return self.n_steps * self.step == self.horizon

    def index_floor(self, t: float) -> int:
        return min(_full_steps(t, self.step), self.n_steps)


def make_time_grid(T: float, delta: float) -> TimeGrid:
    """Grid 0, delta, 2 delta, ... up to T, closed by a shorter last step if needed."""
    if not (T > 0) or not math.isfinite(T):
        raise InvalidConfigError(f"horizon must be positive, got {T}")
    if not (delta > 0) or not math.isfinite(delta):
        raise InvalidConfigError(f"step must be positive, got {delta}")
    if delta > T:
        raise InvalidConfigError(f"step {delta} exceeds horizon {T}")
    n = _full_steps(T, delta)
    times = np.arange(n + 1, dtype=np.float64) * delta
    if times[-1] < T and not math.isclose(times[-1], T, rel_tol=_RATIO_SNAP, abs_tol=0.0):
        times = np.append(times, T)
    else:
        times[-1] = T
    return TimeGrid(_readonly(times), float(delta))


def path_stream(master_seed: int, path_index: int, purpose: int = 0) -> np.random.Generator:
    """Independent generator for one path.

    The stream depends only on ``(master_seed, path_index, purpose)``, so a
    path draws the same numbers whichever worker simulates it. ``purpose``
    separates estimators that must not share noise.
    """
    seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
    return np.random.default_rng(np.random.SeedSequence([seed, int(purpose), int(path_index)]))


def gaussian_increments(grid: TimeGrid, dim: int, stream: np.random.Generator) -> np.ndarray:
    """Brownian increments W(t_{k+1}) - W(t_k), shape (n_steps, dim)."""
    z = stream.standard_normal((grid.n_steps, dim))
    return z * np.sqrt(grid.dt)[:, None]


def _power_top_eigenvalue(gram: np.ndarray) -> float:
    # fixed start vector: deterministic and generically not orthogonal to the top eigenvector
    v = np.random.default_rng(0x5EED).standard_normal(gram.shape[0]) + 1.0
    # Plain power iteration converges like (lam2/lam1)**k, too slowly for
    # close top eigenvalues. Starting from A v with A proportional to
    # gram**(2**30) (repeated normalized squaring) removes the other
    # eigen-directions; the Rayleigh quotient below is still taken on gram.
    a = gram / np.linalg.norm(gram)
    for _ in range(SQUARINGS):
        a = a @ a
        na = np.linalg.norm(a)
        if na == 0.0 or not math.isfinite(na):
            break
        a /= na
    w = a @ v
    if np.linalg.norm(w) > 0:
        v = w
    v /= np.linalg.norm(v)
    lam = float(v @ gram @ v)
    for _ in range(POWER_ITER_MAX):
        w = gram @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new = float(v @ gram @ v)
        if abs(new - lam) <= POWER_ITER_TOL * max(abs(new), 1e-300):
            lam = new
            break
        lam = new
    return lam


def sigma_analyze(matrix) -> SigmaSpec:
    """Validate sigma and cache ||sigma||, ||sigma^-1|| and det(sigma sigma^T)."""
    m = np.array(matrix, dtype=np.float64)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidConfigError(f"sigma must be a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidConfigError("sigma has non-finite entries")
    d = m.shape[0]
    scale = float(np.max(np.abs(m))) ** d if m.size else 0.0
    det = float(np.linalg.det(m))
    if scale == 0.0 or abs(det) < 1e-12 * scale:
        raise SingularSigmaError(f"sigma is singular (det={det:g})")
    inv = np.linalg.inv(m)
    if np.count_nonzero(m - np.diag(np.diag(m))) == 0:
        diag = np.abs(np.diag(m))
        op, inv_op = float(diag.max()), float(1.0 / diag.min())
    else:
        op = math.sqrt(_power_top_eigenvalue(m @ m.T))
        inv_op = math.sqrt(_power_top_eigenvalue(inv.T @ inv))
    det_gram = det * det
    return SigmaSpec(_readonly(m), op, inv_op, det_gram, _readonly(inv))
