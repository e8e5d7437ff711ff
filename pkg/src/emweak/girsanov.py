"""Change of measure around the driftless reference process Y = x0 + sigma W.

Under the exponential weight R the reference process has the law of the
SDE (continuous-drift weight) or of its EM scheme (weight with the drift
frozen at the points s_delta). The stochastic integral uses the left-point
rule; with a frozen drift that rule is exact on the delta grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from emweak.core import (
    DriftSpec,
    EmweakError,
    InvalidConfigError,
    NumericalBlowupError,
    SigmaSpec,
    SimConfig,
    TimeGrid,
    grid_floor,
    make_time_grid,
)
from emweak.engine import draw_increments, run_chunked

PURPOSE_WEIGHTS = 1
PURPOSE_MOMENTS = 2

NOVIKOV_EPS = 0.05
NOVIKOV_LAMBDA = 0.5 * (1.0 + NOVIKOV_EPS)
FINE_EXPONENT = 12
TAIL_THRESHOLD = 0.5

VARIANT_R1 = "R1"
VARIANT_R2 = "R2"


class PreconditionError(EmweakError):
    pass


@dataclass(frozen=True)
class WeightSample:
    log_weight: float
    ito_term: float
    quad_term: float
    variant: str
    delta: Optional[float] = None

    @property
    def weight(self) -> float:
        return math.exp(self.log_weight)


@dataclass(frozen=True)
class ConditionCheck:
    passed: bool
    lhs: float
    margin: float
    max_horizon: Optional[float] = None


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n_paths: int


@dataclass(frozen=True)
class ExpMomentReport:
    lam: float
    horizon: float
    estimate: float
    stderr: float
    tail_diagnostic: float
    heavy_tail: bool
    sample_max: float
    n_nonfinite: int
    samples: Optional[np.ndarray] = None


def check_lambda_horizon(T: float, lam: float, l2: float, sigma: SigmaSpec) -> ConditionCheck:
    """Exponential-moment horizon condition 2 T^2 lam L2^2 ||s^-1||^2 ||s||^2 < 1."""
    if min(T, lam, l2) < 0:
        raise InvalidConfigError("T, lambda and L2 must be nonnegative")
    lhs = 2.0 * T * T * lam * l2 * l2 * sigma.inv_op_norm ** 2 * sigma.op_norm ** 2
    return ConditionCheck(lhs < 1.0, lhs, 1.0 - lhs)


def _rate_constant(p0: float) -> float:
    return math.sqrt(2.0 * (p0 + 1.0) * (p0 + 3.0)) / (p0 - 1.0)


def check_weak_rate_condition(T: float, l2: float, sigma: SigmaSpec, p0: float) -> ConditionCheck:
    """Horizon condition of the weak-rate theorem.

    Passes iff T L2 ||s^-1|| ||s|| sqrt(2(p0+1)(p0+3)) / (p0-1) < 1. The
    returned ``max_horizon`` is the supremum of admissible T (inf if L2 = 0).
    """
    if p0 < 2:
        raise InvalidConfigError(f"p0 must be >= 2, got {p0}")
    if T < 0 or l2 < 0:
        raise InvalidConfigError("T and L2 must be nonnegative")
    per_unit_t = l2 * sigma.inv_op_norm * sigma.op_norm * _rate_constant(p0)
    lhs = T * per_unit_t
    max_horizon = math.inf if per_unit_t == 0.0 else 1.0 / per_unit_t
    return ConditionCheck(lhs < 1.0, lhs, 1.0 - lhs, max_horizon)


def _frozen_index(grid: TimeGrid, delta: float) -> np.ndarray:
    """For each left point t_k, the grid index of [t_k / delta] delta."""
    idx = np.empty(grid.n_steps, dtype=np.int64)
    for k, t in enumerate(grid.times[:-1]):
        j = int(np.searchsorted(grid.times, grid_floor(float(t), delta), side="right")) - 1
        if not math.isclose(grid.times[j], grid_floor(float(t), delta), rel_tol=1e-12, abs_tol=1e-15):
            raise InvalidConfigError("delta must be a multiple of the fine step")
        idx[k] = j
    return idx


def weights_batch(drift: DriftSpec, sigma: SigmaSpec, x0: np.ndarray, grid: TimeGrid,
                  increments: np.ndarray, variant: str = VARIANT_R1,
                  delta: Optional[float] = None):
    """Log-weights for a block of reference paths.

    ``increments`` has shape (m, n, d). Returns ``(ito, quad, y_terminal)``
    with ``ito``/``quad`` of shape (m,) and the reference terminal states
    (m, d). Variant R2 freezes the drift at the points [t / delta] delta,
    which must lie on ``grid``.
    """
    m, n, d = increments.shape
    y = np.empty((m, n + 1, d))
    y[:, 0] = x0
    np.cumsum(sigma.apply(increments), axis=1, out=y[:, 1:])
    y[:, 1:] += x0
    if variant == VARIANT_R1 or delta is None or delta == grid.step:
        frozen = None
    elif variant == VARIANT_R2:
        frozen = _frozen_index(grid, delta)
    else:
        raise InvalidConfigError(f"unknown weight variant {variant!r}")
    if frozen is None:
        h = sigma.apply_inverse(drift(y[:, :-1].reshape(m * n, d)).reshape(m, n, d))
    else:
        uniq, inv = np.unique(frozen, return_inverse=True)
        hu = sigma.apply_inverse(drift(y[:, uniq].reshape(-1, d)).reshape(m, len(uniq), d))
        h = hu[:, inv]
    ito = np.einsum("mkd,mkd->m", h, increments)
    quad = 0.5 * np.einsum("mkd,mkd,k->m", h, h, grid.dt)
    return ito, quad, y[:, -1]


def weights_along_path(drift: DriftSpec, sigma: SigmaSpec, x0, grid: TimeGrid,
                       increments: np.ndarray, variant: str = VARIANT_R1,
                       delta: Optional[float] = None) -> WeightSample:
    """Weight of a single reference path given its increments (n_steps, d)."""
    inc = np.asarray(increments, dtype=np.float64)
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    ito, quad, _ = weights_batch(drift, sigma, x0, grid, inc[None], variant, delta)
    logw = float(ito[0] - quad[0])
    if not math.isfinite(logw):
        raise NumericalBlowupError("non-finite Girsanov weight")
    return WeightSample(logw, float(ito[0]), float(quad[0]), variant,
                        delta if variant == VARIANT_R2 else None)


def weight_grid(cfg: SimConfig, variant: str, fine_step: Optional[float] = None) -> TimeGrid:
    """Grid on which a variant's weight is computed.

    R2 uses the delta grid itself (exact for a frozen drift); R1 uses the
    internal fine grid, T * 2**-12 unless ``fine_step`` is given.
    """
    if variant == VARIANT_R2:
        return cfg.grid()
    if variant != VARIANT_R1:
        raise InvalidConfigError(f"unknown weight variant {variant!r}")
    return make_time_grid(cfg.horizon, fine_step or math.ldexp(cfg.horizon, -FINE_EXPONENT))


def weighted_samples(drift: DriftSpec, sigma: SigmaSpec, cfg: SimConfig,
                     f: Callable[[np.ndarray], np.ndarray], variant: str = VARIANT_R1,
                     fine_step: Optional[float] = None):
    """Per-path weights R and values f(Y_T) for the weighted estimator."""
    grid = weight_grid(cfg, variant, fine_step)
    x0 = cfg.x0_array

    def chunk(idx: range):
        inc = draw_increments(cfg.master_seed, idx, grid, cfg.dim, PURPOSE_WEIGHTS)
        ito, quad, yT = weights_batch(drift, sigma, x0, grid, inc)
        w = np.exp(ito - quad)
        if not np.all(np.isfinite(w)):
            row = int(np.flatnonzero(~np.isfinite(w))[0])
            raise NumericalBlowupError("non-finite Girsanov weight", path_index=idx.start + row)
        return w, np.asarray(f(yT), dtype=np.float64)

    parts = run_chunked(chunk, cfg.n_paths, cfg.n_workers)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def novikov_check(drift: DriftSpec, sigma: SigmaSpec, T: float) -> ConditionCheck:
    return check_lambda_horizon(T, NOVIKOV_LAMBDA, drift.effective_l2, sigma)


def weighted_expectation(drift: DriftSpec, sigma: SigmaSpec, cfg: SimConfig,
                         f: Callable[[np.ndarray], np.ndarray], variant: str = VARIANT_R1,
                         fine_step: Optional[float] = None) -> Estimate:
    """Monte Carlo mean of R * f(x0 + sigma W_T).

    With variant R1 this estimates E f(X_T); with R2 it estimates
    E f(X_T^delta) for delta = ``cfg.step`` without running the EM scheme.
    """
    check = novikov_check(drift, sigma, cfg.horizon)
    if not check.passed:
        raise PreconditionError(
            f"Novikov horizon check failed (lhs={check.lhs:.6g}); estimator variance not guaranteed"
        )
    w, fy = weighted_samples(drift, sigma, cfg, f, variant, fine_step)
    vals = w * fy
    n = vals.size
    se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return Estimate(float(vals.mean()), se, n)


def exp_moment_samples(drift: DriftSpec, sigma: SigmaSpec, x0, T: float, lam: float,
                       cfg: SimConfig) -> np.ndarray:
    """Samples of exp(lam * sum |s^-1 b(Y_{t_k})|^2 dt_k) on the grid of step ``cfg.step``.

    The left Riemann sum equals the integral of the drift frozen on that
    grid, so the same call serves both the continuous and the frozen form.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    grid = make_time_grid(T, cfg.step)

    def chunk(idx: range):
        inc = draw_increments(cfg.master_seed, idx, grid, x0.size, PURPOSE_MOMENTS)
        _, quad, _ = weights_batch(drift, sigma, x0, grid, inc)
        with np.errstate(over="ignore"):
            return np.exp(2.0 * lam * quad)

    return np.concatenate(run_chunked(chunk, cfg.n_paths, cfg.n_workers))


def exp_moment_estimate(drift: DriftSpec, sigma: SigmaSpec, x0, T: float, lam: float,
                        cfg: SimConfig, keep_samples: bool = False) -> ExpMomentReport:
    if lam == 0 or T == 0:
        return ExpMomentReport(lam, T, 1.0, 0.0, 0.0, False, 1.0, 0)
    samples = exp_moment_samples(drift, sigma, x0, T, lam, cfg)
    finite = np.isfinite(samples)
    good = samples[finite]
    n_bad = int(samples.size - good.size)
    if good.size == 0:
        return ExpMomentReport(lam, T, math.inf, math.inf, 1.0, True, math.inf, n_bad,
                               samples if keep_samples else None)
    top = max(1, int(math.ceil(0.01 * good.size)))
    ordered = np.sort(good)
    total = float(ordered.sum())
    tail = float(ordered[-top:].sum() / total) if total > 0 else 0.0
    se = float(good.std(ddof=1) / math.sqrt(good.size)) if good.size > 1 else math.inf
    return ExpMomentReport(
        lam, T, float(good.mean()), se, tail, tail > TAIL_THRESHOLD or n_bad > 0,
        float(ordered[-1]), n_bad, samples if keep_samples else None,
    )
