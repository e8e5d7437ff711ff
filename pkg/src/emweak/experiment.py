"""Weak-error experiments: |E f(X_T) - E f(X_T^delta)| over a dyadic delta grid.

The reference law is EM at a much finer step on the same Brownian paths.
Errors get percentile-bootstrap bands, and the rate is the weighted
least-squares slope of log error against log delta.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from emweak.core import DriftSpec, EmweakError, InvalidConfigError, SigmaSpec, SimConfig
from emweak.engine import em_coupled_grid, em_terminal_batch
from emweak.girsanov import (
    VARIANT_R2,
    check_weak_rate_condition,
    novikov_check,
    weighted_expectation,
)

N_BOOT = 1000
CI_LEVEL = 0.95
RATE_SLACK = 0.1
MIN_FIT_POINTS = 3
REF_EXPONENT = 10

PASS, FAIL, NOT_APPLICABLE = "PASS", "FAIL", "NOT-APPLICABLE"


class CatalogError(EmweakError, KeyError):
    pass


@dataclass(frozen=True)
class TestFunction:
    """Bounded test function applied to terminal states of shape (m, d).

    The 1-d catalogue members act on the first coordinate.
    """

    __test__ = False  # not a pytest class

    name: str
    evaluator: Callable[[np.ndarray], np.ndarray]
    bound: float
    params: dict = field(default_factory=dict)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.evaluator(x)

    def scaled(self, k: float) -> "TestFunction":
        ev = self.evaluator
        return TestFunction(f"{k:g}*{self.name}", lambda x: k * ev(x), abs(k) * self.bound,
                            dict(self.params, scale=k))


def _first(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[..., 0] if x.ndim >= 2 else x


def test_function_get(name: str, **params) -> TestFunction:
    if name == "indicator":
        c = float(params.get("c", 0.0))
        return TestFunction("indicator", lambda x: (_first(x) > c).astype(np.float64), 1.0, {"c": c})
    if name == "sin":
        return TestFunction("sin", lambda x: np.sin(_first(x)), 1.0, {})
    if name == "clamp":
        a = float(params.get("a", 1.0))
        if a <= 0:
            raise InvalidConfigError("clamp level must be positive")
        return TestFunction("clamp", lambda x: np.clip(_first(x), -a, a), a, {"a": a})
    if name == "sign":
        return TestFunction("sign", lambda x: np.sign(_first(x)), 1.0, {})
    raise CatalogError(f"unknown test function {name!r}; known: clamp, indicator, sign, sin")


test_function_get.__test__ = False


@dataclass
class RateReport:
    drift: str
    f: str
    T: float
    delta_grid: np.ndarray
    errors: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    signed_ci_low: np.ndarray
    signed_ci_high: np.ndarray
    used_in_fit: np.ndarray
    fitted_rate: float
    fitted_rate_ci: tuple[float, float]
    theoretical_alpha: Optional[float]
    condition_pass: bool
    max_horizon: float
    n_paths: int
    delta_ref: float
    master_seed: int
    degenerate: bool

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, np.ndarray):
                out[k] = v.tolist()
            elif isinstance(v, tuple):
                out[k] = list(v)
        return out


@dataclass(frozen=True)
class Verdict:
    status: str
    margin: Optional[float]
    reason: str = ""


def _check_delta_grid(T: float, deltas: Sequence[float], delta_ref: float) -> np.ndarray:
    d = np.asarray(deltas, dtype=np.float64)
    if d.size == 0:
        raise InvalidConfigError("empty delta grid")
    if np.any(np.diff(d) >= 0):
        raise InvalidConfigError("delta grid must be strictly descending")
    k = np.log2(T / d)
    if np.any(np.abs(k - np.round(k)) > 1e-9) or np.any(np.round(k) < 0):
        raise InvalidConfigError("delta grid must consist of T * 2**-k values")
    if np.any(d < 4 * delta_ref * (1 - 1e-12)):
        raise InvalidConfigError("every delta must be at least 4 * delta_ref")
    return d


def fit_rate(deltas: np.ndarray, errors: np.ndarray,
             weights: Optional[np.ndarray] = None) -> float:
    """Weighted least-squares slope of log(error) on log(delta)."""
    x = np.log(np.asarray(deltas, dtype=np.float64))
    y = np.log(np.asarray(errors, dtype=np.float64))
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=np.float64)
    xm = np.sum(w * x) / np.sum(w)
    ym = np.sum(w * y) / np.sum(w)
    return float(np.sum(w * (x - xm) * (y - ym)) / np.sum(w * (x - xm) ** 2))


def _fit_rate_batch(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """fit_rate for each row of y (shape (B, k)) with shared x and w."""
    xm = np.sum(w * x) / np.sum(w)
    ym = (y @ w) / np.sum(w)
    return ((y - ym[:, None]) * (w * (x - xm))).sum(axis=1) / np.sum(w * (x - xm) ** 2)


def bootstrap_means(diffs: np.ndarray, n_boot: int, rng: np.random.Generator) -> np.ndarray:
    """Bootstrap replicates of the column means of ``diffs`` (n, k) -> (n_boot, k)."""
    n = diffs.shape[0]
    out = np.empty((n_boot, diffs.shape[1]))
    for b in range(n_boot):
        counts = np.bincount(rng.integers(0, n, n), minlength=n)
        out[b] = counts @ diffs / n
    return out


def rate_report_from_samples(fine_f: np.ndarray, coarse_f: np.ndarray, deltas: np.ndarray, *,
                             drift: DriftSpec, sigma: SigmaSpec, f_name: str, T: float,
                             delta_ref: float, seed: int, n_boot: int = N_BOOT) -> RateReport:
    """Build a RateReport from f evaluated at fine (n,) and coarse (k, n) terminals."""
    diffs = (coarse_f - fine_f[None, :]).T
    n = diffs.shape[0]
    signed = diffs.mean(axis=0)
    errors = np.abs(signed)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, 0xB007]))
    boots = bootstrap_means(diffs, n_boot, rng)
    q = [50 * (1 - CI_LEVEL), 50 * (1 + CI_LEVEL)]
    slo, shi = np.percentile(boots, q, axis=0)
    lo, hi = np.percentile(np.abs(boots), q, axis=0)
    lo, hi = np.minimum(lo, errors), np.maximum(hi, errors)
    used = (slo > 0) | (shi < 0)
    p0 = drift.theoretical_p0 or 2.0
    cond = check_weak_rate_condition(T, drift.effective_l2, sigma, p0)
    rate, rate_ci, degenerate = math.nan, (math.nan, math.nan), True
    if used.sum() >= MIN_FIT_POINTS:
        x = np.log(deltas[used])
        logb = np.log(np.maximum(np.abs(boots[:, used]), np.finfo(float).tiny))
        var = logb.var(axis=0, ddof=1)
        w = 1.0 / np.maximum(var, 1e-300)
        rate = fit_rate(deltas[used], errors[used], w)
        slopes = _fit_rate_batch(x, logb, w)
        rate_ci = tuple(float(v) for v in np.percentile(slopes, q))
        degenerate = False
    return RateReport(
        drift=drift.name, f=f_name, T=float(T), delta_grid=np.asarray(deltas, dtype=np.float64),
        errors=errors, ci_low=lo, ci_high=hi, signed_ci_low=slo, signed_ci_high=shi,
        used_in_fit=used, fitted_rate=rate, fitted_rate_ci=rate_ci,
        theoretical_alpha=drift.theoretical_alpha, condition_pass=cond.passed,
        max_horizon=cond.max_horizon, n_paths=int(n), delta_ref=float(delta_ref),
        master_seed=int(seed), degenerate=degenerate,
    )


def default_delta_ref(T: float, deltas: Sequence[float]) -> float:
    return min(math.ldexp(T, -REF_EXPONENT), min(deltas) / 8.0)


def weak_error_curves(drift: DriftSpec, sigma: SigmaSpec, fs: Sequence[TestFunction], T: float,
                      delta_grid: Sequence[float], n_paths: int, seed: int, x0=(0.0,),
                      delta_ref: Optional[float] = None, n_workers: int = 1,
                      n_boot: int = N_BOOT) -> list[RateReport]:
    """One coupled simulation, one RateReport per test function."""
    if delta_ref is None:
        delta_ref = default_delta_ref(T, delta_grid)
    deltas = _check_delta_grid(T, delta_grid, delta_ref)
    cfg = SimConfig(T, float(deltas[0]), tuple(np.atleast_1d(x0)), n_paths, seed, n_workers)
    fine, coarse = em_coupled_grid(drift, sigma, cfg, deltas.tolist(), delta_ref)
    reports = []
    for f in fs:
        fine_f = np.asarray(f(fine), dtype=np.float64)
        coarse_f = np.stack([np.asarray(f(c), dtype=np.float64) for c in coarse])
        reports.append(rate_report_from_samples(
            fine_f, coarse_f, deltas, drift=drift, sigma=sigma, f_name=f.name, T=T,
            delta_ref=delta_ref, seed=seed, n_boot=n_boot,
        ))
    return reports


def weak_error_curve(drift: DriftSpec, sigma: SigmaSpec, f: TestFunction, T: float,
                     delta_grid: Sequence[float], n_paths: int, seed: int, x0=(0.0,),
                     delta_ref: Optional[float] = None, n_workers: int = 1,
                     n_boot: int = N_BOOT) -> RateReport:
    return weak_error_curves(drift, sigma, [f], T, delta_grid, n_paths, seed, x0,
                             delta_ref, n_workers, n_boot)[0]


def rate_vs_theory(report: RateReport) -> Verdict:
    """One-sided check: the observed decay must not be slower than alpha - 0.1."""
    if report.degenerate:
        return Verdict(NOT_APPLICABLE, None, "degenerate fit")
    if report.theoretical_alpha is None:
        return Verdict(NOT_APPLICABLE, None, "no theoretical rate for this drift")
    margin = report.fitted_rate_ci[0] - (report.theoretical_alpha - RATE_SLACK)
    return Verdict(PASS if margin >= 0 else FAIL, float(margin))


@dataclass(frozen=True)
class CrossCheck:
    direct: float
    direct_se: float
    weighted: float
    weighted_se: float
    z_score: float
    passed: bool
    skipped: bool = False
    reason: str = ""


def girsanov_cross_check(drift: DriftSpec, sigma: SigmaSpec, f: TestFunction, T: float,
                         delta: float, n_paths: int, seed: int = 0, x0=(0.0,),
                         n_workers: int = 1) -> CrossCheck:
    """Compare direct EM with the frozen-drift weighted estimator of E f(X_T^delta)."""
    check = novikov_check(drift, sigma, T)
    nan = math.nan
    if not check.passed:
        return CrossCheck(nan, nan, nan, nan, nan, False, True,
                          f"Novikov horizon check failed (lhs={check.lhs:.6g})")
    cfg = SimConfig(T, delta, tuple(np.atleast_1d(x0)), n_paths, seed, n_workers)
    direct_vals = np.asarray(f(em_terminal_batch(drift, sigma, cfg)), dtype=np.float64)
    direct = float(direct_vals.mean())
    direct_se = float(direct_vals.std(ddof=1) / math.sqrt(n_paths))
    w = weighted_expectation(drift, sigma, cfg, f, VARIANT_R2)
    joint = math.hypot(direct_se, w.stderr)
    diff = direct - w.value
    z = 0.0 if diff == 0 else (diff / joint if joint > 0 else math.inf)
    return CrossCheck(direct, direct_se, w.value, w.stderr, z, abs(z) <= 3.0)
