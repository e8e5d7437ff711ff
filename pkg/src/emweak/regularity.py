"""Numerical checks of the integrated regularity condition on 1-d drifts.

* ``l2_shift_modulus``: M(u) = int |b(x+u) - b(x)|^p dx by the midpoint rule.
* ``h2_integral_estimate``: the Gaussian-weighted double integral
  sup_z int int |b(y)-b(x)|^p0 exp(-|x-z|^2/s - |y-x|^2/r) / sqrt(s r) dx dy
  at one (z, s, r), by sampling X ~ N(z, s/2), Y - X ~ N(0, r/2).
* ``h2_fit``: log-log slopes in r of sup_z of the above, giving alpha_hat.
* ``gagliardo_seminorm``: the W^{beta,p} seminorm written as
  int M_p(u) |u|^{-1-beta p} du with the diagonal band |u| < h_min removed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from emweak.core import DriftSpec, EmweakError, InvalidConfigError

DEFAULT_MAX_SPACING = 2.0 ** -12
Z_POINTS = 41
MIN_H2_SAMPLES = 10_000

Drift1d = Union[DriftSpec, Callable[[np.ndarray], np.ndarray]]


class UnsupportedDriftError(EmweakError, ValueError):
    pass


class FitError(EmweakError, ValueError):
    pass


def _as_1d(drift: Drift1d) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(drift, DriftSpec):
        if drift.dim != 1:
            raise UnsupportedDriftError("regularity checks are 1-d only")
        return lambda x: drift(np.asarray(x, dtype=np.float64).reshape(-1, 1)).reshape(np.shape(x))
    return lambda x: np.asarray(drift(np.asarray(x, dtype=np.float64)), dtype=np.float64)


def _support(drift: Drift1d, support: Optional[tuple[float, float]]) -> tuple[float, float]:
    if support is None and isinstance(drift, DriftSpec):
        support = drift.support
    if support is None:
        raise UnsupportedDriftError("drift has no known compact support")
    lo, hi = float(support[0]), float(support[1])
    if not lo <= hi:
        raise UnsupportedDriftError(f"bad support {support}")
    return lo, hi


def _is_constant(drift: Drift1d) -> bool:
    return isinstance(drift, DriftSpec) and drift.constant


def l2_shift_modulus(drift: Drift1d, u: float, spacing: Optional[float] = None, p: float = 2.0,
                     support: Optional[tuple[float, float]] = None) -> float:
    """Midpoint-rule estimate of int |b(x+u) - b(x)|^p dx.

    The integrand vanishes outside the support fattened by |u|. The
    default spacing is min(|u|/16, 2**-12).
    """
    if u == 0 or _is_constant(drift):
        return 0.0
    lo, hi = _support(drift, support)
    b = _as_1d(drift)
    h = spacing if spacing is not None else min(abs(u) / 16.0, DEFAULT_MAX_SPACING)
    a, z = lo - abs(u), hi + abs(u)
    n = max(1, int(math.ceil((z - a) / h)))
    x = a + (np.arange(n) + 0.5) * ((z - a) / n)
    total = 0.0
    for part in np.array_split(x, max(1, n // 1_000_000)):
        total += float(np.sum(np.abs(b(part + u) - b(part)) ** p))
    return total * (z - a) / n


def _loglog_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares (slope, intercept) of log y on log x."""
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(intercept)


@dataclass(frozen=True)
class ModulusCurve:
    shifts: np.ndarray
    values: np.ndarray
    fitted_exponent: float
    fitted_constant: float
    degenerate: bool = False
    zero_shifts: tuple[float, ...] = ()
    bound_4u_ok: Optional[bool] = None


def modulus_curve(drift: Drift1d, u_grid: Sequence[float], support=None,
                  check_4u: Optional[bool] = None) -> ModulusCurve:
    """M(u) on ``u_grid`` with a power-law fit M(u) ~ C u**e.

    ``check_4u`` compares against the bound M(u) <= 4|u|; by default it is
    done for the SVC drift only.
    """
    u = np.asarray(u_grid, dtype=np.float64)
    if np.any(u <= 0):
        raise InvalidConfigError("shift grid must be positive")
    if _is_constant(drift):
        return ModulusCurve(u, np.zeros_like(u), math.nan, math.nan, True, tuple(u.tolist()))
    m = np.array([l2_shift_modulus(drift, float(v), support=support) for v in u])
    if check_4u is None:
        check_4u = isinstance(drift, DriftSpec) and drift.name == "svc"
    bound_ok = bool(np.all(m <= 4.0 * u)) if check_4u else None
    pos = m > 0
    zeros = tuple(u[~pos].tolist())
    if pos.sum() < 2:
        return ModulusCurve(u, m, math.nan, math.nan, True, zeros, bound_ok)
    e, c = _loglog_fit(u[pos], m[pos])
    return ModulusCurve(u, m, e, math.exp(c), False, zeros, bound_ok)


def h2_integral_mc(drift: Drift1d, p0: float, z: float, s: float, r: float,
                   n_samples: int = 100_000, seed=0) -> tuple[float, float]:
    """Estimate and standard error of the Gaussian-weighted double integral (d = 1).

    With X ~ N(z, s/2) and Y = X + N(0, r/2) the integral equals
    pi * E|b(Y) - b(X)|^p0. ``seed`` may be an int, a sequence of ints or
    a ``np.random.SeedSequence``.
    """
    if not (s > 0 and r > 0):
        raise InvalidConfigError("s and r must be positive")
    if n_samples < MIN_H2_SAMPLES:
        raise InvalidConfigError(f"need at least {MIN_H2_SAMPLES} samples")
    if _is_constant(drift):
        return 0.0, 0.0
    b = _as_1d(drift)
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((2, n_samples))
    x = z + math.sqrt(s / 2.0) * xi[0]
    y = x + math.sqrt(r / 2.0) * xi[1]
    g = np.abs(b(y) - b(x)) ** p0
    return math.pi * float(g.mean()), math.pi * float(g.std(ddof=1)) / math.sqrt(n_samples)


def h2_integral_estimate(drift: Drift1d, p0: float, z: float, s: float, r: float,
                         n_samples: int = 100_000, seed=0) -> float:
    return h2_integral_mc(drift, p0, z, s, r, n_samples, seed)[0]


def default_z_grid(drift: Drift1d, s: float, n: int = Z_POINTS) -> np.ndarray:
    """Probe centres over the support (or the Hoelder centre) fattened by 3 sqrt(s)."""
    if isinstance(drift, DriftSpec) and drift.support is not None:
        lo, hi = drift.support
    elif isinstance(drift, DriftSpec) and "center" in drift.params:
        lo = hi = float(drift.params["center"])
    else:
        lo = hi = 0.0
    pad = 3.0 * math.sqrt(s)
    return np.linspace(lo - pad, hi + pad, n)


PHI_FREE = "free"
PHI_CONSTANT = "constant"

FREE_S_GRID = (0.25, 0.5, 1.0)
CONSTANT_S_GRID = (2.0 ** -30, 2.0 ** -20, 2.0 ** -10, 2.0 ** -4, 1.0)
DEFAULT_R_GRID = tuple(2.0 ** -k for k in range(14, 5, -2))


@dataclass(frozen=True)
class H2Fit:
    p0: float
    phi_model: str
    r_grid: np.ndarray
    s_grid: np.ndarray
    z_grid: np.ndarray  # (n_s, n_z): probe centres depend on s
    integral_table: np.ndarray  # (n_s, n_r, n_z)
    alpha_hat: float
    alpha_by_s: np.ndarray
    phi_hat: np.ndarray
    phi_exponent: float
    degenerate: bool = False
    sup_table: np.ndarray = field(default=None, repr=False)  # (n_s, n_r)


def h2_table(drift: Drift1d, p0: float, s_grid, r_grid, z_grid=None,
             n_samples: int = 100_000, seed: int = 0):
    """D(z, s, r) on the grids; returns (z grid per s, table of shape (n_s, n_r, n_z)).

    Each (s, r) cell has its own seed; the z probes of a cell share its
    Gaussian draws so that the sup over z is not inflated by noise.
    """
    s_arr = np.asarray(s_grid, dtype=np.float64)
    r_arr = np.asarray(r_grid, dtype=np.float64)
    zs = np.array([np.asarray(z_grid, dtype=np.float64) if z_grid is not None
                   else default_z_grid(drift, s) for s in s_arr])
    table = np.zeros((s_arr.size, r_arr.size, zs.shape[1]))
    if _is_constant(drift):
        return zs, table
    for i, s in enumerate(s_arr):
        for j, r in enumerate(r_arr):
            for k, z in enumerate(zs[i]):
                table[i, j, k] = h2_integral_estimate(
                    drift, p0, float(z), float(s), float(r), n_samples,
                    np.random.SeedSequence([seed, i, j]),
                )
    return zs, table


def h2_fit(drift: Drift1d, p0: float = 2.0, s_grid: Optional[Sequence[float]] = None,
           r_grid: Sequence[float] = DEFAULT_R_GRID, z_grid: Optional[Sequence[float]] = None,
           n_samples: int = 100_000, seed: int = 0, phi_model: str = PHI_FREE) -> H2Fit:
    """Fit alpha in sup_z D(z, s, r) <= (phi(s) r**alpha)**p0 for r in (0, 1].

    ``phi_model="free"`` lets phi depend on s: for each s the slope of
    log sup_z D**(1/p0) against log r is taken over the points r <= s
    (the r -> 0 behaviour at fixed s), and ``alpha_hat`` is the smallest
    slope over s. ``phi_model="constant"`` asks for one phi for all s:
    the slope is taken on sup over s and z, and the s grid should reach
    down to very small s.

    ``phi_hat[i]`` is max_r sup_z D**(1/p0) / r**alpha_hat at
    ``s_grid[i]`` and ``phi_exponent`` its log-log slope in s.
    """
    if phi_model not in (PHI_FREE, PHI_CONSTANT):
        raise InvalidConfigError(f"unknown phi model {phi_model!r}")
    if s_grid is None:
        s_grid = FREE_S_GRID if phi_model == PHI_FREE else CONSTANT_S_GRID
    s_arr = np.asarray(s_grid, dtype=np.float64)
    r_arr = np.asarray(r_grid, dtype=np.float64)
    if np.any(s_arr <= 0) or np.any(r_arr <= 0):
        raise InvalidConfigError("s and r grids must be positive")
    r_arr = np.sort(r_arr[r_arr <= 1.0])
    if r_arr.size < 3:
        raise FitError("need at least 3 r points in (0, 1]")
    zs, table = h2_table(drift, p0, s_arr, r_arr, z_grid, n_samples, seed)
    sup = table.max(axis=2)
    if np.all(sup == 0):
        nan = np.full(s_arr.size, math.nan)
        return H2Fit(p0, phi_model, r_arr, s_arr, zs, table, math.nan, nan, nan, math.nan, True, sup)
    root = sup ** (1.0 / p0)
    slopes = np.full(s_arr.size, math.nan)
    if phi_model == PHI_FREE:
        for i, s in enumerate(s_arr):
            use = (root[i] > 0) & (r_arr <= s)
            if use.sum() >= 3:
                slopes[i] = _loglog_fit(r_arr[use], root[i, use])[0]
        if np.all(np.isnan(slopes)):
            raise FitError("fewer than 3 usable r <= s points for every s")
        alpha = float(np.nanmin(slopes))
    else:
        envelope = root.max(axis=0)
        use = envelope > 0
        if use.sum() < 3:
            raise FitError("fewer than 3 usable r points")
        alpha = _loglog_fit(r_arr[use], envelope[use])[0]
        slopes[:] = alpha
    phi = (root / r_arr[None, :] ** alpha).max(axis=1)
    phi_exp = _loglog_fit(s_arr, phi)[0] if s_arr.size >= 2 and np.all(phi > 0) else math.nan
    return H2Fit(p0, phi_model, r_arr, s_arr, zs, table, alpha, slopes, phi, phi_exp, False, sup)


@dataclass(frozen=True)
class GagliardoEstimate:
    value: float
    h_min: float
    value_half: float
    value_quarter: float
    divergent: bool


def _gagliardo_truncated(drift: Drift1d, beta: float, p: float, h_min: float,
                         lo: float, hi: float, n_per_octave: int) -> float:
    width = hi - lo
    u_far = 2.0 * width + 1.0
    # for |u| >= width the supports no longer overlap: M_p(u) = 2 int |b|^p
    n_oct = max(1, int(math.ceil(math.log2(u_far / h_min))))
    edges = h_min * 2.0 ** (np.arange(n_oct * n_per_octave + 1) / n_per_octave)
    edges[-1] = u_far
    mids = np.sqrt(edges[:-1] * edges[1:])
    widths = np.diff(edges)
    m = np.array([l2_shift_modulus(drift, float(u), p=p, support=(lo, hi)) for u in mids])
    near = float(np.sum(m * mids ** (-1.0 - beta * p) * widths))
    b = _as_1d(drift)
    n = 1 << 16
    x = lo + (np.arange(n) + 0.5) * (width / n)
    mass = float(np.sum(np.abs(b(x)) ** p)) * width / n
    far = 2.0 * mass * u_far ** (-beta * p) / (beta * p)
    # both signs of u
    return 2.0 * (near + far)


def gagliardo_seminorm(drift: Drift1d, beta: float, p: float, h_min: float = 2.0 ** -10,
                       support: Optional[tuple[float, float]] = None,
                       n_per_octave: int = 8) -> GagliardoEstimate:
    """Truncated W^{beta,p} seminorm of a compactly supported 1-d drift.

    The double integral is rewritten as int M_p(u) |u|^{-1-beta p} du and
    evaluated for |u| >= h_min, with the closed-form tail where the shifted
    supports are disjoint. The estimate is repeated at h_min/2 and h_min/4;
    the seminorm is flagged divergent if halving the cutoff more than
    doubles the value or if the increments from successive halvings do
    not shrink.
    """
    if beta <= 0 or p < 1:
        raise InvalidConfigError("need beta > 0 and p >= 1")
    if _is_constant(drift):
        return GagliardoEstimate(0.0, h_min, 0.0, 0.0, False)
    lo, hi = _support(drift, support)
    vals = [
        _gagliardo_truncated(drift, beta, p, h, lo, hi, n_per_octave) ** (1.0 / p)
        for h in (h_min, h_min / 2, h_min / 4)
    ]
    v0, v1, v2 = vals
    inc1, inc2 = v1 - v0, v2 - v1
    divergent = v1 > 2.0 * v0 or (inc1 > 0 and inc2 >= inc1)
    return GagliardoEstimate(v0, h_min, v1, v2, divergent)
