"""Drift functions: the fat Cantor (Smith-Volterra-Cantor) drift, Hoelder,
indicator, linear and zero drifts, each packaged as a :class:`DriftSpec`.

SVC geometry. At level ``n`` every retained closed interval of length
``l_{n-1}`` loses its open middle of length ``4**-n``, leaving two halves of
length ``l_n = (2**-n + 4**-n) / 2``. All endpoints through level ``N`` are
integers over ``2**(2N+1)``, which is how they are stored here.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from emweak.core import DriftSpec, EmweakError, InvalidConfigError

MAX_SVC_DEPTH = 30
DEFAULT_SVC_DEPTH = 25


class CatalogError(EmweakError, KeyError):
    pass


class DepthLimitError(EmweakError, ValueError):
    pass


def _check_depth(n: int) -> None:
    if int(n) != n or n < 1:
        raise InvalidConfigError(f"SVC level must be a positive integer, got {n}")
    if n > MAX_SVC_DEPTH:
        raise DepthLimitError(f"SVC level {n} exceeds the exact dyadic limit {MAX_SVC_DEPTH}")


def _scale_bits(depth: int) -> int:
    return 2 * depth + 1


def _retained_len(n: int, bits: int) -> int:
    """l_n * 2**bits."""
    return (1 << (bits - n - 1)) + (1 << (bits - 2 * n - 1))


def _gap_len(n: int, bits: int) -> int:
    """4**-n * 2**bits."""
    return 1 << (bits - 2 * n)


@dataclass(frozen=True, slots=True)
class SvcInterval:
    """Removed open interval I_{level,index} = (left_num, right_num) / 2**bits."""

    level: int
    index: int
    left_num: int
    right_num: int
    bits: int

    @property
    def left(self) -> Fraction:
        return Fraction(self.left_num, 1 << self.bits)

    @property
    def right(self) -> Fraction:
        return Fraction(self.right_num, 1 << self.bits)

    @property
    def length(self) -> Fraction:
        return Fraction(self.right_num - self.left_num, 1 << self.bits)

    def contains(self, x) -> bool:
        return self.left < Fraction(x) < self.right

    def __str__(self):
        return f"({self.left},{self.right})"


def svc_removed_intervals(level: int) -> list[SvcInterval]:
    """The 2**(level-1) open intervals removed at ``level``, left to right."""
    _check_depth(level)
    bits = _scale_bits(level)
    lefts = [0]
    for n in range(1, level):
        ln = _retained_len(n, bits)
        g = _gap_len(n, bits)
        lefts = [a + off for a in lefts for off in (0, ln + g)]
    ln = _retained_len(level, bits)
    g = _gap_len(level, bits)
    return [
        SvcInterval(level, j, a + ln, a + ln + g, bits)
        for j, a in enumerate(lefts, start=1)
    ]


@dataclass(frozen=True)
class SvcLocation:
    """Where a point sits relative to the depth-N construction.

    ``kind`` is ``"outside"``, ``"A"`` (never removed through depth N) or
    ``"I"`` with ``interval`` the removed interval containing the point.
    """

    kind: str
    interval: Optional[SvcInterval] = None

    @property
    def tag(self) -> str:
        if self.kind == "I":
            return f"I({self.interval.level},{self.interval.index})"
        return self.kind


def svc_locate(x: float, max_depth: int = DEFAULT_SVC_DEPTH) -> SvcLocation:
    _check_depth(max_depth)
    fx = Fraction(x)
    if fx < 0 or fx > 1:
        return SvcLocation("outside")
    bits = _scale_bits(max_depth)
    scaled = fx * (1 << bits)
    a, k = 0, 1
    for n in range(1, max_depth + 1):
        lo = a + _retained_len(n, bits)
        hi = lo + _gap_len(n, bits)
        if lo < scaled < hi:
            return SvcLocation("I", SvcInterval(n, k, lo, hi, bits))
        if scaled >= hi:
            a = hi
            k = 2 * k
        else:
            k = 2 * k - 1
    return SvcLocation("A")


def svc_value(loc: SvcLocation) -> float:
    if loc.kind == "outside":
        return 0.0
    if loc.kind == "A":
        return 1.0
    return 1.0 - 2.0 ** -(loc.interval.level + loc.interval.index)


def svc_eval(x, max_depth: int = DEFAULT_SVC_DEPTH):
    """Truncated SVC drift b_N(x); scalar in, float out, array in, array out.

    Exact for every float input: comparisons against the dyadic endpoints
    are done on the integer part and the fractional remainder of
    ``x * 2**(2N+1)``.
    """
    _check_depth(max_depth)
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        return svc_value(svc_locate(float(arr), max_depth))
    flat = arr.ravel()
    out = np.zeros(flat.shape, dtype=np.float64)
    idx = np.flatnonzero((flat >= 0.0) & (flat <= 1.0))
    out[idx] = 1.0
    if idx.size == 0:
        return out.reshape(arr.shape)
    bits = _scale_bits(max_depth)
    scaled = np.ldexp(flat[idx], bits)
    xi = np.floor(scaled).astype(np.int64)
    has_frac = scaled > xi
    a = np.zeros(idx.size, dtype=np.int64)
    k = np.ones(idx.size, dtype=np.int64)
    for n in range(1, max_depth + 1):
        lo = a + _retained_len(n, bits)
        hi = lo + _gap_len(n, bits)
        above_lo = (xi > lo) | ((xi == lo) & has_frac)
        below_hi = xi < hi
        gap = above_lo & below_hi
        if gap.any():
            out[idx[gap]] = 1.0 - np.ldexp(1.0, -(n + k[gap]))
            keep = ~gap
            idx, xi, has_frac, a, k = idx[keep], xi[keep], has_frac[keep], a[keep], k[keep]
            lo, below_hi = lo[keep], below_hi[keep]
            if idx.size == 0:
                break
        right = ~below_hi
        a = np.where(right, lo + _gap_len(n, bits), a)
        k = 2 * k - 1 + right
    return out.reshape(arr.shape)


@dataclass(frozen=True)
class HolderDrift:
    beta: float
    scale: float = 1.0
    center: float = 0.0

    def __post_init__(self):
        if not (0 < self.beta <= 1):
            raise InvalidConfigError(f"beta must lie in (0, 1], got {self.beta}")
        if self.scale < 0:
            raise InvalidConfigError("Hoelder scale must be nonnegative")

    @property
    def seminorm(self) -> float:
        """Sharp Hoelder constant of the odd profile, attained at x - c = -(y - c)."""
        return self.scale * 2.0 ** (1.0 - self.beta)


def holder_eval(spec: HolderDrift, x):
    """L * sign(x - c) * |x - c|**beta, componentwise."""
    u = np.asarray(x, dtype=np.float64) - spec.center
    return spec.scale * np.sign(u) * np.abs(u) ** spec.beta


def _zero(_params) -> DriftSpec:
    return DriftSpec(
        "zero", lambda x: np.zeros_like(x, dtype=np.float64), 0.0, 0.0,
        bounded=True, sup_norm=0.0, constant=True, params={},
    )


def _linear(params) -> DriftSpec:
    a = float(params.get("a", 0.0))
    lam = float(params.get("lam", params.get("lambda", 1.0)))
    if lam < 0:
        raise InvalidConfigError("linear drift needs lam >= 0")

    def b(x):
        return a - lam * np.asarray(x, dtype=np.float64)

    return DriftSpec(
        "linear", b, abs(a), lam,
        bounded=(lam == 0.0), sup_norm=abs(a) if lam == 0.0 else None,
        theoretical_alpha=0.5, theoretical_p0=2.0,
        constant=(lam == 0.0), params={"a": a, "lam": lam},
    )


def _holder(params) -> DriftSpec:
    spec = HolderDrift(
        float(params.get("beta", 0.5)),
        float(params.get("scale", params.get("L", 1.0))),
        float(params.get("center", 0.0)),
    )

    def b(x):
        return holder_eval(spec, x)

    # |x - c|**beta <= 1 + |x - c| <= 1 + |c| + |x|
    return DriftSpec(
        "holder", b, spec.scale * (1.0 + abs(spec.center)), spec.scale,
        theoretical_alpha=spec.beta / 2.0, theoretical_p0=2.0,
        sublinear=spec.beta < 1.0,
        params={"beta": spec.beta, "scale": spec.scale, "center": spec.center},
    )


def _indicator(params) -> DriftSpec:
    a1 = float(params.get("a1", 0.0))
    a2 = float(params.get("a2", 1.0))
    if not a1 < a2:
        raise InvalidConfigError("indicator drift needs a1 < a2")

    def b(x):
        x = np.asarray(x, dtype=np.float64)
        return ((x > a1) & (x < a2)).astype(np.float64)

    return DriftSpec(
        "indicator", b, 1.0, 0.0, bounded=True, sup_norm=1.0,
        theoretical_alpha=0.25, theoretical_p0=2.0, support=(a1, a2),
        params={"a1": a1, "a2": a2},
    )


def _svc(params) -> DriftSpec:
    depth = int(params.get("depth", DEFAULT_SVC_DEPTH))
    _check_depth(depth)

    def b(x):
        return svc_eval(x, depth)

    return DriftSpec(
        "svc", b, 1.0, 0.0, bounded=True, sup_norm=1.0,
        theoretical_alpha=0.25, theoretical_p0=2.0, support=(0.0, 1.0),
        params={"depth": depth},
    )


CATALOG = {
    "zero": _zero,
    "linear": _linear,
    "holder": _holder,
    "indicator": _indicator,
    "svc": _svc,
}


def catalog_get(name: str, **params) -> DriftSpec:
    """Build a drift by name; see ``CATALOG`` for the known names."""
    try:
        factory = CATALOG[name]
    except KeyError:
        raise CatalogError(f"unknown drift {name!r}; known: {', '.join(sorted(CATALOG))}") from None
    return factory(params)
