"""Gaussian special functions and a deterministic scalar maximizer.

Everything here accepts numpy arrays so that the Monte Carlo engine can
evaluate thousands of trials at once; scalar inputs return Python floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

MAX_ITER = 200


class OptimizationError(ValueError):
    """Raised when the objective returns a non-finite value."""

    def __init__(self, point, value):
        super().__init__(f"objective is not finite at x={point!r} (value={value!r})")
        self.point = point
        self.value = value


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError(f"interval bounds must be finite, got [{self.lo}, {self.hi}]")
        if not self.lo < self.hi:
            raise ValueError(f"interval requires lo < hi, got [{self.lo}, {self.hi}]")


def _scalar_or_array(out, like):
    if np.ndim(like) == 0:
        return float(out)
    return out


def _reject_nan(z):
    if np.any(np.isnan(z)):
        raise ValueError("NaN passed to a Gaussian special function")


def q_tail(z):
    """Standard normal tail probability P(Z > z).

    Evaluated as erfc(z/sqrt(2))/2, which keeps full relative precision
    in the upper tail and saturates cleanly to 1 and 0 at -inf and +inf.
    """
    z = np.asarray(z, dtype=float)
    _reject_nan(z)
    return _scalar_or_array(0.5 * special.erfc(z * _INV_SQRT2), z)


def normal_pdf(z):
    z = np.asarray(z, dtype=float)
    _reject_nan(z)
    return _scalar_or_array(_INV_SQRT2PI * np.exp(-0.5 * z * z), z)


def q_tail_inverse(p):
    """Inverse of :func:`q_tail` on the open unit interval."""
    p = np.asarray(p, dtype=float)
    _reject_nan(p)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError(f"q_tail_inverse needs 0 < p < 1, got {p}")
    # Q^{-1}(p) = -Phi^{-1}(p); ndtri is accurate for small p.
    return _scalar_or_array(-special.ndtri(p), p)


def golden_section_max(
    f: Callable[[np.ndarray], np.ndarray],
    lo,
    hi,
    tol: float = 1e-6,
    max_iter: int = MAX_ITER,
):
    """Vectorized golden-section search for the maximum of ``f``.

    ``lo`` and ``hi`` are arrays of equal shape, one bracket per problem;
    ``f`` must map an array of that shape to values of the same shape.
    Returns ``(argmax, max)`` arrays.

    The search stops once every bracket is narrower than ``tol`` or after
    ``max_iter`` shrink steps. The reported point is the midpoint of the
    final bracket, unless an endpoint of the original domain scores
    strictly higher (boundary maxima are returned exactly).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)

    def evaluate(x):
        v = np.asarray(f(x), dtype=float)
        bad = ~np.isfinite(v)
        if np.any(bad):
            idx = np.argwhere(bad)[0]
            raise OptimizationError(float(np.broadcast_to(x, v.shape)[tuple(idx)]), float(v[tuple(idx)]))
        return v

    f_lo = evaluate(lo)
    f_hi = evaluate(hi)

    a, b = lo.copy(), hi.copy()
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = evaluate(c), evaluate(d)
    for _ in range(max_iter):
        active = b - a > tol
        if not np.any(active):
            break
        # keep [a, d] when f(c) >= f(d), otherwise [c, b]
        left = fc >= fd
        b_new = np.where(left, d, b)
        a_new = np.where(left, a, c)
        d_new = np.where(left, c, a_new + _GOLDEN * (b_new - a_new))
        c_new = np.where(left, b_new - _GOLDEN * (b_new - a_new), d)
        probe = np.where(left, c_new, d_new)
        fp = evaluate(np.where(active, probe, c))
        fc_new = np.where(left, fp, fd)
        fd_new = np.where(left, fc, fp)
        # converged brackets stay frozen so results never depend on batch mates
        a, b = np.where(active, a_new, a), np.where(active, b_new, b)
        c, d = np.where(active, c_new, c), np.where(active, d_new, d)
        fc, fd = np.where(active, fc_new, fc), np.where(active, fd_new, fd)

    x = 0.5 * (a + b)
    fx = evaluate(x)
    use_lo = f_lo > fx
    x = np.where(use_lo, lo, x)
    fx = np.where(use_lo, f_lo, fx)
    use_hi = f_hi > fx
    x = np.where(use_hi, hi, x)
    fx = np.where(use_hi, f_hi, fx)
    return x, fx


def maximize_scalar(f: Callable[[float], float], domain: Interval, tol: float = 1e-8):
    """Maximize a unimodal scalar function over ``domain``.

    Returns ``(argmax, max)``. Deterministic: identical inputs give
    bit-identical output. On a plateau every comparison is a tie, the bracket
    collapses towards ``domain.lo`` and the midpoint of that final bracket is
    returned.
    """

    def vf(x):
        return np.array([f(float(xi)) for xi in np.ravel(x)]).reshape(np.shape(x))

    x, fx = golden_section_max(vf, np.array([domain.lo]), np.array([domain.hi]), tol=tol)
    return float(x[0]), float(fx[0])
