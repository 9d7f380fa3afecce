"""Shared numerical kernels: bracketed root finding, adaptive quadrature,
log-space finite differences.

Everything here is a pure function of its arguments and safe to call
concurrently.  All routines accept plain floats; the root solver also
accepts numpy arrays and solves elementwise, which the rest of the
package relies on for speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Tolerance",
    "DEFAULT_TOL",
    "ConvergenceError",
    "EvaluationError",
    "solve_alpha",
    "integrate",
    "log_derivative",
]


class ConvergenceError(RuntimeError):
    """Iteration budget exhausted before reaching the requested tolerance."""


class EvaluationError(RuntimeError):
    """A user-supplied function returned a non-finite value."""


@dataclass(frozen=True)
class Tolerance:
    """Accuracy targets shared by the iterative kernels.

    abs_tol / rel_tol are dimensionless; max_iter caps Newton iterations
    in the root solver and refinement rounds in the quadrature.
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_iter: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


DEFAULT_TOL = Tolerance()

# Residual is written with expm1 so g(a) = e^{-a} + x a - 1 stays accurate
# near a = 0, where the naive form loses all significant digits.


def _alpha_residual(a, x):
    return np.expm1(-a) + x * a


def solve_alpha(x, tol: Tolerance = DEFAULT_TOL):
    """Strictly positive root of e^{-a} + x*a - 1 = 0 for x in (0, 1].

    a = 0 always solves the equation and is excluded; for x in (0, 1)
    there is exactly one positive root, which this returns.  At x = 1 the
    positive root collapses into the trivial one, handled as a closed-form
    special case returning 0.0.

    Accepts a float or an ndarray (solved elementwise).  Uses safeguarded
    Newton within the bracket (0, 2/x]: the residual is negative just
    above 0 and positive at 2/x, and is convex in a, so Newton started at
    the upper end converges monotonically; any step leaving the bracket
    falls back to bisection.
    """
    scalar = np.isscalar(x) or (isinstance(x, np.ndarray) and x.ndim == 0)
    xa = np.asarray(x, dtype=float)
    if xa.size and (np.any(xa <= 0.0) or np.any(xa > 1.0) or not np.all(np.isfinite(xa))):
        raise ValueError(f"congestion argument must lie in (0, 1], got {x!r}")

    u = 1.0 - xa
    # Series start near x = 1 (root ~ 2u), reciprocal asymptote for small x
    # (root ~ 1/x from below).  Both sit close enough for fast Newton.
    with np.errstate(over="ignore"):
        a = np.where(
            xa > 0.5,
            2.0 * u * (1.0 + 2.0 * u / 3.0 + 4.0 * u * u / 9.0),
            (1.0 - np.exp(-1.0 / np.maximum(xa, 1e-300))) / np.maximum(xa, 1e-300),
        )
    lo = np.zeros_like(xa)
    hi = 2.0 / xa
    a = np.clip(a, lo + 1e-300, hi)
    g = _alpha_residual(a, xa)
    converged = np.abs(g) <= tol.abs_tol
    for _ in range(tol.max_iter):
        if converged.all():
            break
        lo = np.where(g < 0.0, np.maximum(lo, a), lo)
        hi = np.where(g > 0.0, np.minimum(hi, a), hi)
        gp = xa - np.exp(-a)
        with np.errstate(divide="ignore", invalid="ignore"):
            a_new = a - g / gp
        bad = ~np.isfinite(a_new) | (a_new <= lo) | (a_new >= hi)
        a_new = np.where(bad, 0.5 * (lo + hi), a_new)
        a = np.where(converged, a, a_new)
        g = _alpha_residual(a, xa)
        converged = np.abs(g) <= tol.abs_tol
    if not converged.all():
        raise ConvergenceError(
            f"root residual {np.max(np.abs(g)):.3e} above {tol.abs_tol:.1e} "
            f"after {tol.max_iter} iterations"
        )
    a = np.where(xa == 1.0, 0.0, a)
    return float(a) if scalar else a


def _eval_on_grid(f, xs):
    """Evaluate f on an abscissa array, tolerating scalar-only callables."""
    try:
        ys = np.asarray(f(xs), dtype=float)
    except (TypeError, ValueError):
        ys = np.asarray([float(f(float(xi))) for xi in xs], dtype=float)
    if ys.shape != xs.shape:
        if ys.ndim == 0:  # constant integrand returned a scalar
            ys = np.full_like(xs, float(ys))
        else:
            raise EvaluationError("integrand returned a mismatched shape")
    if not np.all(np.isfinite(ys)):
        bad = xs[~np.isfinite(ys)][0]
        raise EvaluationError(f"integrand is non-finite at x = {bad!r}")
    return ys


_GL_ORDER = 16
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)
_MAX_PANELS = 1 << 15


def _composite_gl(f, a, b, panels):
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
    half = 0.5 * (edges[1] - edges[0])
    xs = (mid + half * _GL_NODES[None, :]).ravel()
    ys = _eval_on_grid(f, xs).reshape(panels, _GL_ORDER)
    return float(half * np.sum(ys @ _GL_WEIGHTS))


def integrate(f, a, b, tol: Tolerance = DEFAULT_TOL):
    """Adaptive composite Gauss-Legendre quadrature of f over [a, b].

    Panel count doubles until two successive refinements agree to
    max(abs_tol, rel_tol * |I|); subdivision depth is capped by
    tol.max_iter and an internal panel budget.  Exact for polynomials up
    to degree 2*16 - 1 on the first pass.  f may be vectorized over
    ndarrays or scalar-only.
    """
    a = float(a)
    b = float(b)
    if not (np.isfinite(a) and np.isfinite(b)):
        raise ValueError("integration bounds must be finite")
    if a > b:
        raise ValueError(f"require a <= b, got a={a}, b={b}")
    if a == b:
        return 0.0
    panels = 8
    prev = _composite_gl(f, a, b, panels)
    for _ in range(tol.max_iter):
        panels *= 2
        if panels > _MAX_PANELS:
            break
        cur = _composite_gl(f, a, b, panels)
        if abs(cur - prev) <= max(tol.abs_tol, tol.rel_tol * abs(cur)):
            return cur
        prev = cur
    raise ConvergenceError(
        f"quadrature did not stabilize on [{a}, {b}] within the panel budget"
    )


def log_derivative(g, x0, step=1e-3):
    """Central-difference d log g / d log x at x0 > 0.

    Second-order accurate in the (relative) step; g must be positive and
    finite at x0 * exp(+-step).
    """
    x0 = float(x0)
    step = float(step)
    if x0 <= 0.0:
        raise ValueError("x0 must be positive")
    if not (0.0 < step <= 0.1):
        raise ValueError("step must lie in (0, 0.1]")
    hi = g(x0 * np.exp(step))
    lo = g(x0 * np.exp(-step))
    if not (np.isfinite(hi) and np.isfinite(lo) and hi > 0.0 and lo > 0.0):
        raise EvaluationError(
            f"g must be positive and finite near x0={x0}: got {lo!r}, {hi!r}"
        )
    return (np.log(hi) - np.log(lo)) / (2.0 * step)
