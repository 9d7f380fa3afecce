"""User side of the record-keeping market: wait times, equilibrium fee
bids, the average-fee curve psi(rho), its congestion elasticity, and the
distribution-free elasticity bound.

Conventions
-----------
* Wait costs c are USD per unit time, drawn from a distribution on
  [0, c_bar] with cdf F and density f.
* Congestion rho = lambda / (mu * S) must lie in (0, 1).
* The wait-time kernel is written as W(c) = w(rho * (1 - F(c))) / mu,
  where w(x) = 1 / (1 - (1 + a(x)) e^{-a(x)}) and a(x) is the positive
  root from numerics.solve_alpha.  w(0) = 1 by the a -> infinity limit,
  so the highest-cost user waits exactly one expected block time.
* The average fee per capacity slot is
      psi(rho) = rho * integral (Fbar(c) - c f(c)) W(c) dc
  and identically rho * integral tf(c) dF(c), the fee-weighted form;
  both are exposed and tested against each other.

Because integral (Fbar - c f) dc == 0 for any distribution on [0, c_bar],
psi integrands are evaluated against (w - 1) rather than w: the two are
mathematically identical but the former avoids catastrophic cancellation
at low congestion, where w - 1 is (super)exponentially small.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import DEFAULT_TOL, Tolerance, integrate, solve_alpha

__all__ = [
    "CongestionOverflowError",
    "WaitCostDistribution",
    "CongestionPoint",
    "FeeSchedule",
    "wait_time",
    "fee",
    "psi",
    "psi_via_fees",
    "epsilon",
    "epsilon_bar",
    "fee_schedule",
]


class CongestionOverflowError(RuntimeError):
    """Demand meets or exceeds service capacity: the system cannot clear."""


# ---------------------------------------------------------------------------
# wait-cost distributions
# ---------------------------------------------------------------------------


def _monotone_cubic_coeffs(xk, yk):
    """Fritsch-Carlson slopes for a monotone C^1 interpolant of (xk, yk)."""
    h = np.diff(xk)
    delta = np.diff(yk) / h
    m = np.empty_like(yk)
    m[1:-1] = 0.5 * (delta[:-1] + delta[1:])
    m[0] = delta[0]
    m[-1] = delta[-1]
    for i in range(len(delta)):
        if delta[i] == 0.0:
            m[i] = m[i + 1] = 0.0
    # limit slopes so the cubic stays monotone on every interval
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(delta != 0.0, m[:-1] / delta, 0.0)
        b = np.where(delta != 0.0, m[1:] / delta, 0.0)
    r = a * a + b * b
    scale = np.where(r > 9.0, 3.0 / np.sqrt(np.maximum(r, 1e-300)), 1.0)
    m[:-1] = np.where(delta != 0.0, m[:-1] * scale, m[:-1])
    m[1:] = np.where(delta != 0.0, m[1:] * scale, m[1:])
    return m


class WaitCostDistribution:
    """Immutable distribution of user delay costs on [0, c_bar].

    Use the constructors `uniform`, `truncated_exponential`, or
    `from_table` rather than instantiating directly.  Instances are safe
    to share across threads.
    """

    def __init__(self, cdf, pdf, c_bar, kind, quantile=None, check_density=True):
        self._cdf = cdf
        self._pdf = pdf
        self.c_bar = float(c_bar)
        self.kind = str(kind)
        self._quantile = quantile
        if self.c_bar <= 0:
            raise ValueError("c_bar must be positive")
        self._validate(check_density)

    def _validate(self, check_density):
        grid = np.linspace(0.0, self.c_bar, 513)
        Fg = self.cdf(grid)
        if abs(Fg[0]) > 1e-8 or abs(Fg[-1] - 1.0) > 1e-8:
            raise ValueError("cdf must satisfy F(0) = 0 and F(c_bar) = 1")
        if np.any(np.diff(Fg) < -1e-12):
            raise ValueError("cdf must be non-decreasing")
        if np.any(self.pdf(grid) < -1e-12):
            raise ValueError("density must be non-negative")
        if check_density:
            mass = integrate(self._pdf, 0.0, self.c_bar,
                             Tolerance(abs_tol=1e-12, rel_tol=1e-12, max_iter=40))
            if abs(mass - 1.0) > 1e-8:
                raise ValueError(f"density integrates to {mass!r}, expected 1")

    def cdf(self, c):
        return np.asarray(self._cdf(np.asarray(c, dtype=float)), dtype=float)

    def pdf(self, c):
        return np.asarray(self._pdf(np.asarray(c, dtype=float)), dtype=float)

    def sf(self, c):
        """Survival function 1 - F(c)."""
        return 1.0 - self.cdf(c)

    def quantile(self, u):
        """Inverse cdf, used for inverse-transform sampling."""
        u = np.asarray(u, dtype=float)
        if np.any((u < 0.0) | (u > 1.0)):
            raise ValueError("quantile argument must lie in [0, 1]")
        if self._quantile is not None:
            return np.asarray(self._quantile(u), dtype=float)
        grid = np.linspace(0.0, self.c_bar, 4097)
        return np.interp(u, self.cdf(grid), grid)

    @property
    def mean(self):
        return float(integrate(lambda c: c * self.pdf(c), 0.0, self.c_bar))

    @classmethod
    def uniform(cls, c_bar=1.0):
        c_bar = float(c_bar)

        def cdf(c):
            return np.clip(c / c_bar, 0.0, 1.0)

        def pdf(c):
            c = np.asarray(c, dtype=float)
            return np.where((c >= 0.0) & (c <= c_bar), 1.0 / c_bar, 0.0)

        return cls(cdf, pdf, c_bar, "uniform", quantile=lambda u: c_bar * u)

    @classmethod
    def truncated_exponential(cls, rate=1.0, c_bar=1.0):
        rate = float(rate)
        c_bar = float(c_bar)
        if rate <= 0:
            raise ValueError("rate must be positive")
        norm = -np.expm1(-rate * c_bar)

        def cdf(c):
            return -np.expm1(-rate * np.clip(c, 0.0, c_bar)) / norm

        def pdf(c):
            c = np.asarray(c, dtype=float)
            inside = (c >= 0.0) & (c <= c_bar)
            return np.where(inside, rate * np.exp(-rate * np.clip(c, 0.0, c_bar)) / norm, 0.0)

        def quantile(u):
            return -np.log1p(-u * norm) / rate

        return cls(cdf, pdf, c_bar, "truncated-exponential", quantile=quantile)

    @classmethod
    def from_table(cls, source):
        """Tabulated distribution from two columns (c, F(c)).

        `source` is a path to a whitespace/comma-delimited text file or an
        (n, 2) array.  The table must start at (0, 0), end at (c_bar, 1),
        and be strictly increasing in c and non-decreasing in F; a
        monotone C^1 interpolant supplies the cdf and its density.
        """
        data = np.loadtxt(source, delimiter=None)
        data = np.atleast_2d(np.asarray(data, dtype=float))
        if data.shape[1] != 2 or data.shape[0] < 2:
            raise ValueError("table must have two columns and at least two rows")
        ck, Fk = data[:, 0], data[:, 1]
        if np.any(np.diff(ck) <= 0.0):
            raise ValueError("table abscissae must be strictly increasing")
        if np.any(np.diff(Fk) < 0.0):
            raise ValueError("table cdf values must be non-decreasing")
        if abs(ck[0]) > 1e-12 or abs(Fk[0]) > 1e-12 or abs(Fk[-1] - 1.0) > 1e-12:
            raise ValueError("table must run from (0, 0) to (c_bar, 1)")
        slopes = _monotone_cubic_coeffs(ck, Fk)

        def _interp(c, deriv):
            c = np.clip(np.asarray(c, dtype=float), ck[0], ck[-1])
            i = np.clip(np.searchsorted(ck, c, side="right") - 1, 0, len(ck) - 2)
            h = ck[i + 1] - ck[i]
            t = (c - ck[i]) / h
            y0, y1, m0, m1 = Fk[i], Fk[i + 1], slopes[i], slopes[i + 1]
            if not deriv:
                h00 = (1 + 2 * t) * (1 - t) ** 2
                h10 = t * (1 - t) ** 2
                h01 = t * t * (3 - 2 * t)
                h11 = t * t * (t - 1)
                return h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1
            d00 = 6 * t * (t - 1) / h
            d10 = (1 - t) * (1 - 3 * t)
            d01 = -6 * t * (t - 1) / h
            d11 = t * (3 * t - 2)
            return d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1

        return cls(
            lambda c: _interp(c, deriv=False),
            lambda c: _interp(c, deriv=True) * ((np.asarray(c, float) >= ck[0]) & (np.asarray(c, float) <= ck[-1])),
            ck[-1],
            "tabulated",
            check_density=False,  # interpolant integrates to F(c_bar) - F(0) = 1 by construction
        )


@dataclass(frozen=True)
class CongestionPoint:
    """A (congestion, block-rate) pair at which demand objects are evaluated."""

    rho: float
    mu: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.rho < 1.0):
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if not self.mu > 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")


# ---------------------------------------------------------------------------
# wait-time kernel
# ---------------------------------------------------------------------------


def _checked(x):
    x = np.asarray(x, dtype=float)
    if np.any(x >= 1.0):
        raise CongestionOverflowError(
            "effective congestion rho * (1 - F(c)) reached 1; the system cannot clear"
        )
    if np.any(x < 0.0):
        raise ValueError("effective congestion cannot be negative")
    return x


def _wait_factor(x, tol=DEFAULT_TOL):
    """w(x) = 1 / (1 - (1 + a) e^{-a}); w(0) = 1 by convention."""
    x = _checked(x)
    w = np.ones_like(x)
    m = x > 0.0
    if np.any(m):
        a = solve_alpha(x[m], tol)
        w[m] = 1.0 / (-np.expm1(-a) - a * np.exp(-a))
    return w


def _wait_factor_minus1(x, tol=DEFAULT_TOL):
    """w(x) - 1 = (1 + a) e^{-a} / (1 - (1 + a) e^{-a}), cancellation-free."""
    x = _checked(x)
    out = np.zeros_like(x)
    m = x > 0.0
    if np.any(m):
        a = solve_alpha(x[m], tol)
        e = np.exp(-a)
        out[m] = (1.0 + a) * e / (-np.expm1(-a) - a * e)
    return out


def _wait_slope(x, tol=DEFAULT_TOL):
    """dw/dx = e^{-a} a^3 w^3, the analytic derivative of the wait factor."""
    x = _checked(x)
    out = np.zeros_like(x)
    m = x > 0.0
    if np.any(m):
        a = solve_alpha(x[m], tol)
        e = np.exp(-a)
        w = 1.0 / (-np.expm1(-a) - a * e)
        out[m] = e * a**3 * w**3
    return out


def wait_time(c, point: CongestionPoint, dist: WaitCostDistribution, tol=DEFAULT_TOL):
    """Equilibrium wait time for a user with delay cost c.

    W = mu^{-1} / (1 - (1 + a(x)) e^{-a(x)}) with x = rho * (1 - F(c)).
    Decreasing in c, increasing and convex in rho, and >= 1/mu with
    equality at c = c_bar.  Vectorized over c.
    """
    scalar = np.isscalar(c) or (isinstance(c, np.ndarray) and np.ndim(c) == 0)
    w = _wait_factor(point.rho * dist.sf(c), tol) / point.mu
    return float(w) if scalar else w


def fee(c, point: CongestionPoint, dist: WaitCostDistribution, tol=DEFAULT_TOL):
    """Equilibrium fee bid by a user with delay cost c.

    The bid accumulates each lower type's cost rate against the marginal
    wait-time reduction:  tf(c) = integral_0^c s |dW/ds| ds, with the
    inner derivative taken analytically,
        |dW/ds| = rho f(s) e^{-a} a^3 w^3 / mu  at x = rho (1 - F(s)).
    tf(0) = 0 and tf is non-decreasing.
    """
    c = float(c)
    if c < 0.0 or c > dist.c_bar:
        raise ValueError(f"cost must lie in [0, c_bar], got {c}")
    if c == 0.0:
        return 0.0
    rho, mu = point.rho, point.mu

    def integrand(s):
        return s * dist.pdf(s) * rho * _wait_slope(rho * dist.sf(s), tol) / mu

    return integrate(integrand, 0.0, c, tol)


def psi(point: CongestionPoint, dist: WaitCostDistribution, tol=DEFAULT_TOL):
    """Average fee revenue per capacity slot per block at congestion rho.

    psi(rho) = rho * integral (Fbar(c) - c f(c)) W(c; rho) dc, evaluated
    in the cancellation-free (w - 1) form; equals rho times the average
    fee paid per transaction (see psi_via_fees).
    """
    rho, mu = point.rho, point.mu

    def integrand(c):
        return (dist.sf(c) - c * dist.pdf(c)) * _wait_factor_minus1(rho * dist.sf(c), tol) / mu

    return rho * integrate(integrand, 0.0, dist.c_bar, tol)


def psi_via_fees(point: CongestionPoint, dist: WaitCostDistribution, tol=DEFAULT_TOL):
    """Fee-weighted route to psi: rho * integral tf(c) dF(c).

    Numerically independent of `psi` (nested quadrature through the fee
    integral instead of a single pass through the wait factor); the two
    must agree to quadrature tolerance.
    """

    def integrand(c):
        cs = np.atleast_1d(np.asarray(c, dtype=float))
        fees = np.array([fee(ci, point, dist, tol) for ci in cs])
        out = fees * dist.pdf(cs)
        return out if np.ndim(c) else float(out[0])

    return point.rho * integrate(integrand, 0.0, dist.c_bar, tol)


def epsilon(point: CongestionPoint, dist: WaitCostDistribution, tol=DEFAULT_TOL):
    """Elasticity of psi with respect to congestion, d log psi / d log rho.

    Analytic form: 1 + rho * I1 / I0 with
        I1 = integral (Fbar - c f) Fbar e^{-a} a^3 w^3 dc,
        I0 = integral (Fbar - c f) (w - 1) dc,
    both at x = rho Fbar(c).  Always >= 1; increasing, convex, and
    dominated by epsilon_bar in the congested regime (rho >~ 0.7).
    """
    rho = point.rho

    def num(c):
        sf = dist.sf(c)
        return (sf - c * dist.pdf(c)) * sf * _wait_slope(rho * sf, tol)

    def den(c):
        sf = dist.sf(c)
        return (sf - c * dist.pdf(c)) * _wait_factor_minus1(rho * sf, tol)

    return 1.0 + rho * integrate(num, 0.0, dist.c_bar, tol) / integrate(den, 0.0, dist.c_bar, tol)


def epsilon_bar(point: CongestionPoint, tol=DEFAULT_TOL):
    """Distribution-free upper bound on the congestion elasticity of fees.

    epsilon_bar(rho) = 1 + rho e^{-a(rho)} a(rho)^3 w(rho)^2, the wait
    factor's own log-slope at full congestion weight; tends to 1 as
    rho -> 0 and diverges as rho -> 1.
    """
    rho = point.rho
    a = solve_alpha(rho, tol)
    w = 1.0 / (-np.expm1(-a) - a * np.exp(-a))
    return 1.0 + rho * np.exp(-a) * a**3 * w**2


# ---------------------------------------------------------------------------
# fee schedule on a grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeeSchedule:
    """Tabulated (c, tf(c), W(c)) triples over [0, c_bar].

    Nodes are Chebyshev-spaced, dense near both support ends where the
    integrand curvature concentrates.  tf(0) = 0, tf non-decreasing, W
    non-increasing.
    """

    c: np.ndarray
    tf: np.ndarray
    wait: np.ndarray

    def __post_init__(self):
        if not (len(self.c) == len(self.tf) == len(self.wait)):
            raise ValueError("grid columns must have equal length")
        if self.tf[0] != 0.0:
            raise ValueError("fee schedule must start at tf(0) = 0")
        if np.any(np.diff(self.tf) < -1e-12) or np.any(np.diff(self.wait) > 1e-12):
            raise ValueError("fee schedule must be monotone (tf up, wait down)")


def fee_schedule(point: CongestionPoint, dist: WaitCostDistribution, n=65, tol=DEFAULT_TOL):
    """Build a FeeSchedule with n Chebyshev-spaced nodes in c."""
    if n < 2:
        raise ValueError("need at least two nodes")
    j = np.arange(n)
    c = dist.c_bar * 0.5 * (1.0 - np.cos(np.pi * j / (n - 1)))
    c[0], c[-1] = 0.0, dist.c_bar
    rho, mu = point.rho, point.mu

    def integrand(s):
        return s * dist.pdf(s) * rho * _wait_slope(rho * dist.sf(s), tol) / mu

    tf = np.zeros(n)
    for k in range(1, n):
        tf[k] = tf[k - 1] + integrate(integrand, c[k - 1], c[k], tol)
    return FeeSchedule(c=c, tf=tf, wait=wait_time(c, point, dist, tol))
