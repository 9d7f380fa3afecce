"""Miner side of the market: proof production, optimal pool size, free
entry, and the implied system difficulty.

All quantities are real-valued (no integer rounding of pool counts or
workers): free entry is a continuous condition.  The per-period entry
cost is a single parameter f_e; configuration files may spell it f_m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .demand import CongestionPoint, WaitCostDistribution, psi as _psi
from .numerics import DEFAULT_TOL

__all__ = ["MarketParams", "SupplyState", "hash_rate",
           "best_response_pool_size", "equilibrium_miners", "difficulty"]


@dataclass(frozen=True)
class MarketParams:
    """Exogenous constants of the market.

    sigma   parallelization exponent in (0, 1)
    U       proof-technology constant (proofs per unit time)
    c_m     per-worker cost (USD per unit time)
    f_e     per-period pool entry cost (USD)
    mu      block arrival rate (blocks per unit time)
    P       exchange rate (USD per coin)
    br      block reward (coins per block)
    nu      transaction value to users (USD)
    alpha_const  derived difficulty constant
                 mu * U * (sigma/c_m)^sigma * ((1-sigma)/f_e)^(1-sigma);
                 recomputed on construction and checked if supplied.
    """

    sigma: float = 0.88
    U: float = 1.0
    c_m: float = 1.0
    f_e: float = 1.0
    mu: float = 1.0
    P: float = 1.0
    br: float = 0.0
    nu: float = 10.0
    alpha_const: float = field(default=None)

    def __post_init__(self):
        if not (0.0 < self.sigma < 1.0):
            raise ValueError("sigma must lie in (0, 1)")
        for name in ("U", "c_m", "f_e", "mu"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        for name in ("P", "br", "nu"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        derived = (self.mu * self.U * (self.sigma / self.c_m) ** self.sigma
                   * ((1.0 - self.sigma) / self.f_e) ** (1.0 - self.sigma))
        if self.alpha_const is None:
            object.__setattr__(self, "alpha_const", derived)
        elif not math.isclose(self.alpha_const, derived, rel_tol=1e-9):
            raise ValueError(
                f"alpha_const {self.alpha_const!r} inconsistent with parameters "
                f"(recomputed {derived!r})"
            )


@dataclass(frozen=True)
class SupplyState:
    """Free-entry equilibrium of the mining sector at one market point.

    N       active pools (real-valued)
    n_star  workers per pool
    H       per-pool hash rate (proofs per unit time)
    d       difficulty, log of total proofs per unit time
    Rev     fee revenue per block (USD)
    """

    N: float
    n_star: float
    H: float
    d: float
    Rev: float

    def __post_init__(self):
        for name in ("N", "n_star", "H", "Rev"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")


def hash_rate(n, S, params: MarketParams):
    """Pool hash rate H = U * n^sigma / S for n workers at predicate size S.

    Doubling S halves the hash rate at fixed pool size.
    """
    if S <= 0.0:
        raise ValueError("predicate size must be positive")
    if n < 0.0:
        raise ValueError("worker count must be non-negative")
    return params.U * n ** params.sigma / S


def best_response_pool_size(S, aggregate_H, Rev, params: MarketParams):
    """Profit-maximizing pool size against a given aggregate hash rate.

    n* = (sigma (Rev + P br) / (c_m (S/U) aggregate_H))^(1/(1-sigma)).
    Pools take the aggregate as given (no internalization of their own
    contribution).
    """
    if aggregate_H <= 0.0:
        raise ValueError("aggregate hash rate must be positive")
    if S <= 0.0:
        raise ValueError("predicate size must be positive")
    reward = Rev + params.P * params.br
    if reward <= 0.0:
        raise ValueError("total block reward must be positive")
    base = params.sigma * reward / (params.c_m * (S / params.U) * aggregate_H)
    return base ** (1.0 / (1.0 - params.sigma))


def profit(n, S, aggregate_H, Rev, params: MarketParams):
    """Expected per-period profit of one pool running n workers.

    pi = H(n)/aggregate_H * (Rev + P br) - c_m n - f_e.  Used by tests to
    verify the zero-profit property of the free-entry equilibrium.
    """
    reward = Rev + params.P * params.br
    return hash_rate(n, S, params) / aggregate_H * reward - params.c_m * n - params.f_e


def equilibrium_miners(S, rho, params: MarketParams, dist: WaitCostDistribution,
                       tol=DEFAULT_TOL) -> SupplyState:
    """Symmetric free-entry equilibrium of the mining sector.

    Fee revenue per block is Rev = S * psi(rho); entry drives expected
    profit to zero, pinning N = (1 - sigma)(Rev + P br) / f_e, with each
    pool at n* = sigma f_e / ((1 - sigma) c_m) workers -- note n* and the
    per-pool hash rate depend only on technology constants and S, not on
    revenue.
    """
    if S <= 0.0:
        raise ValueError("predicate size must be positive")
    point = CongestionPoint(rho=rho, mu=params.mu)
    Rev = S * _psi(point, dist, tol)
    reward = Rev + params.P * params.br
    N = (1.0 - params.sigma) * reward / params.f_e
    n_star = params.sigma * params.f_e / ((1.0 - params.sigma) * params.c_m)
    H = hash_rate(n_star, S, params)
    d = math.log(params.mu * H * N)
    return SupplyState(N=N, n_star=n_star, H=H, d=d, Rev=Rev)


def difficulty(S, rho, params: MarketParams, dist: WaitCostDistribution,
               tol=DEFAULT_TOL):
    """System difficulty d = log(alpha_const * (S psi(rho) + P br) / S).

    Closed form equivalent to log(mu * H * N) at the free-entry
    equilibrium.  With br = 0 it reduces to log(alpha_const * psi(rho)),
    independent of S at fixed congestion.
    """
    if S <= 0.0:
        raise ValueError("predicate size must be positive")
    point = CongestionPoint(rho=rho, mu=params.mu)
    reward = S * _psi(point, dist, tol) + params.P * params.br
    return math.log(params.alpha_const * reward / S)
