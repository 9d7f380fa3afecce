"""Dynamic adjustment of predicate size under difficulty-based update
rules: trajectory simulation, steady-state detection, demand-shock
congestion elasticities, and the welfare accounting.

One period is one update epoch: within a period demand and supply settle
at the static equilibrium for the current predicate size, the rule then
maps the observed difficulty into next period's predicate size.  Flows
are expressed per unit time throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import supply as _supply
from .demand import (CongestionOverflowError, CongestionPoint,
                     WaitCostDistribution, epsilon, psi as _psi, _wait_factor)
from .numerics import DEFAULT_TOL, integrate
from .supply import MarketParams

__all__ = ["UpdateRule", "MarketState", "Trajectory", "ShockResult",
           "make_state", "step", "simulate", "shock_elasticity", "welfare",
           "pegged_target_difficulty"]

_SERIES_TRUNC = 1e-12
_OSCILLATION_RUN = 10


@dataclass(frozen=True)
class UpdateRule:
    """Law of motion for predicate size.

    floating: log(S_{t+1}/S_t) = gamma * (d_t - d_{t-1})
    pegged:   log(S_{t+1}/S_t) = gamma * (d_t - d_star)
    fixed:    S_{t+1} = S_t (gamma forced to 0)
    """

    kind: str
    gamma: float = 0.0
    d_star: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("floating", "pegged", "fixed"):
            raise ValueError(f"unknown rule kind {self.kind!r}")
        if self.gamma < 0.0:
            raise ValueError("gamma must be non-negative")
        if self.kind == "pegged" and self.d_star is None:
            raise ValueError("pegged rule requires d_star")
        if self.kind == "fixed" and self.gamma != 0.0:
            raise ValueError("fixed rule means gamma = 0")

    @classmethod
    def floating(cls, gamma):
        return cls(kind="floating", gamma=float(gamma))

    @classmethod
    def pegged(cls, gamma, d_star):
        return cls(kind="pegged", gamma=float(gamma), d_star=float(d_star))

    @classmethod
    def fixed(cls):
        return cls(kind="fixed", gamma=0.0)


@dataclass(frozen=True)
class MarketState:
    """Full equilibrium snapshot of one period."""

    t: int
    S: float
    lam: float
    rho: float
    psi: float
    Rev: float
    N: float
    d: float
    welfare: float

    CSV_HEADER = "t,S,lambda,rho,psi,Rev,N,d,welfare"

    def csv_row(self):
        vals = (self.S, self.lam, self.rho, self.psi, self.Rev, self.N,
                self.d, self.welfare)
        return str(self.t) + "," + ",".join(f"{v:.12g}" for v in vals)


@dataclass
class Trajectory:
    """Ordered sequence of MarketStates plus the convergence verdict."""

    states: list
    converged: bool
    steady_state: Optional[MarketState]
    divergence_reason: Optional[str]
    rule: UpdateRule
    initial_prev_d: float

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(MarketState.CSV_HEADER + "\n")
            for s in self.states:
                fh.write(s.csv_row() + "\n")


def pegged_target_difficulty(rho_star, params: MarketParams,
                             dist: WaitCostDistribution, tol=DEFAULT_TOL):
    """Difficulty peg that holds congestion at rho_star when br = 0.

    Inverts the zero-reward difficulty map: d* = log(alpha_const *
    psi(rho_star)).
    """
    point = CongestionPoint(rho=rho_star, mu=params.mu)
    return math.log(params.alpha_const * _psi(point, dist, tol))


def _aggregate_wait_cost(rho, lam, params, dist, tol):
    """lambda * E[c * W(c; rho)], the flow cost of waiting in USD per unit time."""

    def integrand(c):
        return c * _wait_factor(rho * dist.sf(c), tol) / params.mu * dist.pdf(c)

    return lam * integrate(integrand, 0.0, dist.c_bar, tol)


def welfare(state: MarketState, params: MarketParams, dist: WaitCostDistribution,
            tol=DEFAULT_TOL):
    """Net benefit flow: nu*lambda - aggregate wait cost - energy cost.

    The wait term weighs each user's wait time by their delay cost; free
    entry makes total energy cost equal total mining rewards,
    (Rev + P br) * mu per unit time.
    """
    waiting = _aggregate_wait_cost(state.rho, state.lam, params, dist, tol)
    energy = (state.Rev + params.P * params.br) * params.mu
    return params.nu * state.lam - waiting - energy


def make_state(t, S, lam, params: MarketParams, dist: WaitCostDistribution,
               tol=DEFAULT_TOL) -> MarketState:
    """Static equilibrium at predicate size S and demand lam.

    Raises CongestionOverflowError when lam >= mu * S.
    """
    if not (S > 0.0 and math.isfinite(S)):
        raise CongestionOverflowError(f"predicate size left the feasible range: {S!r}")
    rho = lam / (params.mu * S)
    if rho >= 1.0:
        raise CongestionOverflowError(
            f"congestion {rho:.6g} >= 1 at S={S:.6g}, lambda={lam:.6g}")
    if rho <= 0.0:
        raise ValueError("demand must be positive")
    eq = _supply.equilibrium_miners(S, rho, params, dist, tol)
    state = MarketState(t=t, S=S, lam=lam, rho=rho, psi=eq.Rev / S,
                        Rev=eq.Rev, N=eq.N, d=eq.d, welfare=0.0)
    w = welfare(state, params, dist, tol)
    return MarketState(t=t, S=S, lam=lam, rho=rho, psi=eq.Rev / S,
                       Rev=eq.Rev, N=eq.N, d=eq.d, welfare=w)


def step(state: MarketState, prev_d, rule: UpdateRule, params: MarketParams,
         dist: WaitCostDistribution, tol=DEFAULT_TOL) -> MarketState:
    """Advance one period under the rule's law of motion.

    prev_d is the previous period's difficulty (floating rule only); pass
    None on the first step to start with no adjustment (d_{-1} = d_0).
    Raises CongestionOverflowError if the updated predicate size cannot
    clear the market.
    """
    if rule.kind == "floating":
        d_prev = state.d if prev_d is None else prev_d
        log_step = rule.gamma * (state.d - d_prev)
    elif rule.kind == "pegged":
        log_step = rule.gamma * (state.d - rule.d_star)
    else:
        log_step = 0.0
    S_next = state.S * math.exp(log_step)
    return make_state(state.t + 1, S_next, state.lam, params, dist, tol)


def simulate(S0, lam, rule: UpdateRule, params: MarketParams,
             dist: WaitCostDistribution, horizon=10000, ss_tol=1e-8,
             prev_d=None, tol=DEFAULT_TOL) -> Trajectory:
    """Iterate the update rule from (S0, lam) until predicate size settles.

    Stops when |log(S_{t+1}/S_t)| < ss_tol (converged), when congestion
    overflows or |Delta log S| grows for 10 consecutive periods
    (diverged), or at the horizon.  prev_d seeds the floating rule's
    difficulty history, e.g. with the pre-shock steady-state difficulty.
    """
    state = make_state(0, S0, lam, params, dist, tol)
    states = [state]
    initial_prev_d = state.d if prev_d is None else float(prev_d)
    d_prev = initial_prev_d
    last_abs = None
    growing = 0
    for _ in range(horizon):
        try:
            nxt = step(state, d_prev, rule, params, dist, tol)
        except CongestionOverflowError:
            return Trajectory(states, False, None, "overflow", rule, initial_prev_d)
        states.append(nxt)
        dlogS = math.log(nxt.S / state.S)
        d_prev, state = state.d, nxt
        if abs(dlogS) < ss_tol:
            return Trajectory(states, True, nxt, None, rule, initial_prev_d)
        if last_abs is not None and abs(dlogS) > last_abs:
            growing += 1
            if growing >= _OSCILLATION_RUN:
                return Trajectory(states, False, None, "oscillation", rule, initial_prev_d)
        else:
            growing = 0
        last_abs = abs(dlogS)
    return Trajectory(states, False, None, "max-periods", rule, initial_prev_d)


@dataclass
class ShockResult:
    """Measured and series-predicted congestion response to a demand shock."""

    converged: bool
    measured: Optional[float]
    series: Optional[float]
    pre: Trajectory
    post: Optional[Trajectory]
    divergence_reason: Optional[str] = None


class _EpsilonCache:
    def __init__(self, mu, dist, tol):
        self.mu = mu
        self.dist = dist
        self.tol = tol
        self._memo = {}

    def __call__(self, rho):
        v = self._memo.get(rho)
        if v is None:
            v = epsilon(CongestionPoint(rho=rho, mu=self.mu), self.dist, self.tol)
            self._memo[rho] = v
        return v


def _arc_elasticity(rho_a, rho_b, eps):
    """Average elasticity over one period's congestion move.

    Simpson's rule in log rho: (eps_a + 4 eps_mid + eps_b) / 6, fourth-
    order accurate for the arc average (1/Delta) integral eps d log rho.
    """
    mid = math.sqrt(rho_a * rho_b)
    return (eps(rho_a) + 4.0 * eps(mid) + eps(rho_b)) / 6.0


def _series_floating(rho_pre, rhos, gamma, eps):
    """Recursive-series elasticity 1 + sum_t (-gamma)^t prod_k eps_k.

    Per-step elasticities are the arc averages of the analytic elasticity
    over each consecutive congestion pair along the simulated path; past
    the path's end the last factor repeats.  Terms are truncated below
    1e-12.
    """
    path = [rho_pre] + list(rhos)
    factors = []
    for k in range(1, len(path)):
        if path[k] == path[k - 1]:
            break
        factors.append(-gamma * _arc_elasticity(path[k - 1], path[k], eps))
    if not factors:
        return 1.0
    total = 1.0
    term = 1.0
    k = 0
    while True:
        f = factors[k] if k < len(factors) else factors[-1]
        term *= f
        if not math.isfinite(term) or abs(term) > 1e6:
            return math.inf
        total += term
        if abs(term) < _SERIES_TRUNC:
            return total
        k += 1


def _series_pegged(rhos, gamma, eps):
    """Pegged-rule series eps(rho_0) * prod_t (1 - gamma * eps(rho_t))."""
    prod = eps(rhos[0])
    k = 1
    while abs(prod) >= _SERIES_TRUNC and k < 100000:
        rho = rhos[k] if k < len(rhos) else rhos[-1]
        factor = 1.0 - gamma * eps(rho)
        if abs(factor) >= 1.0:
            return math.inf if abs(prod) > 1e6 else prod
        prod *= factor
        k += 1
    return prod


def shock_elasticity(S0, lambda0, dlog_lambda, rule: UpdateRule,
                     params: MarketParams, dist: WaitCostDistribution,
                     horizon=10000, ss_tol=1e-8, tol=DEFAULT_TOL) -> ShockResult:
    """Steady-state congestion elasticity to a one-time demand shock.

    Simulates to a steady state at lambda0, applies the log shock, and
    simulates to the new steady state (the floating rule sees the
    pre-shock difficulty as its history); returns the measured
    d log rho* / d log lambda together with the analytic series value
    from the corresponding stability analysis.
    """
    if dlog_lambda == 0.0:
        raise ValueError("shock size must be non-zero")
    pre = simulate(S0, lambda0, rule, params, dist, horizon, ss_tol, None, tol)
    if not pre.converged:
        return ShockResult(False, None, None, pre, None, pre.divergence_reason)
    base = pre.steady_state
    lam1 = lambda0 * math.exp(dlog_lambda)
    try:
        post = simulate(base.S, lam1, rule, params, dist, horizon, ss_tol,
                        prev_d=base.d, tol=tol)
    except CongestionOverflowError:
        return ShockResult(False, None, None, pre, None, "overflow")
    if not post.converged:
        return ShockResult(False, None, None, pre, post, post.divergence_reason)
    measured = (math.log(post.steady_state.rho) - math.log(base.rho)) / dlog_lambda

    eps = _EpsilonCache(params.mu, dist, tol)
    rhos = [s.rho for s in post.states]
    if rule.kind == "fixed" or rule.gamma == 0.0:
        series = 1.0
    elif rule.kind == "floating":
        series = _series_floating(base.rho, rhos, rule.gamma, eps)
    else:
        series = _series_pegged(rhos, rule.gamma, eps)
    return ShockResult(True, measured, series, pre, post)
