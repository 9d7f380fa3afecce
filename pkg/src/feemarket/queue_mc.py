"""Discrete-event Monte Carlo validation of the analytic wait-time curve.

Users arrive in a Poisson stream with i.i.d. delay costs; blocks arrive
in an independent Poisson stream and each serves the S pending
transactions with the highest cost (FIFO among equal costs).  Empirical
mean waits per cost decile are compared against the analytic wait-time
formula evaluated at decile midpoints.

Randomness comes from three counter-based Philox streams (blocks,
arrival gaps, costs) keyed off the config seed, so runs are reproducible
bit-for-bit and independent of internal chunk sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .demand import CongestionPoint, WaitCostDistribution, wait_time
from .numerics import DEFAULT_TOL

__all__ = ["SimConfig", "WaitSample", "MCResult", "ComparisonRow", "run",
           "compare_to_theory", "RNG_ALGORITHM"]

RNG_ALGORITHM = "philox4x64 (numpy.random.Philox), streams keyed seed*8+{0,1,2}"

_N_DECILES = 10
_CHUNK_BLOCKS = 8192


@dataclass(frozen=True)
class SimConfig:
    """Configuration of one replication.

    horizon and warmup are in simulated time units; statistics are
    collected for blocks after the warmup cutoff.  Requires
    lam / (mu * S) < 1 so the system can clear.
    """

    lam: float
    mu: float
    S: int
    dist: WaitCostDistribution
    horizon: float
    warmup: float
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0.0 or self.mu <= 0.0:
            raise ValueError("need lam >= 0 and mu > 0")
        if self.S < 1 or int(self.S) != self.S:
            raise ValueError("block capacity S must be a positive integer")
        if not (0.0 <= self.warmup < self.horizon):
            raise ValueError("need 0 <= warmup < horizon")
        if self.lam > 0.0 and self.rho >= 1.0:
            raise ValueError(f"congestion {self.rho:.4g} >= 1: system is unstable")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must fit in 64 bits")

    @property
    def rho(self):
        return self.lam / (self.mu * self.S)


@dataclass(frozen=True)
class WaitSample:
    """One served transaction: delay cost and realized wait."""

    c: float
    wait: float

    def __post_init__(self):
        if self.wait < 0.0:
            raise ValueError("wait must be non-negative")


@dataclass
class MCResult:
    """Per-decile summary of one replication (plus optional raw samples)."""

    config: SimConfig
    c_mid: np.ndarray          # decile midpoints, quantile((k+0.5)/10)
    decile_mean: np.ndarray    # empirical mean wait per decile (nan if empty)
    decile_count: np.ndarray
    decile_sumsq: np.ndarray   # sum of squared waits, for standard errors
    n_blocks: int
    n_served: int
    queue_profile: np.ndarray  # mean pending-queue length per tenth of the horizon
    rng_algorithm: str = RNG_ALGORITHM
    samples: Optional[list] = None

    def decile_stderr(self):
        n = np.maximum(self.decile_count, 1)
        var = np.maximum(self.decile_sumsq / n - self.decile_mean**2, 0.0)
        return np.sqrt(var / n)


def _streams(seed):
    base = int(seed) * 8
    return tuple(np.random.Generator(np.random.Philox(key=base + k)) for k in range(3))


def run(config: SimConfig, keep_samples=False) -> MCResult:
    """Run one replication; deterministic given (config, seed).

    keep_samples retains every post-warmup WaitSample in memory, intended
    for short runs only.
    """
    blocks_rng, gaps_rng, costs_rng = _streams(config.seed)
    lam, mu, S = config.lam, config.mu, int(config.S)
    horizon, warmup = config.horizon, config.warmup
    dist = config.dist

    sums = np.zeros(_N_DECILES)
    sumsq = np.zeros(_N_DECILES)
    counts = np.zeros(_N_DECILES, dtype=np.int64)
    q_sum = np.zeros(_N_DECILES)
    q_cnt = np.zeros(_N_DECILES, dtype=np.int64)
    samples = [] if keep_samples else None

    p_at = np.empty(0)
    p_co = np.empty(0)
    p_dec = np.empty(0, dtype=np.int64)

    buf_at = np.empty(0)
    buf_co = np.empty(0)
    buf_dec = np.empty(0, dtype=np.int64)
    t_arr_last = 0.0

    t_block = 0.0
    n_blocks = 0
    n_served = 0
    done = lam == 0.0 and horizon <= 0.0

    # accumulate served (wait, decile) pairs per chunk to keep the
    # per-block numpy overhead down
    while not done:
        gaps = blocks_rng.exponential(1.0 / mu, _CHUNK_BLOCKS)
        btimes = t_block + np.cumsum(gaps)
        t_block = btimes[-1]
        if btimes[-1] > horizon:
            btimes = btimes[btimes <= horizon]
            done = True
        if btimes.size == 0:
            break
        chunk_end = btimes[-1]
        if lam > 0.0:
            while t_arr_last <= chunk_end:
                n = max(1024, int(lam * (chunk_end - t_arr_last) * 1.2) + 64)
                at = t_arr_last + np.cumsum(gaps_rng.exponential(1.0 / lam, n))
                co = dist.quantile(costs_rng.random(n))
                dec = np.minimum((dist.cdf(co) * _N_DECILES).astype(np.int64),
                                 _N_DECILES - 1)
                buf_at = np.concatenate([buf_at, at])
                buf_co = np.concatenate([buf_co, co])
                buf_dec = np.concatenate([buf_dec, dec])
                t_arr_last = at[-1]
        ptr = 0
        chunk_waits = []
        chunk_decs = []
        chunk_cos = [] if keep_samples else None
        for tb in btimes.tolist():
            k = int(np.searchsorted(buf_at, tb, side="right"))
            n_new = k - ptr
            n_pend = p_at.size
            if n_pend == 0 and n_new <= S:
                s_at = buf_at[ptr:k]
                s_co = buf_co[ptr:k]
                s_dec = buf_dec[ptr:k]
            else:
                cand_at = np.concatenate([p_at, buf_at[ptr:k]])
                cand_co = np.concatenate([p_co, buf_co[ptr:k]])
                cand_dec = np.concatenate([p_dec, buf_dec[ptr:k]])
                if cand_at.size <= S:
                    s_at, s_co, s_dec = cand_at, cand_co, cand_dec
                    p_at = np.empty(0)
                    p_co = np.empty(0)
                    p_dec = np.empty(0, dtype=np.int64)
                else:
                    order = np.lexsort((cand_at, -cand_co))
                    take, keep = order[:S], order[S:]
                    s_at, s_co, s_dec = cand_at[take], cand_co[take], cand_dec[take]
                    p_at, p_co, p_dec = cand_at[keep], cand_co[keep], cand_dec[keep]
            ptr = k
            if tb > warmup and s_at.size:
                chunk_waits.append(tb - s_at)
                chunk_decs.append(s_dec)
                if keep_samples:
                    chunk_cos.append(s_co)
            tb_bucket = min(int(_N_DECILES * tb / horizon), _N_DECILES - 1)
            q_sum[tb_bucket] += p_at.size
            q_cnt[tb_bucket] += 1
            n_blocks += 1
        buf_at = buf_at[ptr:]
        buf_co = buf_co[ptr:]
        buf_dec = buf_dec[ptr:]
        if chunk_waits:
            waits = np.concatenate(chunk_waits)
            decs = np.concatenate(chunk_decs)
            sums += np.bincount(decs, weights=waits, minlength=_N_DECILES)
            sumsq += np.bincount(decs, weights=waits * waits, minlength=_N_DECILES)
            counts += np.bincount(decs, minlength=_N_DECILES)
            n_served += waits.size
            if keep_samples:
                for co, wt in zip(np.concatenate(chunk_cos), waits):
                    samples.append(WaitSample(c=float(co), wait=float(wt)))

    with np.errstate(invalid="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    c_mid = dist.quantile((np.arange(_N_DECILES) + 0.5) / _N_DECILES)
    profile = np.where(q_cnt > 0, q_sum / np.maximum(q_cnt, 1), 0.0)
    return MCResult(config=config, c_mid=c_mid, decile_mean=means,
                    decile_count=counts, decile_sumsq=sumsq,
                    n_blocks=n_blocks, n_served=n_served,
                    queue_profile=profile, samples=samples)


@dataclass(frozen=True)
class ComparisonRow:
    """One line of the theory-comparison table."""

    decile: int
    c_mid: float
    empirical_mean: float
    theory: float
    rel_error: float
    n_samples: int
    sufficient: bool

    CSV_HEADER = "decile,c_mid,empirical_mean,theory,rel_error,n_samples"

    def csv_row(self):
        return "%d,%.12g,%.12g,%.12g,%.12g,%d" % (
            self.decile, self.c_mid, self.empirical_mean, self.theory,
            self.rel_error, self.n_samples)


def compare_to_theory(result: MCResult, config: SimConfig = None,
                      min_samples=1000, tol=DEFAULT_TOL):
    """Per-decile relative error of empirical waits against the formula.

    Theory is the analytic wait time at the decile-midpoint cost.
    Deciles with fewer than min_samples observations are flagged
    insufficient rather than fatal.  Verifies that empirical waits do not
    increase across ascending cost deciles beyond statistical noise
    (three pooled standard errors).
    """
    config = config or result.config
    point = CongestionPoint(rho=config.rho, mu=config.mu)
    theory = np.asarray(wait_time(result.c_mid, point, config.dist, tol))
    rows = []
    for k in range(_N_DECILES):
        emp = float(result.decile_mean[k])
        th = float(theory[k])
        rel = (emp - th) / th if np.isfinite(emp) else math.nan
        rows.append(ComparisonRow(
            decile=k, c_mid=float(result.c_mid[k]), empirical_mean=emp,
            theory=th, rel_error=rel, n_samples=int(result.decile_count[k]),
            sufficient=result.decile_count[k] >= min_samples))
    se = result.decile_stderr()
    means = result.decile_mean
    for k in range(_N_DECILES - 1):
        if not (rows[k].sufficient and rows[k + 1].sufficient):
            continue
        slack = 3.0 * (se[k] + se[k + 1])
        if means[k + 1] > means[k] + slack:
            raise RuntimeError(
                f"priority discipline violated: decile {k + 1} waits longer "
                f"than decile {k} ({means[k + 1]:.4g} > {means[k]:.4g})")
    return rows
