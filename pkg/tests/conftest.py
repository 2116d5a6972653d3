"""Shared brute-force oracles for the test suite.

The oracle recomputes every statistic from first principles: per-step log
density ratios via scipy's normal logpdf, explicit products over all
candidate change points k and grid parameters, and logsumexp reduction.
It shares no code path with the incremental engine.
"""
import numpy as np
import pytest
from scipy.special import logsumexp
from scipy.stats import norm


def oracle_llr_table(x, grid, sigma=1.0):
    """log LR_theta(k, n) for one stream: shape (n, len(grid)) rows k=0..n-1,
    entry [k, g] = sum_{t=k+1..n} [log phi_theta(x_t) - log phi_0(x_t)]."""
    n = x.size
    inc = (norm.logpdf(x[:, None], loc=np.asarray(grid)[None, :], scale=sigma)
           - norm.logpdf(x[:, None], loc=0.0, scale=sigma))
    csum = np.vstack([np.zeros(len(grid)), np.cumsum(inc, axis=0)])
    # log LR(k, n) = csum[n] - csum[k]
    return csum[n] - csum[:n]


def oracle_frame(obs, prior, grids, weights, n, sigma=1.0, window=None):
    """Exact statistics at time n for i.i.d. Gaussian streams.

    Returns (log_mix, log_sup, log_survivor, log_ratio) with the same
    layout as the engine's frame.
    """
    n_streams = obs.shape[0]
    lp = np.array([prior.log_pmf(k) for k in range(n)], dtype=float)
    lp[0] = np.logaddexp(lp[0], np.log(prior.q)) if prior.q > 0 else lp[0]
    lo = 0 if window is None else max(0, n - window)
    log_mix = np.empty(n_streams)
    log_sup = np.empty(n_streams)
    for s in range(n_streams):
        table = oracle_llr_table(obs[s, :n], grids[s], sigma=sigma)[lo:]
        lw = np.log(np.asarray(weights[s]))
        log_mix[s] = logsumexp(lp[lo:, None] + lw[None, :] + table)
        log_sup[s] = logsumexp(lp[lo:] + table.max(axis=1))
    log_survivor = float(np.log(prior.survivor(n)))
    ratio = np.empty((n_streams, n_streams + 1))
    ratio[:, 0] = log_mix - log_survivor
    for j in range(1, n_streams + 1):
        ratio[:, j] = log_mix - log_sup[j - 1]
        ratio[j - 1, j] = np.nan
    return log_mix, log_sup, log_survivor, ratio


def oracle_verdict(obs, prior, grids, weights, log_a, sigma=1.0, window=None):
    """First time any stream crosses all its thresholds; smallest index wins.

    Returns (time, stream) or (None, None) when the horizon is exhausted.
    """
    n_streams, horizon = obs.shape
    for n in range(1, horizon + 1):
        _, _, _, ratio = oracle_frame(obs, prior, grids, weights, n,
                                      sigma=sigma, window=window)
        for i in range(n_streams):
            ok = True
            for j in range(n_streams + 1):
                if j == i + 1:
                    continue
                if not ratio[i, j] >= log_a[i, j]:
                    ok = False
                    break
            if ok:
                return n, i + 1
    return None, None


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
