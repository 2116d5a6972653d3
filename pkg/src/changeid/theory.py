"""Closed-form operating characteristics: risk bounds and first-order
delay approximations.

All bounds take thresholds in the ThresholdMatrix layout (column 0 = the
no-change competitor).  Information numbers are supplied by the model
layer; the infimum over a competitor's parameter space can be given either
as the on-grid minimum or the analytic limit.
"""
from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from .rule import ThresholdMatrix

__all__ = ["pfa_bound", "pmi_bound", "psi_threshold", "psi_class",
           "psi_class_star", "bayes_gammas"]


def pfa_bound(thresholds: ThresholdMatrix):
    """Per-stream bounds (1 + A_i0)^-1 and their total."""
    a0 = np.exp(thresholds.log_a[:, 0])
    per_stream = 1.0 / (1.0 + a0)
    return per_stream, float(per_stream.sum())


def pmi_bound(thresholds: ThresholdMatrix):
    """Pairwise bounds (1 + A_i0) / (A_i0 A_ji) and their row sums."""
    a = thresholds.linear()
    n = thresholds.n_streams
    pair = np.full((n, n), np.nan)
    for i in range(n):
        prefactor = (1.0 + a[i, 0]) / a[i, 0]
        for j in range(n):
            if j != i:
                pair[i, j] = prefactor / a[j, i + 1]
    with np.errstate(invalid="ignore"):
        rows = np.nansum(pair, axis=1)
    return pair, rows


def _max_ratio(log_num0: float, denom0: float, competitors) -> float:
    best = log_num0 / denom0
    for log_num, denom in competitors:
        best = max(best, log_num / denom)
    return best


def psi_threshold(thresholds: ThresholdMatrix, stream: int, info: float,
                  pair_inf: Mapping[int, float], mu: float) -> float:
    """First-order expected-delay scale at given thresholds:

        max( log A_i0 / (I_i + mu),  max_j log A_ij / inf_j I_ij )

    ``pair_inf`` maps competitor stream j (1-based) to inf I_ij.
    """
    i = stream - 1
    comps = [(thresholds.log_a[i, j], pair_inf[j])
             for j in range(1, thresholds.n_streams + 1) if j != stream]
    return _max_ratio(thresholds.log_a[i, 0], info + mu, comps)


def psi_class(alpha, beta, stream: int, info: float,
              pair_inf: Mapping[int, float], mu: float) -> float:
    """Lower-bound delay scale for the class with per-stream targets:

        max( |log alpha_i| / (I_i + mu),  max_j |log beta_ji| / inf_j I_ij )
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    beta = np.asarray(beta, dtype=float)
    i = stream - 1
    comps = [(abs(math.log(beta[j - 1, i])), pair_inf[j])
             for j in pair_inf if j != stream]
    return _max_ratio(abs(math.log(alpha[i])), info + mu, comps)


def psi_class_star(alpha: float, beta_bar, stream: int, info: float,
                   pair_inf: Mapping[int, float], mu: float) -> float:
    """Delay scale for the class with a total PFA target and per-stream
    misidentification targets."""
    beta_bar = np.atleast_1d(np.asarray(beta_bar, dtype=float))
    comps = [(abs(math.log(beta_bar[j - 1])), pair_inf[j])
             for j in pair_inf if j != stream]
    return _max_ratio(abs(math.log(alpha)), info + mu, comps)


def bayes_gammas(p: Sequence[float], mixings, info_fns, pair_inf_fns, mu: float):
    """Fully Bayesian delay coefficients.

    gamma_0 = sum_i p_i sum_g w_g / (I_i(theta_g) + mu)
    gamma_1 = sum_i p_i sum_g w_g / min_j inf_{theta_j} I_ij(theta_g, theta_j)

    ``info_fns[i](theta)`` returns I_i(theta); ``pair_inf_fns[i](theta)``
    returns min over competitors j of inf_{theta_j} I_ij(theta, theta_j).
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or abs(p.sum() - 1.0) > 1e-9 or np.any(p < 0):
        raise ValueError("p must be a probability vector over streams")
    g0 = 0.0
    g1 = 0.0
    for i, (pi, mix) in enumerate(zip(p, mixings)):
        if pi == 0.0:
            continue
        for theta, w in zip(mix.grid, mix.weights):
            g0 += pi * w / (info_fns[i](theta) + mu)
            g1 += pi * w / pair_inf_fns[i](theta)
    return g0, g1
