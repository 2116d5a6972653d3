"""Detection-identification rule: stopping, decision, threshold calibration.

Stream i raises the alarm at the first n where its mixture statistic beats
every competitor threshold simultaneously (the no-change hypothesis and
each other stream); the overall rule stops at the minimum of the
per-stream times and identifies the stream that achieved it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .engine import Detector, MixingMeasure, StatisticFrame
from .models import Model, TrialPath
from .prior import ChangePointPrior

__all__ = ["ThresholdMatrix", "Verdict", "CalibrationError",
           "calibrate", "calibrate_star", "check_stop", "run"]


class CalibrationError(ValueError):
    """Risk targets outside their admissible range."""


@dataclass(frozen=True)
class ThresholdMatrix:
    """Log thresholds, shape (N, N+1) with the same layout as the ratio
    matrix in StatisticFrame: column 0 is the no-change competitor, column
    j the stream-j competitor, diagonal entries (i, i) are NaN."""

    log_a: np.ndarray

    def __post_init__(self):
        log_a = np.asarray(self.log_a, dtype=float)
        object.__setattr__(self, "log_a", log_a)
        n = log_a.shape[0]
        if log_a.shape != (n, n + 1):
            raise CalibrationError(f"threshold matrix must be (N, N+1), got {log_a.shape}")
        off = ~np.eye(n, n + 1, k=1, dtype=bool)
        if not np.all(np.isfinite(log_a[off])):
            raise CalibrationError("all off-diagonal log thresholds must be finite")

    @property
    def n_streams(self) -> int:
        return self.log_a.shape[0]

    def linear(self) -> np.ndarray:
        return np.exp(self.log_a)


def _as_alpha_vector(alpha, n: int) -> np.ndarray:
    a = np.broadcast_to(np.asarray(alpha, dtype=float), (n,)).copy()
    if np.any((a <= 0) | (a >= 1)):
        raise CalibrationError(f"false-alarm targets must lie in (0, 1), got {a}")
    return a


def calibrate(alpha, beta, n_streams: Optional[int] = None,
              head_mass: float = 0.0) -> ThresholdMatrix:
    """Thresholds meeting per-stream PFA targets alpha_i and pairwise
    misidentification targets beta_ij (true stream i, decided j):

        A_i0 = (1 - alpha_i) / alpha_i,   A_ij = 1 / ((1 - alpha_j) beta_ji)
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    n = n_streams if n_streams is not None else alpha.size
    alpha = _as_alpha_vector(alpha, n)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (n, n)).copy()
    off = ~np.eye(n, dtype=bool)
    if np.any((beta[off] <= 0) | (beta[off] >= 1)):
        raise CalibrationError("misidentification targets must lie in (0, 1)")
    if np.max(alpha) >= 1.0 - head_mass:
        raise CalibrationError(
            f"max alpha {np.max(alpha):g} must be below 1 - head mass "
            f"{1.0 - head_mass:g} for the false-alarm bound to apply")
    log_a = np.full((n, n + 1), np.nan)
    log_a[:, 0] = np.log1p(-alpha) - np.log(alpha)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            # threshold guarding stream i against competitor stream j
            log_a[i, j + 1] = -math.log1p(-alpha[j]) - math.log(beta[j, i])
    return ThresholdMatrix(log_a=log_a)


def calibrate_star(alpha: float, beta_bar, n_streams: int,
                   head_mass: float = 0.0) -> ThresholdMatrix:
    """Uniform thresholds meeting a total PFA target and per-stream
    misidentification targets:

        A_0 = (N / alpha)(1 - alpha/N),   A_j = (N - 1) / ((1 - alpha/N) beta_bar_j)
    """
    n = int(n_streams)
    if n < 1:
        raise CalibrationError("need at least one stream")
    if not 0 < alpha < 1:
        raise CalibrationError(f"total false-alarm target must lie in (0, 1), got {alpha}")
    if alpha >= 1.0 - head_mass:
        raise CalibrationError(
            f"alpha {alpha:g} must be below 1 - head mass {1.0 - head_mass:g}")
    beta_bar = np.broadcast_to(np.asarray(beta_bar, dtype=float), (n,)).copy()
    if n > 1 and np.any((beta_bar <= 0) | (beta_bar >= 1)):
        raise CalibrationError("misidentification targets must lie in (0, 1)")
    log_a = np.full((n, n + 1), np.nan)
    log_a0 = math.log(n) - math.log(alpha) + math.log1p(-alpha / n)
    log_a[:, 0] = log_a0
    for j in range(n):
        col = math.log(n - 1) - math.log1p(-alpha / n) - math.log(beta_bar[j]) if n > 1 else np.nan
        for i in range(n):
            if i != j:
                log_a[i, j + 1] = col
    return ThresholdMatrix(log_a=log_a)


@dataclass(frozen=True)
class Verdict:
    """Outcome of running the rule on one path.

    ``stopped`` False means the horizon was exhausted (censored trial);
    censoring is never reported as a detection.
    """

    stopped: bool
    time: Optional[int]          # alarm time T when stopped
    stream: Optional[int]        # identified stream d in 1..N
    frame: Optional[StatisticFrame]
    met_streams: tuple = ()
    horizon: Optional[int] = None

    @property
    def censored(self) -> bool:
        return not self.stopped


def check_stop(frame: StatisticFrame, thresholds: ThresholdMatrix) -> Optional[Verdict]:
    """Return a Verdict if some stream meets its full criterion at this
    frame, else None.  Ties break to the smallest stream index."""
    n = thresholds.n_streams
    diag = np.eye(n, n + 1, k=1, dtype=bool)
    with np.errstate(invalid="ignore"):
        diff_ok = (frame.log_ratio - thresholds.log_a) >= 0
    met = np.all(diff_ok | diag, axis=1)
    if not np.any(met):
        return None
    winners = tuple(int(i) + 1 for i in np.nonzero(met)[0])
    return Verdict(stopped=True, time=frame.n, stream=winners[0], frame=frame,
                   met_streams=winners)


def run(models: Sequence[Model], prior: ChangePointPrior,
        mixing: Union[MixingMeasure, Sequence[MixingMeasure]],
        thresholds: ThresholdMatrix, path: Union[TrialPath, np.ndarray],
        window: Optional[int] = None) -> Verdict:
    """Feed a finite path through the detector and stop at the first time
    any stream's criterion is met.

    The loop screens each step with cheap lower bounds on the competitor
    denominators before computing the exact frame, which never changes the
    verdict: a lower bound on a denominator gives an upper bound on the
    ratio, so steps rejected by the screen fail the exact criterion too.
    """
    obs = path.observations if isinstance(path, TrialPath) else np.asarray(path, dtype=float)
    n_streams, horizon = obs.shape
    if n_streams != len(models):
        raise ValueError(f"path has {n_streams} streams, expected {len(models)}")
    det = Detector(prior, models, mixing, window=window,
                   capacity=max(horizon, 16))
    log_a = thresholds.log_a
    log_a0 = log_a[:, 0]
    for t in range(horizon):
        det.advance(obs[:, t])
        mix = det.log_mix_values
        c0 = mix - det.log_survivor
        cand = c0 >= log_a0
        if not np.any(cand):
            continue
        if n_streams > 1:
            slb = det.sup_lower_bounds
            ub = mix[:, None] - slb[None, :]      # upper bound on ratio vs j
            for i in np.nonzero(cand)[0]:
                ok = np.delete(ub[i] >= log_a[i, 1:], i)
                if not np.all(ok):
                    cand[i] = False
        if not np.any(cand):
            continue
        verdict = check_stop(det.frame(), thresholds)
        if verdict is not None:
            return verdict
    return Verdict(stopped=False, time=None, stream=None, frame=None,
                   horizon=horizon)
