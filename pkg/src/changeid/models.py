"""Stream observation models and log-likelihood-ratio increments.

Two concrete models are shipped:

* ``GaussianMeanShift`` -- i.i.d. N(0, sigma^2) observations that jump to
  mean theta after the change.
* ``ARGaussianSignal``  -- a deterministic signal of unknown amplitude theta
  appearing in stable AR(p) Gaussian noise.  Whitening by the AR
  coefficients reduces the LLR to a weighted Gaussian form.

Both post-change families are additive in theta, so the per-step LLR
increment is linear-quadratic in theta: inc = theta*u_t - theta^2*v_t/2
with per-step coefficients u_t, v_t depending only on the observations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.signal import lfilter

__all__ = [
    "whiten", "ConstantSignal", "SineSignal",
    "GaussianMeanShift", "ARGaussianSignal", "TrialPath",
    "simulate", "info_number_pair", "ModelError",
]


class ModelError(ValueError):
    """Invalid model parameters or out-of-domain evaluation."""


def whiten(x: Sequence[float], coeffs: Sequence[float]) -> np.ndarray:
    """Apply the AR whitening filter x~_n = x_n - sum_t c_t x_{n-t}.

    Indices before the start of the sequence are treated as zero, which
    makes the effective filter order min(n, p) at the head of the series.
    """
    x = np.asarray(x, dtype=float)
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size == 0:
        return x.copy()
    return lfilter(np.concatenate(([1.0], -coeffs)), [1.0], x)


@dataclass(frozen=True)
class ConstantSignal:
    amplitude: float = 1.0

    def values(self, horizon: int) -> np.ndarray:
        """Signal values S_t for t = 1..horizon."""
        return np.full(horizon, self.amplitude)


@dataclass(frozen=True)
class SineSignal:
    omega: float
    phase: float = 0.0
    amplitude: float = 1.0

    def values(self, horizon: int) -> np.ndarray:
        t = np.arange(1, horizon + 1)
        return self.amplitude * np.sin(self.omega * t + self.phase)


Signal = Union[ConstantSignal, SineSignal]


class _GaussianBase:
    """Shared LLR plumbing for the additive Gaussian models."""

    def _check_theta(self, theta: float) -> None:
        if not (self.theta_min <= theta <= self.theta_max):
            raise ModelError(
                f"theta={theta} outside parameter interval "
                f"[{self.theta_min}, {self.theta_max}]")

    def llr_coefficients(self, observations: np.ndarray):
        """Per-step coefficients (u, v) with increment theta*u - theta^2*v/2."""
        raise NotImplementedError

    def llr_increments(self, observations, thetas) -> np.ndarray:
        """Matrix of increments log L_{theta}(t), shape (T, len(thetas))."""
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        for th in thetas:
            self._check_theta(th)
        u, v = self.llr_coefficients(np.asarray(observations, dtype=float))
        return np.outer(u, thetas) - 0.5 * np.outer(v, thetas ** 2)

    def llr_increment(self, theta: float, t: int, history) -> float:
        """Single increment at time t (1-based) given the stream history."""
        history = np.asarray(history, dtype=float)
        if t < 1 or history.size < t:
            raise ModelError(f"need history of length >= t={t}")
        self._check_theta(theta)
        u, v = self.llr_coefficients(history[:t])
        return float(theta * u[t - 1] - 0.5 * theta ** 2 * v[t - 1])


@dataclass(frozen=True)
class GaussianMeanShift(_GaussianBase):
    """i.i.d. N(0, sigma^2) pre-change, N(theta, sigma^2) post-change."""

    theta_min: float
    theta_max: float
    sigma: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ModelError(f"sigma must be positive, got {self.sigma}")
        if not (0 < self.theta_min <= self.theta_max):
            raise ModelError("need 0 < theta_min <= theta_max")

    def llr_coefficients(self, observations):
        s2 = self.sigma ** 2
        return observations / s2, np.full(observations.shape, 1.0 / s2)

    def signal_values(self, horizon: int) -> np.ndarray:
        return np.ones(horizon)

    def sample_noise(self, horizon: int, rng: np.random.Generator) -> np.ndarray:
        return self.sigma * rng.standard_normal(horizon)

    def info_number(self, theta: float) -> float:
        """Kullback-Leibler rate theta^2 / (2 sigma^2)."""
        self._check_theta(theta)
        return theta ** 2 / (2.0 * self.sigma ** 2)

    def null_info_number(self, theta: float) -> float:
        """KL rate of pre-change law vs the theta post-change law."""
        self._check_theta(theta)
        return theta ** 2 / (2.0 * self.sigma ** 2)


@dataclass(frozen=True)
class ARGaussianSignal(_GaussianBase):
    """Deterministic signal theta*S_t in stable AR(p) Gaussian noise."""

    theta_min: float
    theta_max: float
    sigma: float = 1.0
    ar_coeffs: tuple = ()
    signal: Signal = ConstantSignal()
    stationary_init: bool = False
    energy_window: int = 100_000

    def __post_init__(self):
        if self.sigma <= 0:
            raise ModelError(f"sigma must be positive, got {self.sigma}")
        if not (0 < self.theta_min <= self.theta_max):
            raise ModelError("need 0 < theta_min <= theta_max")
        object.__setattr__(self, "ar_coeffs", tuple(float(c) for c in self.ar_coeffs))

    def signal_values(self, horizon: int) -> np.ndarray:
        return self.signal.values(horizon)

    def llr_coefficients(self, observations):
        s2 = self.sigma ** 2
        st = whiten(self.signal_values(observations.size), self.ar_coeffs)
        xt = whiten(observations, self.ar_coeffs)
        return st * xt / s2, st ** 2 / s2

    def sample_noise(self, horizon: int, rng: np.random.Generator) -> np.ndarray:
        burn = 1000 if self.stationary_init else 0
        w = self.sigma * rng.standard_normal(horizon + burn)
        if not self.ar_coeffs:
            return w[burn:]
        xi = lfilter([1.0], np.concatenate(([1.0], -np.asarray(self.ar_coeffs))), w)
        return xi[burn:]

    def whitened_energy(self) -> float:
        """Cesaro limit Q of the mean squared whitened signal."""
        if isinstance(self.signal, ConstantSignal):
            return (self.signal.amplitude * (1.0 - sum(self.ar_coeffs))) ** 2
        st = whiten(self.signal_values(self.energy_window), self.ar_coeffs)
        return float(np.mean(st ** 2))

    def info_number(self, theta: float) -> float:
        """LLR drift rate theta^2 Q / (2 sigma^2)."""
        self._check_theta(theta)
        return theta ** 2 * self.whitened_energy() / (2.0 * self.sigma ** 2)

    def null_info_number(self, theta: float) -> float:
        self._check_theta(theta)
        return theta ** 2 * self.whitened_energy() / (2.0 * self.sigma ** 2)


Model = Union[GaussianMeanShift, ARGaussianSignal]


def info_number_pair(model_i: Model, theta_i: float, model_j: Model, theta_j: float,
                     same_stream: bool = False) -> float:
    """Pairwise drift rate I_ij = I_i(theta_i) + I_0j(theta_j), i != j."""
    if same_stream:
        raise ModelError("pairwise information number requires distinct streams")
    return model_i.info_number(theta_i) + model_j.null_info_number(theta_j)


def info_number_pair_inf(model_i: Model, theta_i: float, model_j: Model,
                         grid_j: Optional[np.ndarray] = None):
    """Infimum of I_ij over the competitor's parameter space.

    Returns (on_grid, analytic).  For the shipped models I_0j is increasing
    in |theta_j|, so the infimum over [theta_min, theta_max] sits at
    theta_min; the grid value is reported alongside because the detector's
    denominator optimizes on the grid.
    """
    analytic = (model_i.info_number(theta_i)
                + model_j.null_info_number(model_j.theta_min))
    if grid_j is None:
        return analytic, analytic
    on_grid = (model_i.info_number(theta_i)
               + min(model_j.null_info_number(t) for t in np.asarray(grid_j)))
    return on_grid, analytic


@dataclass(frozen=True)
class TrialPath:
    """One simulated multistream trajectory."""

    observations: np.ndarray      # (N, horizon)
    true_nu: int                  # change point; ignored when true_stream == 0
    true_stream: int              # 0 = no change, else 1..N
    true_theta: float = 0.0

    @property
    def horizon(self) -> int:
        return self.observations.shape[1]

    @property
    def n_streams(self) -> int:
        return self.observations.shape[0]


def simulate(models: Sequence[Model], horizon: int, rng: np.random.Generator,
             stream: int = 0, theta: float = 0.0, nu=None, prior=None) -> TrialPath:
    """Sample a TrialPath: all streams pre-change except ``stream`` (1-based)
    which gains the additive signal theta*S_t for t > nu.

    ``nu`` may be an integer; when None and a prior is given, nu is drawn
    from the prior.  ``stream=0`` simulates the no-change hypothesis.
    """
    if horizon < 1:
        raise ModelError("horizon must be >= 1")
    if not 0 <= stream <= len(models):
        raise ModelError(f"stream index {stream} out of range 0..{len(models)}")
    obs = np.empty((len(models), horizon))
    for idx, model in enumerate(models):
        obs[idx] = model.sample_noise(horizon, rng)
    if stream == 0:
        return TrialPath(observations=obs, true_nu=-1, true_stream=0)
    if nu is None:
        if prior is None:
            raise ModelError("need a fixed nu or a prior to draw it from")
        nu = prior.sample(rng)
    nu = int(nu)
    model = models[stream - 1]
    model._check_theta(theta)
    if nu < horizon:
        sig = model.signal_values(horizon)
        start = max(nu, 0)  # first post-change observation is X_{nu+1}
        obs[stream - 1, start:] += theta * sig[start:]
    return TrialPath(observations=obs, true_nu=nu, true_stream=stream, true_theta=theta)
