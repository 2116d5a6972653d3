"""Log-domain statistic engine for the multistream detector.

For every stream i the engine tracks, over candidate change points k and a
finite mixing grid of post-change parameters, the log likelihood ratios

    log LR_{i,theta}(k, n) = sum_{t=k+1}^{n} log L_{i,theta}(t).

These are represented through per-grid-point cumulative sums, so advancing
one step costs O(grid) and the table never has to be rewritten.  From the
table the engine derives, each step:

* log of the prior-and-weight mixture statistic (numerator of every ratio),
* log of the sup-over-grid statistic (denominator against stream j),
* the ratio matrix against the no-change hypothesis and every competitor.

The head mass pi_{-1} is folded into k = 0 because both candidates share
the same likelihood ratio.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .models import Model, whiten
from .prior import ChangePointPrior

__all__ = ["MixingMeasure", "StatisticFrame", "Detector", "EngineError",
           "posterior_no_change", "frame_rows"]

_WEIGHT_TOL = 1e-12


class EngineError(ValueError):
    """Invalid engine configuration or observation."""


def _lse(a: np.ndarray, axis=None) -> np.ndarray:
    """log(sum(exp(a))) robust to -inf entries."""
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis)) + np.squeeze(m, axis=axis)
    return out


@dataclass(frozen=True)
class MixingMeasure:
    """Discrete mixing measure: strictly increasing grid, weights summing to 1."""

    grid: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "weights", weights)
        if grid.ndim != 1 or grid.size == 0 or grid.shape != weights.shape:
            raise EngineError("grid and weights must be matching nonempty 1-d arrays")
        if grid.size > 1 and not np.all(np.diff(grid) > 0):
            raise EngineError("grid must be strictly increasing")
        if np.any(weights < 0):
            raise EngineError("weights must be nonnegative")
        if abs(math.fsum(weights.tolist()) - 1.0) > _WEIGHT_TOL:
            raise EngineError("weights must sum to 1 within 1e-12")

    @property
    def log_weights(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.weights)

    @property
    def max_spacing(self) -> float:
        if self.grid.size == 1:
            return 0.0
        return float(np.max(np.diff(self.grid)))

    @classmethod
    def uniform(cls, theta_min: float, theta_max: float, count: int,
                spacing: str = "linear") -> "MixingMeasure":
        grid = cls._make_grid(theta_min, theta_max, count, spacing)
        return cls(grid=grid, weights=np.full(count, 1.0 / count))

    @classmethod
    def gaussian(cls, theta_min: float, theta_max: float, count: int, v: float,
                 spacing: str = "linear") -> "MixingMeasure":
        """Half-normal weights w_g ~ phi(theta_g / v) * cell width."""
        if v <= 0:
            raise EngineError(f"gaussian weight scale must be positive, got {v}")
        grid = cls._make_grid(theta_min, theta_max, count, spacing)
        if count == 1:
            return cls(grid=grid, weights=np.ones(1))
        edges = np.concatenate(([grid[0]], 0.5 * (grid[1:] + grid[:-1]), [grid[-1]]))
        w = np.exp(-0.5 * (grid / v) ** 2) * np.diff(edges)
        w = w / math.fsum(w.tolist())
        return cls(grid=grid, weights=w)

    @staticmethod
    def _make_grid(theta_min, theta_max, count, spacing) -> np.ndarray:
        if count < 1:
            raise EngineError("grid count must be >= 1")
        if not 0 < theta_min <= theta_max:
            raise EngineError("need 0 < theta_min <= theta_max")
        if count == 1:
            return np.array([theta_min])
        if spacing == "linear":
            return np.linspace(theta_min, theta_max, count)
        if spacing == "log":
            return np.geomspace(theta_min, theta_max, count)
        raise EngineError(f"unknown grid spacing {spacing!r}")


@dataclass(frozen=True)
class StatisticFrame:
    """Immutable snapshot of all detector statistics at time n.

    ``log_ratio`` has shape (N, N+1): row i-1 is stream i, column 0 is the
    ratio against the no-change hypothesis, column j the ratio against
    stream j (entry for j == i is NaN).
    """

    n: int
    log_mix: np.ndarray
    log_sup: np.ndarray
    log_survivor: float
    log_ratio: np.ndarray
    degraded: bool = False


def posterior_no_change(frame: StatisticFrame, stream: int) -> float:
    """P(nu >= n | data) under the stream-i change model: 1/(1 + ratio)."""
    x = frame.log_ratio[stream - 1, 0]
    # 1 / (1 + e^x) computed as exp(-logaddexp(0, x))
    return float(math.exp(-np.logaddexp(0.0, x)))


def frame_rows(frame: StatisticFrame):
    """Debug dump rows (n, stream, j, logLambdaBar)."""
    rows = []
    n_streams = frame.log_ratio.shape[0]
    for i in range(1, n_streams + 1):
        for j in range(0, n_streams + 1):
            if j == i:
                continue
            rows.append((frame.n, i, j, float(frame.log_ratio[i - 1, j])))
    return rows


class Detector:
    """Single-owner mutable detector state over N streams.

    Observations are fed one time step at a time; ``step`` returns the full
    exact StatisticFrame.  Cheap per-step accessors (``log_mix_values``,
    ``sup_lower_bounds``) are exposed for callers that only need to decide
    whether an exact frame is worth computing.
    """

    def __init__(self, prior: ChangePointPrior, models: Sequence[Model],
                 mixing: Union[MixingMeasure, Sequence[MixingMeasure]],
                 window: Optional[int] = None, capacity: int = 1024):
        self.prior = prior
        self.models = list(models)
        self.n_streams = len(self.models)
        if self.n_streams < 1:
            raise EngineError("need at least one stream model")
        if isinstance(mixing, MixingMeasure):
            mixing = [mixing] * self.n_streams
        self.mixing = list(mixing)
        if len(self.mixing) != self.n_streams:
            raise EngineError("need one mixing measure per stream")
        self.window = None
        if window is not None:
            self.set_window(window)

        # pad all grids to a common width with zero-weight copies of the
        # last grid point; duplicates change neither mixture nor sup
        width = max(m.grid.size for m in self.mixing)
        self._grid = np.empty((self.n_streams, width))
        self._logw = np.full((self.n_streams, width), -np.inf)
        for s, m in enumerate(self.mixing):
            g = m.grid.size
            self._grid[s, :g] = m.grid
            self._grid[s, g:] = m.grid[-1]
            self._logw[s, :g] = m.log_weights
        self._grid_sq = self._grid ** 2
        self._width = width

        self.n = 0
        self._cap = max(int(capacity), 16)
        self._cumz = np.zeros((self._cap + 1, self.n_streams, width))
        self._lp = self.prior.log_pmf_head_merged(self._cap)
        self._B = np.full((self.n_streams, width), -np.inf)

        # per-stream whitening context for incremental increments
        self._p = []
        self._obs_tail = []
        self._st_whiten = []
        for model in self.models:
            coeffs = np.asarray(getattr(model, "ar_coeffs", ()), dtype=float)
            self._p.append(coeffs)
            self._obs_tail.append(np.zeros(max(coeffs.size, 1)))
            self._st_whiten.append(whiten(model.signal_values(self._cap), coeffs))
        self._invalidate()

    # -- configuration ---------------------------------------------------

    def set_window(self, window: Optional[int]) -> None:
        """Restrict the candidate change points to the last ``window`` steps."""
        if window is not None and window < 1:
            raise EngineError(f"window must be >= 1, got {window}")
        rebuild = self.window is not None and window is None and self.n > 0
        self.window = None if window is None else int(window)
        if rebuild:
            # incremental accumulator was not maintained in window mode
            k = np.arange(self.n)
            terms = self._lp[k, None, None] - self._cumz[k]
            self._B = _lse(terms, axis=0)
        self._invalidate()

    @property
    def _window_start(self) -> int:
        if self.window is None:
            return 0
        return max(0, self.n - self.window)

    @property
    def evicted_log_prior_mass(self) -> float:
        """log of the merged prior mass currently outside the window."""
        s = self._window_start
        if s == 0:
            return -math.inf
        return float(_lse(self._lp[:s]))

    # -- stepping --------------------------------------------------------

    def _grow(self) -> None:
        new_cap = self._cap * 2
        cumz = np.zeros((new_cap + 1, self.n_streams, self._width))
        cumz[: self._cap + 1] = self._cumz
        self._cumz = cumz
        self._lp = self.prior.log_pmf_head_merged(new_cap)
        for s, model in enumerate(self.models):
            self._st_whiten[s] = whiten(model.signal_values(new_cap), self._p[s])
        self._cap = new_cap

    def advance(self, x) -> None:
        """Consume one observation vector without building a frame."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_streams,):
            raise EngineError(f"expected observation vector of length {self.n_streams}")
        if not np.all(np.isfinite(x)):
            raise EngineError(f"non-finite observation at step {self.n + 1}: {x}")
        if self.n + 1 > self._cap:
            self._grow()
        n = self.n
        u = np.empty(self.n_streams)
        v = np.empty(self.n_streams)
        for s, model in enumerate(self.models):
            s2 = model.sigma ** 2
            coeffs = self._p[s]
            if coeffs.size:
                tail = self._obs_tail[s]
                pn = min(n, coeffs.size)
                xt = x[s] - float(coeffs[:pn] @ tail[:pn])
                st = self._st_whiten[s][n]
                u[s] = st * xt / s2
                v[s] = st * st / s2
                tail[1:] = tail[:-1]
                tail[0] = x[s]
            else:
                u[s] = x[s] / s2
                v[s] = 1.0 / s2
        inc = u[:, None] * self._grid - (0.5 * v)[:, None] * self._grid_sq
        self._cumz[n + 1] = self._cumz[n] + inc
        if self.window is None:
            np.logaddexp(self._B, self._lp[n] - self._cumz[n], out=self._B)
        self.n = n + 1
        self._invalidate()

    def step(self, x) -> StatisticFrame:
        """Consume one observation vector and return the exact frame."""
        self.advance(x)
        return self.frame()

    # -- statistics ------------------------------------------------------

    def _invalidate(self) -> None:
        self._cache_mix = None
        self._cache_cheap = None
        self._cache_sup = None

    def _mix_and_cheap(self):
        if self._cache_mix is None:
            s = self._window_start
            if self.window is None:
                b = self._B
            else:
                k = np.arange(s, self.n)
                b = _lse(self._lp[k, None, None] - self._cumz[k], axis=0)
            t1 = self._cumz[self.n] + b
            self._cache_cheap = _lse(t1, axis=1)
            self._cache_mix = _lse(t1 + self._logw, axis=1)
        return self._cache_mix, self._cache_cheap

    @property
    def log_mix_values(self) -> np.ndarray:
        """log Lambda^pi_{i,W}(n) for every stream, shape (N,)."""
        return self._mix_and_cheap()[0]

    @property
    def sup_lower_bounds(self) -> np.ndarray:
        """Cheap per-stream lower bounds on the exact log sup statistic."""
        mix, cheap = self._mix_and_cheap()
        return np.maximum(mix, cheap - math.log(self._width))

    @property
    def log_sup_values(self) -> np.ndarray:
        """Exact log of sum_k pi_k max_g LR_{j,theta_g}(k, n), shape (N,)."""
        if self._cache_sup is None:
            s = self._window_start
            k = np.arange(s, self.n)
            diff = self._cumz[self.n][None, :, :] - self._cumz[k]
            rowmax = diff.max(axis=2)
            self._cache_sup = _lse(self._lp[k, None] + rowmax, axis=0)
        return self._cache_sup

    @property
    def log_survivor(self) -> float:
        return float(self.prior.log_survivor(self.n))

    @property
    def degraded(self) -> bool:
        s = self._window_start
        return bool(np.all(np.isneginf(self._lp[s:self.n])))

    def frame(self) -> StatisticFrame:
        if self.n < 1:
            raise EngineError("no observations consumed yet")
        mix, _ = self._mix_and_cheap()
        sup = self.log_sup_values
        lsv = self.log_survivor
        nn = self.n_streams
        ratio = np.empty((nn, nn + 1))
        ratio[:, 0] = mix - lsv
        for j in range(1, nn + 1):
            ratio[:, j] = mix - sup[j - 1]
            ratio[j - 1, j] = np.nan
        return StatisticFrame(n=self.n, log_mix=mix.copy(), log_sup=sup.copy(),
                              log_survivor=lsv, log_ratio=ratio,
                              degraded=self.degraded)

    def posterior_no_change(self, stream: int) -> float:
        return posterior_no_change(self.frame(), stream)
