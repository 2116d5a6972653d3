"""Change-point prior distributions on {-1, 0, 1, 2, ...}.

The change point nu may be negative (change already in effect when
observation starts); all negative mass is collapsed into a single head
probability q at nu = -1.  Three families are supported:

* geometric       -- exponential right tail, decay rate |log(1 - rho)|
* discrete_weibull -- heavy (sub-exponential) tail for shape kappa < 1
* explicit_pmf    -- arbitrary finite table, truncated and renormalized
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = ["ChangePointPrior", "PriorError", "TailExponent", "Cp2Diagnostic"]

_NORM_TOL = 1e-12


class PriorError(ValueError):
    """Invalid prior parameters or out-of-domain query."""


@dataclass(frozen=True)
class TailExponent:
    """Exponential decay rate of the right tail (mu); estimated=True when
    obtained by regression on a truncated table rather than closed form."""

    mu: float
    estimated: bool = False


@dataclass(frozen=True)
class Cp2Diagnostic:
    """Truncated value of sum_k pi_k |log pi_k|**r with a convergence flag.

    ``finite`` is certified analytically for the closed-form families; for
    explicit tables it comes from a tail-ratio test on the summands, so a
    slowly decaying table is flagged as not certified even if the partial
    sum looks tame.
    """

    finite: bool
    partial_sum: float
    r: float
    horizon: int


class ChangePointPrior:
    """Prior pi_k = P(nu = k) on k in {-1, 0, 1, ...}."""

    GEOMETRIC = "geometric"
    DISCRETE_WEIBULL = "discrete_weibull"
    EXPLICIT = "explicit_pmf"

    def __init__(self, kind: str, q: float = 0.0, *, rho: Optional[float] = None,
                 kappa: Optional[float] = None, scale: Optional[float] = None,
                 probs: Optional[np.ndarray] = None):
        if not 0.0 <= q < 1.0:
            raise PriorError(f"head mass q must be in [0, 1), got {q}")
        self.kind = kind
        self.q = float(q)
        self.rho = rho
        self.kappa = kappa
        self.scale = scale
        self._probs = None
        self._tail = None  # reverse-cumulative table for explicit kind
        if kind == self.GEOMETRIC:
            if rho is None or not 0.0 < rho < 1.0:
                raise PriorError(f"geometric rho must be in (0, 1), got {rho}")
        elif kind == self.DISCRETE_WEIBULL:
            if kappa is None or not 0.0 < kappa <= 1.0:
                raise PriorError(f"weibull shape must be in (0, 1], got {kappa}")
            if scale is None or scale <= 0.0:
                raise PriorError(f"weibull scale must be positive, got {scale}")
        elif kind == self.EXPLICIT:
            if probs is None:
                raise PriorError("explicit_pmf prior needs a probability table")
            probs = np.asarray(probs, dtype=float)
            if probs.ndim != 1 or probs.size == 0:
                raise PriorError("probability table must be a nonempty 1-d array")
            if np.any(probs < 0) or not np.all(np.isfinite(probs)):
                raise PriorError("probability table entries must be finite and >= 0")
            total = math.fsum(probs.tolist())
            if total <= 0:
                raise PriorError("probability table has no mass")
            # renormalize the k >= 0 part to carry mass 1 - q
            probs = probs * ((1.0 - q) / total)
            # reverse cumulative sum gives exact survivor/pmf consistency:
            # tail[n] = sum_{k >= n} pi_k, tail[H+1] = 0
            tail = np.zeros(probs.size + 1)
            tail[:-1] = np.cumsum(probs[::-1])[::-1]
            self._probs = probs
            self._tail = tail
        else:
            raise PriorError(f"unknown prior kind {kind!r}")

    # -- constructors ---------------------------------------------------

    @classmethod
    def geometric(cls, rho: float, q: float = 0.0) -> "ChangePointPrior":
        return cls(cls.GEOMETRIC, q, rho=rho)

    @classmethod
    def discrete_weibull(cls, kappa: float, scale: float, q: float = 0.0) -> "ChangePointPrior":
        return cls(cls.DISCRETE_WEIBULL, q, kappa=kappa, scale=scale)

    @classmethod
    def from_pmf(cls, probs, q: float = 0.0) -> "ChangePointPrior":
        return cls(cls.EXPLICIT, q, probs=probs)

    # -- basic queries ---------------------------------------------------

    @property
    def head_mass(self) -> float:
        return self.q

    @property
    def truncation_horizon(self) -> Optional[int]:
        if self.kind == self.EXPLICIT:
            return self._probs.size - 1
        return None

    def _weibull_log_survivor(self, n) -> np.ndarray:
        # S(n) = exp(-(n / scale)**kappa), S(0) = 1
        n = np.asarray(n, dtype=float)
        return -np.power(n / self.scale, self.kappa)

    def pmf(self, k: int) -> float:
        if k < -1:
            raise PriorError(f"pmf defined on k >= -1, got {k}")
        if k == -1:
            return self.q
        if self.kind == self.GEOMETRIC:
            return (1.0 - self.q) * self.rho * (1.0 - self.rho) ** k
        if self.kind == self.DISCRETE_WEIBULL:
            s0 = math.exp(self._weibull_log_survivor(k))
            s1 = math.exp(self._weibull_log_survivor(k + 1))
            return (1.0 - self.q) * (s0 - s1)
        if k >= self._probs.size:
            return 0.0
        return float(self._probs[k])

    def survivor(self, n: int) -> float:
        """P(nu >= n) for n >= 0; survivor(0) = 1 - q."""
        if n < 0:
            raise PriorError(f"survivor defined on n >= 0, got {n}")
        return float(np.exp(self.log_survivor(n)))

    def log_survivor(self, n) -> np.ndarray:
        """log P(nu >= n), vectorized over n >= 0 (may be -inf)."""
        n = np.asarray(n)
        if np.any(n < 0):
            raise PriorError("survivor defined on n >= 0")
        head = math.log1p(-self.q) if self.q < 1.0 else -math.inf
        if self.kind == self.GEOMETRIC:
            return head + n * math.log1p(-self.rho)
        if self.kind == self.DISCRETE_WEIBULL:
            return head + self._weibull_log_survivor(n)
        tail = self._tail[np.minimum(n, self._tail.size - 1)]
        with np.errstate(divide="ignore"):
            return np.log(tail)

    def log_pmf(self, k) -> np.ndarray:
        """log pi_k, vectorized over k >= 0 (use pmf(-1) for the head)."""
        k = np.asarray(k)
        if np.any(k < 0):
            raise PriorError("log_pmf vectorized form defined on k >= 0")
        head = math.log1p(-self.q) if self.q < 1.0 else -math.inf
        if self.kind == self.GEOMETRIC:
            return head + math.log(self.rho) + k * math.log1p(-self.rho)
        if self.kind == self.DISCRETE_WEIBULL:
            ls0 = self._weibull_log_survivor(k)
            ls1 = self._weibull_log_survivor(k + 1)
            # log(S(k) - S(k+1)) without cancellation for tiny tails
            with np.errstate(divide="ignore"):
                return head + ls0 + np.log(-np.expm1(ls1 - ls0))
        out = np.full(k.shape, -np.inf, dtype=float)
        inside = k < self._probs.size
        with np.errstate(divide="ignore"):
            out[inside] = np.log(self._probs[k[inside]])
        return out

    def log_pmf_head_merged(self, horizon: int) -> np.ndarray:
        """log of (pi_{-1} + pi_0, pi_1, ..., pi_{horizon-1}).

        The head mass is folded into k = 0 because the likelihood ratio from
        k = -1 coincides with the one from k = 0 (no observation at t = 0).
        """
        if horizon < 1:
            raise PriorError("horizon must be >= 1")
        lp = np.asarray(self.log_pmf(np.arange(horizon)), dtype=float)
        lp[0] = math.log(self.q + self.pmf(0)) if self.q + self.pmf(0) > 0 else -math.inf
        return lp

    def sample(self, rng: np.random.Generator, size=None):
        """Draw nu from the prior (nu = -1 with probability q)."""
        scalar = size is None
        m = 1 if scalar else int(np.prod(size))
        u = rng.random(m)
        out = np.empty(m, dtype=np.int64)
        head = u < self.q
        out[head] = -1
        v = rng.random(m)
        if self.kind == self.GEOMETRIC:
            # max{k : (1-rho)^k > v}
            body = np.floor(np.log(v) / math.log1p(-self.rho)).astype(np.int64)
        elif self.kind == self.DISCRETE_WEIBULL:
            # max{k : exp(-(k/scale)^kappa) > v}
            body = np.ceil(self.scale * (-np.log(v)) ** (1.0 / self.kappa)).astype(np.int64) - 1
            body = np.maximum(body, 0)
        else:
            cdf = np.cumsum(self._probs) / (1.0 - self.q) if self.q < 1 else np.cumsum(self._probs)
            body = np.searchsorted(cdf, v, side="right")
            body = np.minimum(body, self._probs.size - 1)
        out[~head] = body[~head]
        if scalar:
            return int(out[0])
        return out.reshape(size)

    # -- tail diagnostics ------------------------------------------------

    def tail_exponent(self) -> TailExponent:
        """Decay rate mu = lim |log P(nu >= n)| / n (estimated for tables)."""
        if self.kind == self.GEOMETRIC:
            return TailExponent(mu=-math.log1p(-self.rho), estimated=False)
        if self.kind == self.DISCRETE_WEIBULL:
            if self.kappa < 1.0:
                return TailExponent(mu=0.0, estimated=False)
            return TailExponent(mu=1.0 / self.scale, estimated=False)
        horizon = self._probs.size
        lo, hi = max(1, horizon // 2), max(2, int(horizon * 0.9))
        n = np.arange(lo, hi)
        ls = self.log_survivor(n)
        ok = np.isfinite(ls)
        if ok.sum() < 2:
            return TailExponent(mu=0.0, estimated=True)
        slope = np.polyfit(n[ok], -ls[ok], 1)[0]
        return TailExponent(mu=max(slope, 0.0), estimated=True)

    def check_cp2(self, r: float, horizon: int = 100_000) -> Cp2Diagnostic:
        """Partial sum of pi_k |log pi_k|**r with a convergence flag."""
        if r < 1:
            raise PriorError(f"moment order r must be >= 1, got {r}")
        if self.kind == self.EXPLICIT:
            horizon = self._probs.size - 1
        k = np.arange(0, horizon + 1)
        lp = self.log_pmf(k)
        with np.errstate(invalid="ignore"):
            terms = np.exp(lp) * np.abs(lp) ** r
        terms = np.where(np.isfinite(lp), terms, 0.0)
        partial = float(math.fsum(terms.tolist()))
        if self.kind in (self.GEOMETRIC, self.DISCRETE_WEIBULL):
            # exponential / Weibull-type tails dominate any power of log pi_k
            return Cp2Diagnostic(finite=True, partial_sum=partial, r=r, horizon=horizon)
        # tail-ratio test over the last decade of nonzero summands
        nz = np.nonzero(terms > 0)[0]
        if nz.size < 10:
            return Cp2Diagnostic(finite=True, partial_sum=partial, r=r, horizon=horizon)
        last = nz[-1]
        first = max(nz[0], int(last * 0.9))
        if last <= first or terms[first] <= 0:
            return Cp2Diagnostic(finite=True, partial_sum=partial, r=r, horizon=horizon)
        # geometric-mean term ratio over the window; ratios approaching 1
        # mean the test cannot certify convergence within the horizon
        gm_ratio = (terms[last] / terms[first]) ** (1.0 / (last - first))
        finite = bool(gm_ratio <= 1.0 - 10.0 / horizon)
        return Cp2Diagnostic(finite=finite, partial_sum=partial, r=r, horizon=horizon)
