"""Small numerical helpers shared by the estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

EXACT = "exact-enumeration"
Q_MC = "Q-monte-carlo"
DIRECT_MC = "direct-monte-carlo"


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo (or exact) value with its standard error."""

    value: float
    stderr: float
    samples: int
    estimator: str = DIRECT_MC
    discards: int = 0

    def __post_init__(self):
        if not self.stderr >= 0:
            raise ValueError(f"standard error must be >= 0, got {self.stderr}")
        if self.estimator == EXACT and self.stderr != 0:
            raise ValueError("exact estimates carry a zero standard error")

    def z_score(self, target: float) -> float:
        if self.stderr == 0:
            return 0.0 if self.value == target else math.inf
        return (self.value - target) / self.stderr

    def within(self, target: float, n_se: float) -> bool:
        return abs(self.z_score(target)) <= n_se

    @property
    def discard_fraction(self) -> float:
        total = self.samples + self.discards
        return self.discards / total if total else 0.0


def exact(value: float) -> Estimate:
    return Estimate(float(value), 0.0, 0, EXACT)


def mean_estimate(x: np.ndarray, estimator: str = DIRECT_MC, discards: int = 0) -> Estimate:
    x = np.asarray(x, dtype=float)
    n = x.size
    if n == 0:
        return Estimate(math.nan, 0.0, 0, estimator, discards)
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(float(x.mean()), se, n, estimator, discards)


def self_normalized(values: np.ndarray, weights: np.ndarray, estimator: str = Q_MC,
                    discards: int = 0) -> Estimate:
    """Self-normalized importance-sampling mean with delta-method error."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n = values.size
    wsum = weights.sum()
    mu = float((weights * values).sum() / wsum)
    if n < 2:
        return Estimate(mu, 0.0, n, estimator, discards)
    wn = weights / wsum
    var = float((wn ** 2 * (values - mu) ** 2).sum())
    return Estimate(mu, math.sqrt(var), n, estimator, discards)


class RunningMoments:
    """Welford accumulator; ``merge`` combines (count, mean, M2) triples."""

    __slots__ = ("count", "mean", "m2")

    def __init__(self, count: int = 0, mean: float = 0.0, m2: float = 0.0):
        self.count, self.mean, self.m2 = count, mean, m2

    def push(self, x: float) -> None:
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.m2 += d * (x - self.mean)

    def push_array(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=float)
        if x.size:
            self.merge(RunningMoments(x.size, float(x.mean()), float(((x - x.mean()) ** 2).sum())))

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        n = self.count + other.count
        if n == 0:
            return self
        d = other.mean - self.mean
        self.mean += d * other.count / n
        self.m2 += other.m2 + d * d * self.count * other.count / n
        self.count = n
        return self

    def estimate(self, estimator: str = DIRECT_MC, discards: int = 0) -> Estimate:
        if self.count < 2:
            return Estimate(self.mean if self.count else math.nan, 0.0, self.count, estimator, discards)
        var = self.m2 / (self.count - 1)
        return Estimate(self.mean, math.sqrt(var / self.count), self.count, estimator, discards)


def log_sum_exp(values: Iterable[float]) -> float:
    vals = list(values)
    if not vals:
        return -math.inf
    top = max(vals)
    if top == -math.inf:
        return top
    return top + math.log(math.fsum(math.exp(v - top) for v in vals))


def ols(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Ordinary least squares fit ``y = slope * x + intercept``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points for a slope")
    xm, ym = x.mean(), y.mean()
    sxx = ((x - xm) ** 2).sum()
    if sxx == 0:
        raise ValueError("regressor is constant")
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    return slope, float(ym - slope * xm)
