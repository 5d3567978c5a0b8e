"""Truncated normal distribution: density, CDF, inverse-CDF sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class TruncatedNormal:
    """Normal(mu, sigma^2) restricted to [lower, upper].

    mu and sigma are the location/scale of the parent normal, not the
    moments of the truncated law. Bounds may be +-inf.
    """

    mu: float
    sigma: float
    lower: float
    upper: float

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.lower < self.upper:
            raise ValueError(f"need lower < upper, got [{self.lower}, {self.upper}]")

    @property
    def _mass(self) -> float:
        # probability the parent normal assigns to [lower, upper]
        return float(ndtr(self._std(self.upper)) - ndtr(self._std(self.lower)))

    def _std(self, x):
        return (np.asarray(x, dtype=float) - self.mu) / self.sigma

    def logpdf(self, x):
        """Log density; -inf outside the truncation interval."""
        x = np.asarray(x, dtype=float)
        z = self._std(x)
        out = -0.5 * z * z - math.log(self.sigma) - _LOG_SQRT_2PI - math.log(self._mass)
        out = np.where((x >= self.lower) & (x <= self.upper), out, -np.inf)
        return out if out.ndim else float(out)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        lo = ndtr(self._std(self.lower))
        out = (ndtr(self._std(np.clip(x, self.lower, self.upper))) - lo) / self._mass
        return out if out.ndim else float(out)

    def ppf(self, q):
        """Inverse CDF; q in [0, 1] maps onto [lower, upper]."""
        q = np.asarray(q, dtype=float)
        lo = ndtr(self._std(self.lower))
        hi = ndtr(self._std(self.upper))
        out = self.mu + self.sigma * ndtri(lo + q * (hi - lo))
        out = np.clip(out, self.lower, self.upper)
        return out if out.ndim else float(out)

    def sample(self, gen: np.random.Generator, size=None):
        """Inverse-CDF draw(s), deterministic given the generator state."""
        return self.ppf(gen.random(size))

    def contains(self, x) -> bool:
        return bool(np.all((np.asarray(x) >= self.lower) & (np.asarray(x) <= self.upper)))

    def to_dict(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma, "lower": self.lower, "upper": self.upper}

    @classmethod
    def from_dict(cls, d: dict) -> "TruncatedNormal":
        return cls(mu=d["mu"], sigma=d["sigma"], lower=d["lower"], upper=d["upper"])
