"""
Beliefs on the unit interval: a normal law with the mass outside [0, 1]
collapsed onto atoms at 0 and 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr

SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class BeliefDistribution:
    """
    Clipped normal belief law.

    Parameters
    ----------
    mu : float
        Location of the underlying normal (the market-driven median when it
        lies inside the unit interval).
    sigma : float
        Dispersion, floored at ``1e-6``.
    """

    mu: float
    sigma: float

    def __post_init__(self):
        if not np.isfinite(self.mu):
            raise ValueError("mu must be finite")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "sigma", max(float(self.sigma), SIGMA_FLOOR))

    def cdf(self, x):
        return cdf(self, x)

    def sample(self, rng: np.random.Generator, size=None):
        return sample(self, rng, size)

    @property
    def atom_zero(self) -> float:
        return float(ndtr(-self.mu / self.sigma))

    @property
    def atom_one(self) -> float:
        return float(ndtr(-(1.0 - self.mu) / self.sigma))


def cdf(dist: BeliefDistribution, x):
    """
    Distribution function on [0, 1].

    ``Phi((x - mu) / sigma)`` below 1, which includes the atom at 0, and
    exactly 1 at ``x = 1``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("cdf argument must lie in [0, 1]")
    out = np.where(x >= 1.0, 1.0, ndtr((x - dist.mu) / dist.sigma))
    return out[()] if out.ndim == 0 else out


def log_cdf(dist: BeliefDistribution, x):
    """Logarithm of :func:`cdf`, accurate in the lower tail."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 1.0, 0.0, log_ndtr((x - dist.mu) / dist.sigma))
    return out[()] if out.ndim == 0 else out


def log_sf(dist: BeliefDistribution, x):
    """Logarithm of ``1 - cdf``, accurate in the upper tail."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(x >= 1.0, -np.inf, log_ndtr((dist.mu - x) / dist.sigma))
    return out[()] if out.ndim == 0 else out


def sample(dist: BeliefDistribution, rng: np.random.Generator, size=None):
    """Draw ``Normal(mu, sigma)`` and clip to [0, 1]; one normal draw per value."""
    z = rng.normal(dist.mu, dist.sigma, size=size)
    return np.clip(z, 0.0, 1.0) if size is not None else float(min(max(z, 0.0), 1.0))
