"""Bounded planar Laplace noise for location privacy.

The mechanism draws a noise radius from the planar Laplace distribution but
never lets it leave a hard "noise circle" of radius R: the tail mass Delta
that would have fallen outside is redistributed uniformly over the circle.
R and Delta are coupled through a fixed point (Delta = delta * pi * R^2 with
R the (1 - Delta)-quantile of the radial CDF), so that the redistributed mass
has density exactly delta per square meter.

The grid side L is then chosen so that a perturbed point stays inside its
grid cell with probability at least p0, which is what makes cell-level
publishing useful downstream.

All randomness comes from a caller-supplied numpy Generator; nothing here
keeps state.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import lambertw

from .errors import ConfigurationError, DomainError

__all__ = [
    "PrivacyParams",
    "NoiseBound",
    "laplace_cdf",
    "laplace_cdf_inverse",
    "solve_noise_bound",
    "sample_radii",
    "bpl_perturb",
]

log = logging.getLogger(__name__)

# Below this target the derived cell side drops under 3R and the in-cell
# success analysis behind the grid-size formula no longer applies.
MIN_SUCCESS_TARGET = 0.7


@dataclass(frozen=True)
class PrivacyParams:
    """User-chosen privacy knobs.

    epsilon: budget, 1/meters. delta: failure density, 1/meters^2.
    rho: fraction of query points whose cells get published.
    p0: target probability that a perturbed point stays in its own cell.
    """

    epsilon: float
    delta: float
    rho: float = 0.6
    p0: float = 0.81

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise ConfigurationError(f"delta must be in (0,1), got {self.delta}")
        if not 0 < self.rho <= 1:
            raise ConfigurationError(f"rho must be in (0,1], got {self.rho}")
        if not 0 < self.p0 < 1:
            raise ConfigurationError(f"p0 must be in (0,1), got {self.p0}")
        if self.p0 < MIN_SUCCESS_TARGET:
            raise ConfigurationError(
                f"p0={self.p0} is below {MIN_SUCCESS_TARGET}; the derived cell side "
                "would fall under 3R, outside the regime the success bound covers"
            )


@dataclass(frozen=True)
class NoiseBound:
    """Solved mechanism geometry: tail mass, noise-circle radius, cell side."""

    delta_mass: float  # Delta, probability routed to the uniform branch
    radius: float      # R, hard cap on the noise radius (meters)
    cell_side: float   # L, grid cell side derived from p0 (meters)


def laplace_cdf(epsilon: float, r) -> np.ndarray | float:
    """Radial CDF of planar Laplace noise: 1 - (1 + eps*r) * exp(-eps*r)."""
    if epsilon <= 0:
        raise DomainError(f"epsilon must be > 0, got {epsilon}")
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise DomainError("radius must be non-negative")
    out = 1.0 - (1.0 + epsilon * r) * np.exp(-epsilon * r)
    return float(out) if out.ndim == 0 else out


def laplace_cdf_inverse(epsilon: float, p) -> np.ndarray | float:
    """Radius at which the radial CDF reaches p, via the Lambert W -1 branch.

    For p below about 1e-16 the W argument rounds onto the branch point -1/e
    and W returns nan; the true radius there is under sqrt(2p)/epsilon, so
    those inputs map to 0 rather than trusting float rounding.
    """
    if epsilon <= 0:
        raise DomainError(f"epsilon must be > 0, got {epsilon}")
    p = np.asarray(p, dtype=np.float64)
    if np.any((p < 0) | (p >= 1)):
        raise DomainError("p must lie in [0, 1)")
    with np.errstate(invalid="ignore"):
        r = -(lambertw((p - 1.0) / math.e, k=-1).real + 1.0) / epsilon
    r = np.where(np.isnan(r) | (p == 0.0), 0.0, r)
    r = np.maximum(r, 0.0)
    return float(r) if r.ndim == 0 else r


def solve_noise_bound(params: PrivacyParams) -> NoiseBound:
    """Solve the tail-mass fixed point and derive the noise and grid geometry.

    Delta solves Delta = delta * pi * [Cinv(1 - Delta)]^2; we root-find
    g(Delta) = Delta - delta*pi*Cinv(1-Delta)^2 on (1e-15, 1 - 1e-12).
    """
    eps, delta = params.epsilon, params.delta

    def g(d: float) -> float:
        r = laplace_cdf_inverse(eps, 1.0 - d)
        return d - delta * math.pi * r * r

    lo, hi = 1e-15, 1.0 - 1e-12
    g_lo, g_hi = g(lo), g(hi)
    if g_lo * g_hi > 0:
        log.error("tail-mass bracket does not change sign: g(%g)=%g g(%g)=%g", lo, g_lo, hi, g_hi)
        raise ConfigurationError(
            f"no tail-mass fixed point bracketed in (0,1) for epsilon={eps}, delta={delta}"
        )
    d = float(brentq(g, lo, hi, xtol=1e-15, rtol=8.9e-16))
    r = float(laplace_cdf_inverse(eps, 1.0 - d))

    cell = r / (2.0 * (1.0 - math.sqrt(params.p0)))
    if cell < 3.0 * r:
        # p0 >= 0.7 makes this algebraically impossible; guard the invariant anyway.
        raise ConfigurationError(f"derived cell side {cell:.3f} below 3R={3 * r:.3f}")
    return NoiseBound(delta_mass=d, radius=r, cell_side=cell)


def sample_radii(
    bound: NoiseBound,
    epsilon: float,
    rng: np.random.Generator,
    n: int,
    return_branch: bool = False,
):
    """Draw n noise radii; optionally also report which branch each came from.

    Branch True means the uniform-in-disc tail fired (probability Delta).
    """
    p = rng.uniform(0.0, 1.0, n)
    tail = p > 1.0 - bound.delta_mass
    r = np.empty(n)
    if np.any(~tail):
        # Quantile transform of the kept Laplace mass; clamp float dust at the cap.
        r[~tail] = np.minimum(laplace_cdf_inverse(epsilon, p[~tail]), bound.radius)
    if np.any(tail):
        # r^2 uniform on [0, R^2] is area-uniform over the disc.
        r[tail] = bound.radius * np.sqrt(rng.uniform(0.0, 1.0, int(tail.sum())))
    if return_branch:
        return r, tail
    return r


def bpl_perturb(
    x,
    bound: NoiseBound,
    epsilon: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Perturb one location or an (n, 2) batch; output never leaves the noise circle.

    The containment is exact on the returned floats: the measured offset
    ``result - x`` is pulled back inside R when rounding in the final addition
    nudges it over by an ulp.
    """
    pts = np.asarray(x, dtype=np.float64)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 2)
    n = pts.shape[0]

    r = sample_radii(bound, epsilon, rng, n)
    theta = rng.uniform(0.0, 2.0 * math.pi, n)
    off = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    out = pts + off

    for _ in range(8):
        d = np.hypot(out[:, 0] - pts[:, 0], out[:, 1] - pts[:, 1])
        over = d > bound.radius
        if not np.any(over):
            break
        shrink = (bound.radius / d[over]) * (1.0 - 2.0 ** -50)
        out[over] = pts[over] + (out[over] - pts[over]) * shrink[:, None]
    else:  # pragma: no cover - eight halvings always suffice
        raise AssertionError("noise-circle containment did not converge")

    return out[0] if single else out
