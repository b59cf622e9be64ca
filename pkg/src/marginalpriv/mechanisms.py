"""Noise-addition mechanisms for one-way marginals.

All releases are clamped to ``[-1, 1]^d`` after the noise is added. Clamping
is post-processing, so it costs no privacy and never moves an answer further
from the true marginal.

The L-infinity mechanism adds noise ``Y`` with density proportional to
``exp(-(eps/Delta) * ||y||_inf)``. It is sampled as a Gamma(d+1) radius (a sum
of ``d+1`` standard exponentials built from uniforms on (0, 1]) times a
uniform point of the cube ``[-1, 1]^d``. ``||Y||_inf`` is then Gamma(d) with
mean ``d Delta / eps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Database, MarginalVector, compute_marginals
from .errors import DimensionError, ParameterError
from .rng import uniform_open_closed

GAUSSIAN_PAPER_CONSTANT = 5.0


@dataclass(frozen=True)
class NoiseScale:
    """Per-coordinate sensitivity and the noise scale derived from it."""

    delta_sensitivity: float
    sigma: Optional[float] = None
    b: Optional[float] = None


@dataclass(frozen=True)
class LinfNoiseSample:
    radius: float
    offsets: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.offsets)))


def marginal_sensitivity(n: int) -> float:
    """Change in any one marginal when a single row is replaced."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    return 2.0 / n


def _positive(name, value):
    if not (value > 0 and math.isfinite(value)):
        raise ParameterError(f"{name} must be finite and > 0, got {value}")


def clamp(values) -> np.ndarray:
    return np.clip(values, -1.0, 1.0)


# --- Laplace -------------------------------------------------------------

def laplace_scale(n: int, d: int, epsilon: float) -> NoiseScale:
    """Scale ``2d/(n eps)``: the L1 sensitivity of the marginal vector over eps."""
    _positive("epsilon", epsilon)
    delta_sens = marginal_sensitivity(n)
    return NoiseScale(delta_sensitivity=delta_sens, b=d * delta_sens / epsilon)


def laplace_release(db: Database, epsilon: float, rng: np.random.Generator) -> MarginalVector:
    """(eps, 0)-DP release with i.i.d. Laplace noise on every coordinate."""
    b = laplace_scale(db.n, db.d, epsilon).b
    true = compute_marginals(db).values
    return MarginalVector(clamp(true + rng.laplace(0.0, b, size=db.d)))


def laplace_privacy_loss(outputs, center_a, center_b, b: float) -> np.ndarray:
    """Log density ratio ``log p_a(o) / p_b(o)`` of product-Laplace noise at outputs ``o``."""
    outputs = np.atleast_2d(outputs)
    return (np.abs(outputs - center_b).sum(axis=1) - np.abs(outputs - center_a).sum(axis=1)) / b


# --- Gaussian ------------------------------------------------------------

def gaussian_sigma(n: int, d: int, epsilon: float, delta: float, calibration: str = "paper") -> float:
    """Standard deviation for the Gaussian marginal release.

    ``"paper"``: ``5 sqrt(d log(1/delta)) / (eps n)``.
    ``"analytic"``: ``2 sqrt(2 ln(1.25/delta)) sqrt(d) / (n eps)``, the classical
    calibration to L2 sensitivity ``2 sqrt(d) / n``.
    """
    _positive("epsilon", epsilon)
    if not 0 < delta < 1:
        raise ParameterError(f"Gaussian release needs 0 < delta < 1, got {delta}")
    if n < 1 or d < 1:
        raise ParameterError("n and d must be >= 1")
    if calibration == "paper":
        return GAUSSIAN_PAPER_CONSTANT * math.sqrt(d * math.log(1 / delta)) / (epsilon * n)
    if calibration == "analytic":
        return 2 * math.sqrt(2 * math.log(1.25 / delta)) * math.sqrt(d) / (n * epsilon)
    raise ParameterError(f"unknown calibration {calibration!r}")


def gaussian_release(db: Database, epsilon: float, delta: float, rng: np.random.Generator,
                     calibration: str = "paper") -> MarginalVector:
    sigma = gaussian_sigma(db.n, db.d, epsilon, delta, calibration)
    true = compute_marginals(db).values
    return MarginalVector(clamp(true + rng.normal(0.0, sigma, size=db.d)))


# --- L-infinity exponential mechanism -------------------------------------

def linf_sample_batch(size: int, d: int, epsilon: float, Delta: float, rng: np.random.Generator):
    """Draw ``size`` noise vectors; returns ``(radii, offsets)`` of shapes (size,), (size, d).

    Consumes ``2d + 1`` uniforms per vector: ``d + 1`` for the radius, ``d`` for the offsets.
    """
    if d < 1:
        raise ParameterError(f"d must be >= 1, got {d}")
    _positive("epsilon", epsilon)
    _positive("Delta", Delta)
    u = uniform_open_closed(rng, (size, 2 * d + 1))
    radii = (Delta / epsilon) * -np.log(u[:, : d + 1]).sum(axis=1)
    offsets = radii[:, None] * (2.0 * u[:, d + 1:] - 1.0)
    return radii, offsets


def linf_sample(d: int, epsilon: float, Delta: float, rng: np.random.Generator) -> LinfNoiseSample:
    radii, offsets = linf_sample_batch(1, d, epsilon, Delta, rng)
    return LinfNoiseSample(radius=float(radii[0]), offsets=offsets[0])


def linf_release(db: Database, epsilon: float, rng: np.random.Generator) -> MarginalVector:
    """(eps, 0)-DP release with L-infinity exponential noise, ``Delta = 2/n``."""
    sample = linf_sample(db.d, epsilon, marginal_sensitivity(db.n), rng)
    return MarginalVector(clamp(compute_marginals(db).values + sample.offsets))


def linf_log_density_ratio(y, y_shift, epsilon: float, Delta: float) -> float:
    """``log pdf(y) - log pdf(y_shift)`` for the L-infinity noise density."""
    y, y_shift = np.asarray(y, dtype=np.float64), np.asarray(y_shift, dtype=np.float64)
    if y.shape != y_shift.shape:
        raise DimensionError("points must have the same dimension")
    _positive("epsilon", epsilon)
    _positive("Delta", Delta)
    return (epsilon / Delta) * (float(np.max(np.abs(y_shift))) - float(np.max(np.abs(y))))


def linf_density_ratio(y, y_shift, epsilon: float, Delta: float) -> float:
    """``pdf(y) / pdf(y_shift)``; at most ``e^eps`` whenever ``||y - y_shift||_inf <= Delta``."""
    return math.exp(linf_log_density_ratio(y, y_shift, epsilon, Delta))


def linf_tail_exact(d: int, epsilon: float, Delta: float, alpha: float) -> float:
    """``P[||Y||_inf >= alpha]``: the Gamma(d, Delta/eps) survival function, in closed form."""
    _positive("epsilon", epsilon)
    _positive("Delta", Delta)
    x = alpha * epsilon / Delta
    if x <= 0:
        return 1.0
    # e^{-x} sum_{i<d} x^i / i!, summed in log space.
    log_terms = [i * math.log(x) - math.lgamma(i + 1) - x for i in range(d)]
    top = max(log_terms)
    return min(1.0, math.exp(top) * math.fsum(math.exp(t - top) for t in log_terms))


def linf_tail_bound(d: int, epsilon: float, Delta: float, alpha: float) -> float:
    """Chernoff bound ``(eps alpha / (Delta d))^d e^{d - alpha eps / Delta}`` on the tail.

    Valid for ``alpha > d Delta / eps`` (the mean); returns 1 below that. At
    ``d = eps alpha / (2 Delta)`` it equals ``(2/e)^d``.
    """
    _positive("epsilon", epsilon)
    _positive("Delta", Delta)
    _positive("alpha", alpha)
    ratio = epsilon * alpha / (Delta * d)
    if ratio <= 1:
        return 1.0
    return min(1.0, math.exp(d * math.log(ratio) + d - alpha * epsilon / Delta))


def linf_tail_bound_published(d: int, epsilon: float, Delta: float, alpha: float) -> float:
    """``(Delta d / (eps alpha))^d e^{d - alpha eps / Delta}``, equal to ``(2e)^{-d}`` at
    ``d = eps alpha / (2 Delta)``.

    This expression has the base of the power inverted relative to the Chernoff
    bound and is NOT an upper bound on the tail for ``d >= 2`` (e.g. d=3,
    alpha=0.6, Delta/eps=0.1: true tail 0.062, expression 0.0062). Kept so the
    discrepancy can be measured.
    """
    _positive("epsilon", epsilon)
    _positive("Delta", Delta)
    _positive("alpha", alpha)
    return math.exp(d * math.log(Delta * d / (epsilon * alpha)) + d - alpha * epsilon / Delta)
