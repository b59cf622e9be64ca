"""Worst-case-accurate (eps, delta)-DP marginals: Gaussian noise, then sparse-vector repair.

Stage 1 spends ``(eps/2, delta/2)`` on ``a~ = clamp(D_bar + z)``, ``z ~ N(0, sigma^2)``.
Stage 2 spends ``(eps/2, delta/2)`` on a sparse-vector pass over the queries
``q_j(x) = (x_j - a~_j) / 2``, whose true values are ``-(a~_j - D_bar_j) / 2``.
The release is ``clamp(a~ + 2 a^)`` where ``a^`` are the sparse-vector answers.

Clamping ``a~`` before building the queries keeps every ``q_j`` inside [-1, 1];
it is post-processing of stage 1 and can only shrink ``|q_j(D)|``.

Derived defaults (natural logs throughout)::

    sigma   = 5 sqrt(d log(1/delta)) / (eps n)
    alpha   = 8 sigma sqrt(log log d)
    c_SV    = max(1, ceil(2 d / log^8 d))      k_SV = d
    alpha_SV = alpha / 2                       beta_SV = max(exp(-log^4 d), 2^-63)

For any d that fits in memory, ``2d / log^8 d < 1``, so ``c_SV`` is 1 unless
overridden. Every derived constant can be overridden.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Database, MarginalVector, compute_marginals
from .errors import DimensionError, ParameterError
from .mechanisms import GAUSSIAN_PAPER_CONSTANT, clamp
from .sparse_vector import SVConfig, sv_answer_values, sv_init

BETA_FLOOR = 2.0 ** -63


@dataclass(frozen=True)
class GaussSVConfig:
    epsilon: float
    delta: float
    n: int
    d: int
    sigma_override: Optional[float] = None
    alpha_override: Optional[float] = None
    sv_c_override: Optional[int] = None
    sv_beta_override: Optional[float] = None

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ParameterError(f"epsilon must be finite and > 0, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")
        if self.n < 1:
            raise ParameterError(f"n must be >= 1, got {self.n}")
        if self.d < 3:
            raise ParameterError(f"Gaussian+SV needs d >= 3 so that log log d > 0, got d={self.d}")
        if self.sigma_override is not None and not (self.sigma_override >= 0 and math.isfinite(self.sigma_override)):
            raise ParameterError("sigma override must be finite and >= 0")
        if self.alpha_override is not None and not self.alpha_override > 0:
            raise ParameterError("alpha override must be > 0")
        # Resolving the sparse-vector config validates the remaining overrides.
        self.sv_config

    @classmethod
    def for_database(cls, db: Database, epsilon: float, delta: float, **overrides) -> "GaussSVConfig":
        return cls(epsilon, delta, db.n, db.d, **overrides)

    @property
    def sigma(self) -> float:
        if self.sigma_override is not None:
            return float(self.sigma_override)
        return GAUSSIAN_PAPER_CONSTANT * math.sqrt(self.d * math.log(1 / self.delta)) / (self.epsilon * self.n)

    @property
    def alpha(self) -> float:
        if self.alpha_override is not None:
            return float(self.alpha_override)
        return 8 * self.sigma * math.sqrt(math.log(math.log(self.d)))

    @property
    def gaussian_budget(self) -> tuple[float, float]:
        return (self.epsilon / 2, self.delta / 2)

    @property
    def sv_budget(self) -> tuple[float, float]:
        return (self.epsilon / 2, self.delta / 2)

    @property
    def sv_c(self) -> int:
        if self.sv_c_override is not None:
            return int(self.sv_c_override)
        return min(self.d, max(1, math.ceil(2 * self.d / math.log(self.d) ** 8)))

    @property
    def sv_beta(self) -> float:
        if self.sv_beta_override is not None:
            return float(self.sv_beta_override)
        return max(math.exp(-math.log(self.d) ** 4), BETA_FLOOR)

    @property
    def sv_config(self) -> SVConfig:
        eps_sv, delta_sv = self.sv_budget
        return SVConfig(c=self.sv_c, k=self.d, epsilon=eps_sv, delta=delta_sv,
                        alpha=self.alpha / 2, beta=self.sv_beta)

    @property
    def bad_coordinate_bound(self) -> float:
        """``exp(-alpha^2 / (8 sigma^2))`` bounding ``P[|z_j| > alpha/2]``."""
        if self.sigma == 0:
            return 0.0
        return math.exp(-self.alpha ** 2 / (8 * self.sigma ** 2))


@dataclass(frozen=True)
class MarginalQuery:
    """``q(x) = (x_column - offset) / 2`` as a linear query over rows."""

    column: int
    offset: float

    def __call__(self, rows: np.ndarray) -> np.ndarray:
        return (rows[:, self.column] - self.offset) / 2

    def evaluate(self, db: Database) -> float:
        return float((compute_marginals(db).values[self.column] - self.offset) / 2)


def gauss_sv_queries(noisy) -> list[MarginalQuery]:
    return [MarginalQuery(j, float(v)) for j, v in enumerate(np.asarray(noisy, dtype=np.float64))]


@dataclass(frozen=True)
class GaussSVResult:
    output: MarginalVector
    gaussian_noise: np.ndarray
    noisy: np.ndarray
    query_values: np.ndarray
    sv_answers: np.ndarray
    flagged: np.ndarray


def gauss_sv_release_detailed(db: Database, config: GaussSVConfig, rng: np.random.Generator) -> GaussSVResult:
    """Release plus every intermediate, for auditing the error chain."""
    if (db.n, db.d) != (config.n, config.d):
        raise DimensionError(f"config is for n={config.n}, d={config.d}; database is {db.shape}")
    true = compute_marginals(db).values
    z = rng.normal(0.0, 1.0, size=db.d) * config.sigma
    noisy = clamp(true + z)
    # Same arithmetic as MarginalQuery.evaluate, vectorized.
    query_values = (true - noisy) / 2
    state = sv_init(config.sv_config, db, rng)
    sv_answers = sv_answer_values(state, query_values)
    output = MarginalVector(clamp(noisy + 2 * sv_answers))
    return GaussSVResult(output, z, noisy, query_values, sv_answers, state.flagged.copy())


def gauss_sv_release(db: Database, config: GaussSVConfig, rng: np.random.Generator) -> MarginalVector:
    return gauss_sv_release_detailed(db, config, rng).output


def bad_coordinate_census(z, threshold: float) -> int:
    """Number of coordinates with ``|z_j| > threshold``."""
    return int(np.count_nonzero(np.abs(np.asarray(z, dtype=np.float64)) > threshold))
