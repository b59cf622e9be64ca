"""Lower-bound machinery as runnable experiments.

``tracing_attack`` builds a fingerprinting code for ``n_k = n // k`` users,
stacks ``k`` copies of the codebook (padding the remaining rows with a fixed
row) to get an ``n``-row database, asks the mechanism for its marginals and
traces. A parallel run replaces one user's row by the padding row first; how
often that user is still accused measures soundness. For a private mechanism
the excluded-user accusation rate must stay near the code's delta; the report
only claims a violation when it exceeds delta by five standard errors.

``packing_experiment`` runs the hypercube distinguisher: databases made of
``n`` copies of a uniform point ``x`` (or an independent ``x'``) and the
statistics ``Z = <M(D), x>``, ``Z' = <M(D'), x>``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Database, PrivacyParams, compute_marginals, group_privacy, l1_error
from .errors import DimensionError, ParameterError
from .fingerprinting import fpc_generate, fpc_min_length, fpc_trace
from .harness import run_trials
from .rng import make_rng


# Largest embedded database (in bits, 1 GiB packed) an attack will build.
MAX_EMBED_BITS = 1 << 33


class CopyFactorWarning(UserWarning):
    """``k`` is outside the regime ``k <= n/200`` used by the reduction."""


@dataclass(frozen=True)
class KCopyConfig:
    k: int
    n: int
    padding_sign: int = 1

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ParameterError(f"k must be a positive integer, got {self.k}")
        if self.n // self.k < 1:
            raise ParameterError(f"n // k must be >= 1 (n={self.n}, k={self.k})")
        if self.padding_sign not in (1, -1):
            raise ParameterError("padding_sign must be +1 or -1")
        if self.k > self.n / 200:
            warnings.warn(f"k={self.k} exceeds n/200={self.n / 200:g}", CopyFactorWarning, stacklevel=3)

    @property
    def n_k(self) -> int:
        return self.n // self.k

    @property
    def padding_rows(self) -> int:
        return self.n - self.k * self.n_k

    def padding_row(self, d: int) -> np.ndarray:
        return np.full(d, float(self.padding_sign))


def k_copy_embed(d_star: Database, config: KCopyConfig) -> Database:
    """Stack ``k`` copies of ``d_star`` and fill the rest with the padding row."""
    if d_star.n != config.n_k:
        raise DimensionError(f"expected {config.n_k} rows (n // k), got {d_star.n}")
    d = d_star.d
    packed = np.empty((config.n, d_star.packed.shape[1]), dtype=np.uint8)
    body = config.k * config.n_k
    packed[:body] = np.tile(d_star.packed, (config.k, 1))
    pad_bits = np.full(d, config.padding_sign == 1)
    packed[body:] = np.packbits(pad_bits, bitorder="little")
    # Exact counts of the result, so marginals need no second pass over the rows.
    counts = config.k * d_star.column_counts() + config.padding_rows * pad_bits
    return Database._owned(packed, d, column_counts=counts)


def default_copy_factor(n: int, delta: float) -> int:
    """``floor(ln(1/(12 n delta)) - 1)``; may be < 1 when delta is large."""
    if not 0 < delta < 1 or n < 1:
        raise ParameterError("need n >= 1 and 0 < delta < 1")
    return math.floor(math.log(1 / (12 * n * delta)) - 1)


def auto_copy_factor(n: int, delta: float) -> int:
    """:func:`default_copy_factor` clamped to ``[1, max(1, n // 200)]``."""
    return min(max(1, default_copy_factor(n, delta)), max(1, n // 200))


@dataclass(frozen=True)
class AttackTrial:
    trial: int
    accused: tuple
    trace_nonempty: bool
    l1_error: float
    accurate: bool
    excluded_accused: bool

    def as_dict(self) -> dict:
        return {
            "trial": self.trial,
            "accused": list(self.accused),
            "trace_nonempty": self.trace_nonempty,
            "l1_error": self.l1_error,
            "accurate": self.accurate,
            "excluded_accused": self.excluded_accused,
        }


@dataclass
class AttackReport:
    mechanism: str
    n: int
    k: int
    n_k: int
    d: int
    delta: float
    excluded: int
    seed: int
    trials: int
    trace_nonempty_rate: float
    accuracy_rate: float
    mean_l1_error: float
    per_user_rates: list
    excluded_accusation_rate: float
    excluded_standard_error: float
    violation: bool
    bounds: dict
    records: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "records"}
        out["record"] = "summary"
        return out


def _bounds(d, n_k, delta, mean_l1, privacy: Optional[PrivacyParams], k):
    bounds = {
        "accuracy_radius": d / 8,
        "trace_rate_bound": 1 / 12,
        "per_user_trace_bound": 1 / (12 * n_k),
        "markov_stated": 0.9,
        # Markov from the empirical mean: P[L1 > d/9] <= E[L1] / (d/9).
        "markov_direct": min(1.0, mean_l1 * 9 / d) if d else None,
    }
    if privacy is not None and privacy.epsilon > 0:
        gp = group_privacy(privacy, k)
        bounds["epsilon_k"] = gp.epsilon_k
        bounds["delta_k"] = gp.delta_k
        try:
            bounds["soundness_transfer"] = math.exp(gp.epsilon_k) * delta + gp.delta_k
        except OverflowError:
            bounds["soundness_transfer"] = math.inf
    return bounds


def tracing_attack(mechanism, n: int, delta: float, k: int, trials: int, seed: int, *,
                   d: Optional[int] = None, excluded: int = 0, padding_sign: int = 1,
                   jobs: int = 1) -> AttackReport:
    """Run the k-copy tracing attack against ``mechanism(db, rng)``."""
    config = KCopyConfig(k, n, padding_sign)
    n_k = config.n_k
    min_d = fpc_min_length(n_k, delta) if n_k >= 2 else None
    if min_d is None:
        raise ParameterError(f"n // k = {n_k}; the code needs at least 2 users")
    if d is None:
        d = min_d
    if d < min_d:
        raise ParameterError(f"d={d} is below the code length {min_d} for {n_k} users")
    if n * d > MAX_EMBED_BITS:
        raise ParameterError(f"an {n} x {d} database is too large to embed; raise k or lower n")
    if not 0 <= excluded < n_k:
        raise ParameterError(f"excluded user must be in [0, {n_k})")
    pad = config.padding_row(d)

    def one(t: int) -> AttackTrial:
        code = fpc_generate(n_k, delta, d, make_rng(seed, "attack/code", t))
        mech_rng = make_rng(seed, "attack/mechanism", t)
        target = compute_marginals(code.codebook).values
        answers = mechanism(k_copy_embed(code.codebook, config), mech_rng).values
        result = fpc_trace(code, answers)
        without = k_copy_embed(code.codebook.with_row(excluded, pad), config)
        excluded_hit = excluded in fpc_trace(code, mechanism(without, mech_rng).values).accused
        err = l1_error(answers, target)
        return AttackTrial(t, tuple(sorted(result.accused)), bool(result.accused), err, err <= d / 8, excluded_hit)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CopyFactorWarning)
        records = run_trials(one, trials, jobs)

    m = max(len(records), 1)
    per_user = np.zeros(n_k)
    for r in records:
        per_user[list(r.accused)] += 1
    excluded_rate = sum(r.excluded_accused for r in records) / m
    se = math.sqrt(delta * (1 - delta) / m)
    mean_l1 = sum(r.l1_error for r in records) / m
    privacy = getattr(mechanism, "privacy", None)
    return AttackReport(
        mechanism=getattr(mechanism, "name", repr(mechanism)),
        n=n, k=k, n_k=n_k, d=d, delta=delta, excluded=excluded, seed=seed, trials=len(records),
        trace_nonempty_rate=sum(r.trace_nonempty for r in records) / m,
        accuracy_rate=sum(r.accurate for r in records) / m,
        mean_l1_error=mean_l1,
        per_user_rates=(per_user / m).tolist(),
        excluded_accusation_rate=excluded_rate,
        excluded_standard_error=se,
        violation=bool(records) and excluded_rate > delta + 5 * se,
        bounds=_bounds(d, n_k, delta, mean_l1, privacy, k),
        records=records,
    )


# --- packing distinguisher --------------------------------------------------

@dataclass(frozen=True)
class PackingExperimentConfig:
    d: int
    trials: int
    lam: Optional[float] = None
    n: int = 1

    def __post_init__(self):
        if self.d < 1 or self.n < 1 or self.trials < 0:
            raise ParameterError("need d >= 1, n >= 1, trials >= 0")
        if self.lam is not None and self.lam < 0:
            raise ParameterError("lambda must be >= 0")

    @property
    def deviation(self) -> float:
        return math.sqrt(self.d) / 20 if self.lam is None else self.lam


@dataclass(frozen=True)
class PackingResult:
    config: PackingExperimentConfig
    z: np.ndarray
    z_prime: np.ndarray
    prime_norms: np.ndarray

    @property
    def rate_z_small(self) -> float:
        """Empirical ``P[Z <= d/20]``."""
        return float(np.mean(self.z <= self.config.d / 20))

    @property
    def rate_z_prime_large(self) -> float:
        """Empirical ``P[Z' > d/20]``."""
        return float(np.mean(self.z_prime > self.config.d / 20))

    @property
    def rate_hoeffding(self) -> float:
        """Empirical ``P[Z' > lambda ||M(D')||_2]``."""
        return float(np.mean(self.z_prime > self.config.deviation * self.prime_norms))

    @property
    def hoeffding_bound(self) -> float:
        return math.exp(-self.config.deviation ** 2 / 2)

    @property
    def z_prime_bound(self) -> float:
        """``e^{-d/800}``."""
        return math.exp(-self.config.d / 800)

    markov_bound = 0.9 / 0.95


def packing_experiment(mechanism, config: PackingExperimentConfig, seed: int, jobs: int = 1) -> PackingResult:
    n, d = config.n, config.d

    def one(t):
        rng = make_rng(seed, "packing", t)
        x = rng.choice((-1.0, 1.0), size=d)
        x2 = rng.choice((-1.0, 1.0), size=d)
        out = mechanism(Database.from_signs(np.broadcast_to(x, (n, d))), rng).values
        out2 = mechanism(Database.from_signs(np.broadcast_to(x2, (n, d))), rng).values
        return float(out @ x), float(out2 @ x), float(np.linalg.norm(out2))

    rows = run_trials(one, config.trials, jobs)
    arr = np.array(rows, dtype=np.float64).reshape(-1, 3)
    return PackingResult(config, arr[:, 0], arr[:, 1], arr[:, 2])
