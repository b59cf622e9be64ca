"""Adaptive sparse-vector query answering that never halts.

Construction: a restarting AboveThreshold ("numeric sparse") over the absolute
query values. For threshold ``T = 3 alpha / 4`` and per-query sensitivity
``Delta = 2/n``:

* each of at most ``c`` rounds draws a noisy threshold ``T + Lap(2 Delta / eps1)``;
* query ``j`` is flagged if ``|q_j(D)| + Lap(4 Delta / eps1)`` strictly exceeds it;
* a flagged query is answered ``q_j(D) + Lap(Delta / eps2)`` (clamped to [-1, 1])
  and starts the next round; every other query, and every query after the
  ``c``-th flag, is answered 0.

The budget is split evenly: the threshold tests get ``(eps/2, delta/2)`` and the
numeric answers get ``(eps/2, delta/2)``. Within each half, ``eps1`` (resp.
``eps2``) is the largest per-round epsilon whose ``c``-fold composition stays
within the half, under whichever of basic or advanced composition is tighter.

All noise is drawn when the state is created, so answering queries one at a
time or in a batch gives identical transcripts.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from . import _kernels
from .core import Database
from .errors import ParameterError, SequenceError
from .mechanisms import marginal_sensitivity
from .rng import make_rng

# Multiplier on sqrt(c log(1/delta)) log(k/beta) / (alpha eps). Output of
# calibrate_rows_constant(SVConfig(5, 200, 1, 1e-6, 0.2, 0.05)), 2000 trials,
# seed 0: 35 fails 7.2% of planted streams, 40 fails 2.4%.
SV_ROWS_CONSTANT = 40.0


class SVSampleSizeWarning(UserWarning):
    """The database is smaller than the calibrated sample-size gate."""


@dataclass(frozen=True)
class SVConfig:
    c: int
    k: int
    epsilon: float
    delta: float
    alpha: float
    beta: float

    def __post_init__(self):
        if int(self.c) != self.c or int(self.k) != self.k or not 1 <= self.c <= self.k:
            raise ParameterError(f"need integers 1 <= c <= k, got c={self.c}, k={self.k}")
        for name in ("epsilon", "alpha", "beta"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ParameterError(f"{name} must be finite and > 0, got {value}")
        if not 0 < self.delta < 1:
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.beta < 1:
            raise ParameterError(f"beta must be < 1, got {self.beta}")

    @property
    def threshold(self) -> float:
        return 0.75 * self.alpha


def per_round_epsilon(epsilon: float, delta: float, rounds: int) -> float:
    """Largest eps' such that ``rounds`` eps'-DP steps compose to ``(epsilon, delta)``.

    Takes the better of basic composition (``rounds * eps'``) and advanced
    composition (``sqrt(2 r ln(1/delta)) eps' + r eps' (e^{eps'} - 1)``).
    """
    if rounds < 1:
        raise ParameterError("rounds must be >= 1")
    basic = epsilon / rounds
    if delta <= 0:
        return basic
    lead = math.sqrt(2 * rounds * math.log(1 / delta))

    def total(e):
        return lead * e + rounds * e * math.expm1(e)

    lo, hi = 0.0, epsilon / lead
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total(mid) <= epsilon:
            lo = mid
        else:
            hi = mid
    return max(basic, lo)


@dataclass(frozen=True)
class SVNoise:
    eps_test: float
    eps_answer: float
    threshold_scale: float
    test_scale: float
    answer_scale: float


def sv_noise_scales(config: SVConfig, n: int) -> SVNoise:
    sens = marginal_sensitivity(n)
    eps1 = per_round_epsilon(config.epsilon / 2, config.delta / 2, config.c)
    eps2 = per_round_epsilon(config.epsilon / 2, config.delta / 2, config.c)
    return SVNoise(
        eps_test=eps1,
        eps_answer=eps2,
        threshold_scale=2 * sens / eps1,
        test_scale=4 * sens / eps1,
        answer_scale=sens / eps2,
    )


def sv_min_rows(config: SVConfig, constant: float = SV_ROWS_CONSTANT) -> int:
    """Sample-size gate ``constant * sqrt(c log(1/delta)) log(k/beta) / (alpha eps)``."""
    bound = math.sqrt(config.c * math.log(1 / config.delta)) * math.log(config.k / config.beta)
    return max(1, math.ceil(constant * bound / (config.alpha * config.epsilon)))


def evaluate_query(query, db: Database, chunk: int = 8192) -> float:
    """``(1/n) sum_i q(row_i)``.

    ``query`` is either an object with ``evaluate(db)`` or a callable mapping an
    ``(m, d)`` block of +/-1 rows to ``m`` values in [-1, 1].
    """
    evaluate = getattr(query, "evaluate", None)
    if evaluate is not None:
        return float(evaluate(db))
    partial = []
    for rows in db.iter_signs(chunk):
        vals = np.asarray(query(rows), dtype=np.float64).reshape(-1)
        if vals.shape[0] != rows.shape[0]:
            raise ParameterError("query must return one value per row")
        if np.any(np.abs(vals) > 1):
            raise ParameterError("query values must lie in [-1, 1]")
        partial.append(float(np.sum(vals)))
    return math.fsum(partial) / db.n


@dataclass
class SVState:
    """Single-owner transcript state; answer queries strictly in order."""

    config: SVConfig
    db: Database
    noise: SVNoise
    threshold_noise: np.ndarray
    test_noise: np.ndarray
    answer_noise: np.ndarray
    answers: np.ndarray = field(init=False)
    flagged: np.ndarray = field(init=False)
    position: int = 0
    flags_used: int = 0

    def __post_init__(self):
        self.answers = np.zeros(self.config.k)
        self.flagged = np.zeros(self.config.k, dtype=bool)

    @property
    def remaining(self) -> int:
        return self.config.c - self.flags_used

    @property
    def noisy_threshold(self) -> Optional[float]:
        if self.flags_used >= self.config.c:
            return None
        return self.config.threshold + float(self.threshold_noise[self.flags_used])

    @property
    def transcript(self) -> list[tuple[int, bool, float]]:
        return [(j, bool(self.flagged[j]), float(self.answers[j])) for j in range(self.position)]


def sv_init(config: SVConfig, db: Database, rng: np.random.Generator) -> SVState:
    if not isinstance(config, SVConfig):
        raise ParameterError("config must be an SVConfig")
    gate = sv_min_rows(config)
    if db.n < gate:
        warnings.warn(
            f"n={db.n} is below the sparse-vector sample-size gate {gate}; accuracy is not guaranteed",
            SVSampleSizeWarning,
            stacklevel=2,
        )
    noise = sv_noise_scales(config, db.n)
    threshold_noise = rng.laplace(0.0, noise.threshold_scale, size=config.c)
    test_noise = rng.laplace(0.0, noise.test_scale, size=config.k)
    answer_noise = rng.laplace(0.0, noise.answer_scale, size=config.c)
    return SVState(config, db, noise, threshold_noise, test_noise, answer_noise)


def sv_answer_values(state: SVState, values) -> np.ndarray:
    """Answer queries whose true values ``q_j(D)`` are already known, in order."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    m = values.shape[0]
    start = state.position
    if start + m > state.config.k:
        raise SequenceError(f"query budget k={state.config.k} exhausted")
    if np.any(np.abs(values) > 1):
        raise ParameterError("query values must lie in [-1, 1]")
    answers, flagged, used = _kernels.sv_scan(
        values,
        state.test_noise[start:start + m],
        state.threshold_noise,
        state.answer_noise,
        state.config.threshold,
        state.flags_used,
    )
    state.answers[start:start + m] = answers
    state.flagged[start:start + m] = flagged
    state.flags_used = int(used)
    state.position = start + m
    return answers


def sv_answer(state: SVState, query: Callable | object) -> float:
    """Answer one (possibly adaptively chosen) linear query."""
    if state.position >= state.config.k:
        raise SequenceError(f"query budget k={state.config.k} exhausted")
    value = evaluate_query(query, state.db)
    return float(sv_answer_values(state, [value])[0])


def sv_answer_many(state: SVState, queries: Iterable) -> np.ndarray:
    """Answer a non-adaptive batch of queries."""
    values = [evaluate_query(q, state.db) for q in queries]
    return sv_answer_values(state, values)


# --- calibration ---------------------------------------------------------

def planted_stream(config: SVConfig, rng: np.random.Generator, large: Optional[int] = None) -> np.ndarray:
    """Query values with ``large`` (default ``c``) planted queries last.

    Small queries sit at ``alpha/2`` and large ones at ``1.25 alpha``, each with
    a random sign. Placing the large ones at the end means any early false flag
    costs a round the planted queries need.
    """
    large = config.c if large is None else large
    if not 0 <= large <= config.k:
        raise ParameterError("need 0 <= large <= k")
    mags = np.full(config.k, config.alpha / 2)
    mags[config.k - large:] = 1.25 * config.alpha
    return np.clip(mags * rng.choice((-1.0, 1.0), size=config.k), -1, 1)


def stream_failure_rate(config: SVConfig, n: int, trials: int, seed: int) -> float:
    """Fraction of trials in which some answer misses its query by more than ``alpha``."""
    db = Database.constant(n, 1, 1)
    failures = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SVSampleSizeWarning)
        for t in range(trials):
            rng = make_rng(seed, "sv-stream", t)
            values = planted_stream(config, rng)
            state = sv_init(config, db, rng)
            answers = sv_answer_values(state, values)
            failures += bool(np.any(np.abs(answers - values) > config.alpha))
    return failures / trials if trials else 0.0


def calibrate_rows_constant(config: SVConfig, trials: int = 2000, seed: int = 0,
                            step: float = 5.0, max_constant: float = 500.0) -> tuple[float, float]:
    """Smallest multiple of ``step`` whose gate keeps the failure rate <= beta."""
    constant = step
    while constant <= max_constant:
        rate = stream_failure_rate(config, sv_min_rows(config, constant), trials, seed)
        if rate <= config.beta:
            return constant, rate
        constant += step
    raise ParameterError(f"no constant <= {max_constant} reaches failure rate {config.beta}")
