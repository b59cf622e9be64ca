"""Tardos-style L1 fingerprinting code with a real-valued tracer.

Generation: column biases ``p_j`` are drawn from the arcsine density
``f(p) ~ 1/sqrt(p(1-p))`` restricted to ``[t, 1-t]``, ``t = 1/(300 n)``, via
``p = sin^2(theta)`` with ``theta`` uniform. Entry ``D_ij`` is +1 with
probability ``p_j``, independently.

Tracing: user ``i`` scores ``S_i = sum_j a_j g_ij`` where
``g_ij = ((D_ij + 1)/2 - p_j) / sqrt(p_j (1 - p_j))``. A user is accused when
``S_i > Z`` with ``Z = multiplier * sqrt(2 d log(1/delta))``. When the answers
do not depend on row ``i``, ``E[S_i] = 0`` and ``Var[S_i] <= d``.

The length constant and the threshold multiplier are fixed by
:func:`calibrate`; the frozen values below are its output for n=10,
delta=0.05, 10^4 trials, seed 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from . import _kernels
from .core import Database, MarginalVector, compute_marginals
from .dbio import read_binary, read_sidecar, write_binary, write_sidecar
from .errors import DimensionError, FormatError, ParameterError
from .rng import make_rng

FPC_LENGTH_CONSTANT = 3
FPC_THRESHOLD_MULTIPLIER = 0.72

# Entries per row block when generating long codes.
_BLOCK_ENTRIES = 1 << 22


def cutoff(n: int) -> float:
    return 1.0 / (300 * n)


def _check_users_delta(n, delta):
    if int(n) != n or n < 2:
        raise ParameterError(f"need at least 2 users, got {n}")
    if not 0 < delta < 1:
        raise ParameterError(f"soundness delta must lie in (0, 1), got {delta}")


def fpc_min_length(n: int, delta: float, constant: float = FPC_LENGTH_CONSTANT) -> int:
    """``constant * n^2 * ceil(ln(1/delta))``."""
    _check_users_delta(n, delta)
    if not constant > 0:
        raise ParameterError("length constant must be > 0")
    return int(math.ceil(constant * n * n * math.ceil(math.log(1 / delta))))


def trace_threshold(d: int, delta: float, multiplier: float = FPC_THRESHOLD_MULTIPLIER) -> float:
    return multiplier * math.sqrt(2 * d * math.log(1 / delta))


def sample_biases(d: int, t: float, rng: np.random.Generator) -> np.ndarray:
    lo, hi = math.asin(math.sqrt(t)), math.asin(math.sqrt(1 - t))
    return np.sin(rng.uniform(lo, hi, size=d)) ** 2


@dataclass(frozen=True)
class FingerprintingCode:
    codebook: Database
    biases: np.ndarray
    threshold: float
    delta: float
    cutoff: float
    multiplier: float = FPC_THRESHOLD_MULTIPLIER

    def __post_init__(self):
        biases = np.array(self.biases, dtype=np.float64)
        if biases.shape != (self.codebook.d,):
            raise DimensionError("one bias per codebook column required")
        if np.any(biases <= 0) or np.any(biases >= 1):
            raise ParameterError("biases must lie strictly inside (0, 1)")
        biases.flags.writeable = False
        object.__setattr__(self, "biases", biases)

    @property
    def n(self) -> int:
        return self.codebook.n

    @property
    def d(self) -> int:
        return self.codebook.d

    @cached_property
    def _scale(self) -> np.ndarray:
        p = self.biases
        return np.sqrt(p * (1 - p))

    def weights(self, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
        """Rows ``start:stop`` of the ``n x d`` matrix ``g``; depends only on the secret code."""
        return (self.codebook.bits(start, stop).astype(np.float64) - self.biases) / self._scale


@dataclass(frozen=True)
class TraceResult:
    accused: frozenset
    scores: np.ndarray = field(repr=False)


def fpc_generate(n: int, delta: float, d: Optional[int], rng: np.random.Generator, *,
                 constant: float = FPC_LENGTH_CONSTANT,
                 multiplier: float = FPC_THRESHOLD_MULTIPLIER) -> FingerprintingCode:
    """Draw a code for ``n`` users; ``d=None`` uses the minimum length."""
    min_d = fpc_min_length(n, delta, constant)
    if d is None:
        d = min_d
    if d < min_d:
        raise ParameterError(f"length d={d} is below the minimum {min_d} for n={n}, delta={delta}")
    t = cutoff(n)
    p = sample_biases(d, t, rng)
    # Row blocks draw the same uniforms, in the same order, as one (n, d) draw.
    packed = np.empty((n, (d + 7) // 8), dtype=np.uint8)
    step = _block_rows(d)
    for start in range(0, n, step):
        rows = min(step, n - start)
        packed[start:start + rows] = np.packbits(rng.random((rows, d)) < p, axis=1, bitorder="little")
    codebook = Database._owned(packed, d)
    return FingerprintingCode(codebook, p, trace_threshold(d, delta, multiplier), delta, t, multiplier)


def _block_rows(d: int) -> int:
    return max(1, _BLOCK_ENTRIES // d)



def fpc_scores(code: FingerprintingCode, answers) -> np.ndarray:
    a = answers.values if isinstance(answers, MarginalVector) else np.asarray(answers, dtype=np.float64)
    if a.shape != (code.d,):
        raise DimensionError(f"answers have length {a.shape[0] if a.ndim else 0}, code has d={code.d}")
    if np.any(np.abs(a) > 1):
        raise ParameterError("answers must lie in [-1, 1]")
    # S_i = sum_j a_j (b_ij - p_j) / s_j = sum_{j: b_ij = 1} w_j - sum_j p_j w_j, w = a / s.
    w = a / code._scale
    offset = math.fsum(code.biases * w)
    return _kernels.masked_row_sums(code.codebook.packed, w) - offset


def fpc_trace(code: FingerprintingCode, answers) -> TraceResult:
    scores = fpc_scores(code, answers)
    accused = frozenset(int(i) for i in np.flatnonzero(scores > code.threshold))
    return TraceResult(accused, scores)


def perturb_l1(answers, mass: float, rng: np.random.Generator, mode: str = "random") -> np.ndarray:
    """Move ``answers`` by total L1 distance at most ``mass``, spread evenly over coordinates.

    ``"random"``: each coordinate moves ``mass/d`` in a random direction (clamped).
    ``"shrink"``: each coordinate moves ``mass/d`` toward 0, stopping at 0.
    """
    a = np.asarray(answers, dtype=np.float64)
    step = mass / a.shape[0]
    if mode == "random":
        return np.clip(a + step * rng.choice((-1.0, 1.0), size=a.shape), -1, 1)
    if mode == "shrink":
        return np.sign(a) * np.maximum(np.abs(a) - step, 0.0)
    raise ParameterError(f"unknown perturbation mode {mode!r}")


# --- persistence ---------------------------------------------------------

def export_code(code: FingerprintingCode, db_path, sidecar_path) -> None:
    write_binary(code.codebook, db_path)
    write_sidecar(
        {
            "users": str(code.n),
            "length": str(code.d),
            "delta": repr(float(code.delta)),
            "cutoff": repr(float(code.cutoff)),
            "multiplier": repr(float(code.multiplier)),
            "threshold": repr(float(code.threshold)),
            "biases": ",".join(repr(float(p)) for p in code.biases),
        },
        sidecar_path,
    )


def import_code(db_path, sidecar_path) -> FingerprintingCode:
    meta = read_sidecar(sidecar_path)
    try:
        n, d = int(meta["users"]), int(meta["length"])
        biases = np.array([float(x) for x in meta["biases"].split(",")])
        code = FingerprintingCode(
            codebook=read_binary(db_path, expected_shape=(n, d)),
            biases=biases,
            threshold=float(meta["threshold"]),
            delta=float(meta["delta"]),
            cutoff=float(meta["cutoff"]),
            multiplier=float(meta.get("multiplier", FPC_THRESHOLD_MULTIPLIER)),
        )
    except KeyError as exc:
        raise FormatError(f"{sidecar_path}: missing key {exc}") from None
    return code


# --- calibration ---------------------------------------------------------

@dataclass(frozen=True)
class TracingRates:
    completeness: float
    soundness: float
    robust_random: float
    robust_shrink: float
    trials: int


def tracing_rates(n: int, delta: float, constant: float, multiplier: float, trials: int,
                  seed: int, excluded: int = 0, padding_sign: int = 1) -> TracingRates:
    """Monte Carlo completeness, soundness and 1/8-robustness at the given constants.

    Soundness is measured for user ``excluded`` with its row replaced by the
    constant ``padding_sign`` row before the (exact) marginals are computed.
    """
    d = fpc_min_length(n, delta, constant)
    pad = np.full(d, float(padding_sign))
    traced = accused_excluded = robust_r = robust_s = 0
    for trial in range(trials):
        rng = make_rng(seed, "fpc-rates", trial)
        code = fpc_generate(n, delta, d, rng, constant=constant, multiplier=multiplier)
        honest = compute_marginals(code.codebook).values
        traced += bool(fpc_trace(code, honest).accused)
        robust_r += bool(fpc_trace(code, perturb_l1(honest, d / 8, rng, "random")).accused)
        robust_s += bool(fpc_trace(code, perturb_l1(honest, d / 8, rng, "shrink")).accused)
        without = compute_marginals(code.codebook.with_row(excluded, pad)).values
        accused_excluded += excluded in fpc_trace(code, without).accused
    return TracingRates(traced / trials, accused_excluded / trials, robust_r / trials, robust_s / trials, trials)


def null_score_quantile(n: int, delta: float, d: int, level: float, trials: int, seed: int) -> float:
    """``level`` quantile of ``S_i / sqrt(2 d ln(1/delta))`` for answers independent of row i.

    Uses the all-(+1) answer vector, which maximizes the score variance (``= d``).
    """
    ones = np.ones(d)
    stats = np.empty(trials)
    for trial in range(trials):
        rng = make_rng(seed, "fpc-null", trial)
        code = fpc_generate(n, delta, d, rng, constant=1e-9)
        stats[trial] = fpc_scores(code, ones)[0]
    return float(np.quantile(stats, level) / math.sqrt(2 * d * math.log(1 / delta)))


@dataclass(frozen=True)
class Calibration:
    constant: int
    multiplier: float
    rates: TracingRates


def calibrate(n: int = 10, delta: float = 0.05, trials: int = 10_000, seed: int = 0,
              target: float = 0.99, max_constant: int = 64, soundness_margin: float = 0.8) -> Calibration:
    """Fix the threshold multiplier from the null score law, then bisect the length constant.

    The multiplier is the ``1 - soundness_margin * delta`` quantile of the
    worst-case null score (rounded up to 0.01). The length constant is the
    smallest integer for which completeness and both robustness rates reach
    ``target`` at that multiplier.
    """
    probe_d = fpc_min_length(n, delta, 8)
    q = null_score_quantile(n, delta, probe_d, 1 - soundness_margin * delta, trials, seed)
    multiplier = math.ceil(q * 100) / 100

    def passes(c):
        r = tracing_rates(n, delta, c, multiplier, trials, seed)
        return r, min(r.completeness, r.robust_random, r.robust_shrink) >= target and r.soundness <= delta

    lo, hi = 0, max_constant
    rates, ok = passes(hi)
    if not ok:
        raise ParameterError(f"no length constant <= {max_constant} reaches the targets")
    best = rates
    while hi - lo > 1:
        mid = (lo + hi) // 2
        r, ok = passes(mid)
        if ok:
            hi, best = mid, r
        else:
            lo = mid
    return Calibration(hi, multiplier, best)
