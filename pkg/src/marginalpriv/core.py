"""Databases, marginal vectors, privacy parameters and closed-form bounds.

A database is an ``n x d`` matrix with entries in {-1, +1}. It is stored as
row-packed sign bits (bit set means +1, least significant bit first within a
byte, each row padded to a whole number of bytes), so ``10^7 x 10^3`` fits in
about 1.25 GB. One-way marginals are computed from exact integer column counts,
``(2 * count - n) / n``, so they are correctly rounded for every ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from . import _kernels
from .errors import DimensionError, DomainError, ParameterError

__all__ = [
    "Database",
    "MarginalVector",
    "PrivacyParams",
    "AccuracyParams",
    "GroupPrivacyParams",
    "SampleComplexityBounds",
    "compute_marginals",
    "l1_error",
    "linf_error",
    "group_privacy",
    "approx_dp_rows",
    "pure_dp_rows",
    "gauss_sv_rows",
    "packing_lower_rows",
    "packing_lower_explicit",
    "linf_pure_rows",
    "sample_complexity_bounds",
    "GAUSS_SV_CONSTANT",
    "LINF_PURE_CONSTANT",
]


def _row_bytes(d: int) -> int:
    return (d + 7) // 8


class Database:
    """Immutable ``n x d`` matrix of +/-1 entries backed by packed bits."""

    __slots__ = ("_packed", "_d", "_counts")

    def __init__(self, packed: np.ndarray, d: int, *, column_counts: Optional[np.ndarray] = None):
        packed = np.asarray(packed, dtype=np.uint8)
        d = int(d)
        if packed.ndim != 2:
            raise DimensionError(f"packed rows must be 2-D, got shape {packed.shape}")
        if d < 1 or packed.shape[0] < 1:
            raise ParameterError(f"database needs n >= 1 and d >= 1, got n={packed.shape[0]}, d={d}")
        if packed.shape[1] != _row_bytes(d):
            raise DimensionError(f"rows of {packed.shape[1]} bytes cannot hold d={d} columns")
        copied = False
        if d % 8:
            mask = np.uint8((1 << (d % 8)) - 1)
            if np.any(packed[:, -1] & ~mask):
                packed = packed.copy()
                packed[:, -1] &= mask
                copied = True
        if packed.flags.writeable:
            if not copied:
                packed = packed.copy()
            packed.flags.writeable = False
        self._packed = packed
        self._d = d
        self._counts = None
        if column_counts is not None:
            counts = np.asarray(column_counts, dtype=np.int64)
            if counts.shape != (d,):
                raise DimensionError(f"column_counts must have shape ({d},)")
            counts.flags.writeable = False
            self._counts = counts

    @classmethod
    def _owned(cls, packed: np.ndarray, d: int, column_counts=None) -> "Database":
        # Takes ownership of a freshly built, correctly padded array without copying.
        packed.flags.writeable = False
        return cls(packed, d, column_counts=column_counts)

    # construction -------------------------------------------------------

    @classmethod
    def from_bits(cls, bits) -> "Database":
        """Build from a boolean matrix where True means +1."""
        bits = np.asarray(bits, dtype=bool)
        if bits.ndim != 2:
            raise DimensionError(f"expected a 2-D array, got shape {bits.shape}")
        return cls._owned(np.packbits(bits, axis=1, bitorder="little"), bits.shape[1])

    @classmethod
    def from_signs(cls, signs) -> "Database":
        """Build from a matrix of exact -1/+1 values."""
        signs = np.asarray(signs)
        if signs.ndim != 2:
            raise DimensionError(f"expected a 2-D array, got shape {signs.shape}")
        pos = signs == 1
        if not np.all(pos | (signs == -1)):
            raise ParameterError("every database entry must be exactly -1 or +1")
        return cls.from_bits(pos)

    @classmethod
    def constant(cls, n: int, d: int, sign: int = 1) -> "Database":
        if sign not in (1, -1):
            raise ParameterError("sign must be +1 or -1")
        row = np.full((1, d), sign == 1)
        packed = np.repeat(np.packbits(row, axis=1, bitorder="little"), n, axis=0)
        return cls._owned(packed, d)

    @classmethod
    def random(cls, n: int, d: int, rng: np.random.Generator, p: float | np.ndarray = 0.5) -> "Database":
        """Rows i.i.d.; column ``j`` is +1 with probability ``p`` (scalar or per-column)."""
        p = np.broadcast_to(np.asarray(p, dtype=np.float64), (d,))
        if np.any((p < 0) | (p > 1)):
            raise ParameterError("bias must lie in [0, 1]")
        if np.all(p == 0.5):
            nbytes = _row_bytes(d)
            return cls._owned(rng.integers(0, 256, size=(n, nbytes), dtype=np.uint8), d)
        return cls.from_bits(rng.random((n, d)) < p)

    # accessors ----------------------------------------------------------

    @property
    def n(self) -> int:
        return self._packed.shape[0]

    @property
    def d(self) -> int:
        return self._d

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self._d)

    @property
    def packed(self) -> np.ndarray:
        return self._packed

    def bits(self, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
        return np.unpackbits(self._packed[start:stop], axis=1, count=self._d, bitorder="little").astype(bool)

    def signs(self, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
        """Rows ``start:stop`` as a float64 matrix of +/-1."""
        return np.where(self.bits(start, stop), 1.0, -1.0)

    def row(self, i: int) -> np.ndarray:
        if not -self.n <= i < self.n:
            raise IndexError(f"row {i} out of range for n={self.n}")
        i %= self.n
        return self.signs(i, i + 1)[0]

    def iter_signs(self, chunk: int = 8192) -> Iterator[np.ndarray]:
        for start in range(0, self.n, chunk):
            yield self.signs(start, start + chunk)

    def column_counts(self) -> np.ndarray:
        """Number of +1 entries in each column (cached)."""
        if self._counts is None:
            counts = _kernels.column_counts(self._packed, self._d)
            counts.flags.writeable = False
            self._counts = counts
        return self._counts

    def with_row(self, i: int, row) -> "Database":
        """Copy with row ``i`` replaced by the +/-1 vector ``row``."""
        row = np.asarray(row)
        if row.shape != (self._d,):
            raise DimensionError(f"replacement row must have length {self._d}")
        if not np.all((row == 1) | (row == -1)):
            raise ParameterError("replacement row must be +/-1")
        packed = self._packed.copy()
        packed[i] = np.packbits(row == 1, bitorder="little")
        counts = None
        if self._counts is not None:
            counts = self._counts - self.bits(i, i + 1)[0] + (row == 1)
        return Database._owned(packed, self._d, column_counts=counts)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Database):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._packed, other._packed)

    def __hash__(self):
        return hash((self.shape, self._packed.tobytes()))

    def __repr__(self) -> str:
        return f"Database(n={self.n}, d={self.d})"


@dataclass(frozen=True)
class MarginalVector:
    """``d`` real values in [-1, 1]; true or released one-way marginals."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if v.size < 1:
            raise DimensionError("marginal vector must be non-empty")
        if not np.all(np.isfinite(v)) or np.any(np.abs(v) > 1.0):
            raise ParameterError("marginal values must be finite and lie in [-1, 1]")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.values.shape[0]

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, j):
        return self.values[j]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MarginalVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise ParameterError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if not 0 <= self.delta < 1:
            raise ParameterError(f"delta must lie in [0, 1), got {self.delta}")

    @property
    def pure(self) -> bool:
        return self.delta == 0


@dataclass(frozen=True)
class AccuracyParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ParameterError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0 < self.beta < 1:
            raise ParameterError(f"beta must lie in (0, 1), got {self.beta}")


@dataclass(frozen=True)
class GroupPrivacyParams:
    """Guarantee for databases differing in at most ``k`` rows."""

    k: int
    epsilon_k: float
    delta_k: float


def _as_vector(x) -> np.ndarray:
    if isinstance(x, MarginalVector):
        return x.values
    return np.asarray(x, dtype=np.float64).reshape(-1)


def compute_marginals(db: Database) -> MarginalVector:
    """Column means of ``db``."""
    n = db.n
    return MarginalVector((2 * db.column_counts() - n) / n)


def l1_error(a, b) -> float:
    a, b = _as_vector(a), _as_vector(b)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(np.sum(np.abs(a - b)))


def linf_error(a, b) -> float:
    a, b = _as_vector(a), _as_vector(b)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(np.max(np.abs(a - b)))


def group_privacy(params: PrivacyParams, k: int) -> GroupPrivacyParams:
    """Degrade ``(eps, delta)`` to ``(k eps, (e^{k eps} - 1)/(e^eps - 1) delta)``.

    At ``eps = 0`` the multiplier is taken as its limit ``k``.
    """
    if int(k) != k or k < 1:
        raise ParameterError(f"k must be a positive integer, got {k}")
    k = int(k)
    eps, delta = params.epsilon, params.delta
    if k == 1:
        return GroupPrivacyParams(1, eps, delta)
    if delta == 0:
        return GroupPrivacyParams(k, k * eps, 0.0)
    if eps == 0:
        return GroupPrivacyParams(k, 0.0, k * delta)
    try:
        multiplier = math.expm1(k * eps) / math.expm1(eps)
    except OverflowError:
        multiplier = math.inf
    return GroupPrivacyParams(k, k * eps, multiplier * delta)


# ---------------------------------------------------------------------------
# sample complexity formulas (unit constants unless stated)

GAUSS_SV_CONSTANT = 40.0
LINF_PURE_CONSTANT = 4.0


def _check_common(d, alpha, epsilon):
    if int(d) != d or d < 1:
        raise ParameterError(f"d must be a positive integer, got {d}")
    if not 0 < alpha <= 1:
        raise ParameterError(f"alpha must lie in (0, 1], got {alpha}")
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be > 0, got {epsilon}")


def _log_inv_delta(delta) -> float:
    if delta is None or delta == 0:
        raise DomainError("delta-dependent bound needs delta > 0")
    if not 0 < delta < 1:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    return -math.log(delta)


def approx_dp_rows(d, alpha, epsilon, delta, constant: float = 1.0) -> float:
    """``sqrt(d log(1/delta)) / (eps alpha)``: Laplace L1 upper bound and matching lower bound."""
    _check_common(d, alpha, epsilon)
    return constant * math.sqrt(d * _log_inv_delta(delta)) / (epsilon * alpha)


def pure_dp_rows(d, alpha, epsilon, constant: float = 1.0) -> float:
    """``d / (eps alpha)``."""
    _check_common(d, alpha, epsilon)
    return constant * d / (epsilon * alpha)


def gauss_sv_rows(d, alpha, epsilon, delta, constant: float = 1.0) -> float:
    """``sqrt(d log(1/delta) log log d) / (eps alpha)``; pass ``GAUSS_SV_CONSTANT`` for the explicit constant."""
    _check_common(d, alpha, epsilon)
    if d < 3:
        raise DomainError("log log d is non-positive for d < 3")
    return constant * math.sqrt(d * _log_inv_delta(delta) * math.log(math.log(d))) / (epsilon * alpha)


def packing_lower_rows(d, epsilon, constant: float = 1.0) -> float:
    """``d / eps``: pure-DP lower bound at constant accuracy."""
    _check_common(d, 1.0, epsilon)
    return constant * d / epsilon


def packing_lower_explicit(d, epsilon) -> float:
    """``d/(800 eps) - ln(20)/eps``, the non-asymptotic form of the packing lower bound."""
    _check_common(d, 1.0, epsilon)
    return d / (800 * epsilon) - math.log(20) / epsilon


def linf_pure_rows(d, alpha, epsilon) -> float:
    """``4 d / (eps alpha)``: rows at which the L-infinity mechanism has its stated tail."""
    return pure_dp_rows(d, alpha, epsilon, constant=LINF_PURE_CONSTANT)


@dataclass(frozen=True)
class SampleComplexityBounds:
    """Unit-constant bound values; ``None`` where the formula is undefined."""

    d: int
    alpha: float
    epsilon: float
    delta: Optional[float]
    laplace_approx_upper: Optional[float]
    laplace_pure_upper: float
    approx_lower: Optional[float]
    gauss_sv_upper: Optional[float]
    pure_lower: float
    constants: dict = field(default_factory=lambda: {"gauss_sv_upper": GAUSS_SV_CONSTANT})

    @property
    def laplace_upper(self) -> float:
        if self.laplace_approx_upper is None:
            return self.laplace_pure_upper
        return min(self.laplace_approx_upper, self.laplace_pure_upper)


def sample_complexity_bounds(d, alpha, epsilon, delta: Optional[float] = None) -> SampleComplexityBounds:
    _check_common(d, alpha, epsilon)
    if delta is not None and not 0 <= delta < 1:
        raise ParameterError(f"delta must lie in [0, 1), got {delta}")

    def maybe(fn, *args):
        try:
            return fn(*args)
        except DomainError:
            return None

    approx = maybe(approx_dp_rows, d, alpha, epsilon, delta)
    return SampleComplexityBounds(
        d=int(d),
        alpha=alpha,
        epsilon=epsilon,
        delta=delta,
        laplace_approx_upper=approx,
        laplace_pure_upper=pure_dp_rows(d, alpha, epsilon),
        approx_lower=approx,
        gauss_sv_upper=maybe(gauss_sv_rows, d, alpha, epsilon, delta),
        pure_lower=packing_lower_rows(d, epsilon),
    )
