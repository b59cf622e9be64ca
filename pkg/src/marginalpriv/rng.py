"""Deterministic random streams.

Every random draw in the package comes from a :class:`numpy.random.Generator`
handed in by the caller. This module derives those generators from a single
unsigned 64-bit master seed: a component label is hashed (BLAKE2b, 64 bits)
and mixed with the master seed and, optionally, a trial index through
:class:`numpy.random.SeedSequence`. Distinct labels or trial indices yield
statistically independent streams; identical inputs yield identical streams on
every platform numpy supports.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ParameterError

MAX_SEED = (1 << 64) - 1


def label_hash(label: str) -> int:
    return int.from_bytes(hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest(), "little")


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ParameterError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def seed_sequence(seed: int, label: str = "", trial: int | None = None) -> np.random.SeedSequence:
    key = [label_hash(label)]
    if trial is not None:
        key.append(int(trial))
    return np.random.SeedSequence(entropy=check_seed(seed), spawn_key=tuple(key))


def make_rng(seed: int, label: str = "", trial: int | None = None) -> np.random.Generator:
    """Generator for component ``label`` (and trial ``trial``) under master ``seed``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, label, trial)))


def ensure_rng(rng) -> np.random.Generator:
    """Accept a Generator, an integer seed, or None (fresh OS entropy)."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return np.random.default_rng()
    return make_rng(rng)


def uniform_open_closed(rng: np.random.Generator, size=None) -> np.ndarray:
    """Uniform variates on (0, 1], safe to pass to log."""
    return 1.0 - rng.random(size)
