"""Trial runner and experiment records.

Trials are independent given their seeds: trial ``t`` of component ``label``
draws from ``make_rng(master_seed, label, t)``. With ``jobs > 1`` trials run
on a thread pool; results are always returned in trial order, so output does
not depend on scheduling.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Optional

import numpy as np

SIG_DIGITS = 12


def fmt_float(x: float) -> str:
    """Decimal with 12 significant digits; the one formatting rule for numeric output."""
    if x is None:
        return "n/a"
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.{SIG_DIGITS}g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [_jsonable(v) for v in items]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        # Round-trip through the 12-digit format so records diff cleanly.
        x = float(obj)
        return float(fmt_float(x)) if math.isfinite(x) else fmt_float(x)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


@dataclass
class ExperimentRecord:
    experiment_id: str
    subcommand: str
    parameters: dict
    seed: int
    outputs: Any
    duration_s: Optional[float] = field(default=None)

    def to_json(self, include_timing: bool = False) -> str:
        rec = asdict(self)
        if not include_timing:
            rec.pop("duration_s")
        return dumps(rec)


def run_trials(fn: Callable[[int], Any], trials: int, jobs: int = 1) -> list:
    """``[fn(0), ..., fn(trials-1)]``, optionally evaluated on ``jobs`` threads."""
    if trials <= 0:
        return []
    if jobs <= 1:
        return [fn(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, range(trials)))


class Stopwatch:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
