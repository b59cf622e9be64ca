"""Hot inner loops, compiled when available.

The Cython extension ``_ckernels`` is used if it was built; otherwise the numpy
versions in ``_fallback`` are used. Set ``MARGINALPRIV_PURE_PYTHON=1`` to force
the fallback. ``BACKEND`` names the active implementation.

Kernels
-------
column_counts(packed, d)
    Per-column count of set bits in a row-packed (little bit order) bit matrix.
sv_scan(values, test_noise, threshold_noise, answer_noise, threshold, used)
    One pass of the restarting above-threshold scan. Returns
    ``(answers, flagged, used)``.
masked_row_sums(packed, w)
    Per row of a row-packed bit matrix, the sum of ``w`` over set bits, with
    compensated (compiled) or pairwise (fallback) summation.
"""

import os

import numpy as np

from . import _fallback

if os.environ.get("MARGINALPRIV_PURE_PYTHON") == "1":
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _fallback
        BACKEND = "python"
    else:
        BACKEND = "cython"


def column_counts(packed, d):
    return _impl.column_counts(np.ascontiguousarray(packed, dtype=np.uint8), int(d))


def sv_scan(values, test_noise, threshold_noise, answer_noise, threshold, used):
    return _impl.sv_scan(
        np.ascontiguousarray(values, dtype=np.float64),
        np.ascontiguousarray(test_noise, dtype=np.float64),
        np.ascontiguousarray(threshold_noise, dtype=np.float64),
        np.ascontiguousarray(answer_noise, dtype=np.float64),
        float(threshold),
        int(used),
    )


def masked_row_sums(packed, w):
    return _impl.masked_row_sums(
        np.ascontiguousarray(packed, dtype=np.uint8), np.ascontiguousarray(w, dtype=np.float64)
    )


def implementations():
    """Mapping of backend name to kernel module, for cross-checking and benchmarks."""
    impls = {"python": _fallback}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        impls["cython"] = _ckernels
    return impls
