"""Pure numpy versions of the compiled kernels."""

import numpy as np

_ROW_CHUNK = 1 << 16
_ENTRY_CHUNK = 1 << 22
# _BIT_TABLE[v, b] is bit b (LSB first) of byte value v.
_BIT_TABLE = np.unpackbits(np.arange(256, dtype=np.uint8)[:, None], axis=1, bitorder="little").astype(np.int64)


def column_counts(packed, d):
    """Number of set bits in each of the first ``d`` columns of row-packed bits."""
    n, nbytes = packed.shape
    if n < 256:
        # Few rows: summing unpacked bits beats a 256-bin histogram per byte.
        counts = np.zeros(nbytes * 8, dtype=np.int64)
        step = max(1, _ENTRY_CHUNK // (8 * nbytes))
        for start in range(0, n, step):
            bits = np.unpackbits(packed[start:start + step], axis=1, bitorder="little")
            counts += bits.sum(axis=0, dtype=np.int64)
        return counts[:d].copy()
    hist = np.zeros((nbytes, 256), dtype=np.int64)
    offsets = (np.arange(nbytes, dtype=np.int64) * 256)[None, :]
    for start in range(0, n, _ROW_CHUNK):
        block = packed[start:start + _ROW_CHUNK].astype(np.int64) + offsets
        hist += np.bincount(block.ravel(), minlength=nbytes * 256).reshape(nbytes, 256)
    counts = (hist @ _BIT_TABLE).ravel()
    return counts[:d].copy()


def sv_scan(values, test_noise, threshold_noise, answer_noise, threshold, used):
    m = values.shape[0]
    cap = threshold_noise.shape[0]
    answers = np.zeros(m, dtype=np.float64)
    flagged = np.zeros(m, dtype=bool)
    scores = np.abs(values) + test_noise
    pos = 0
    while used < cap and pos < m:
        above = scores[pos:] > threshold + threshold_noise[used]
        hit = int(np.argmax(above))
        if not above[hit]:
            break
        j = pos + hit
        answers[j] = min(1.0, max(-1.0, values[j] + answer_noise[used]))
        flagged[j] = True
        used += 1
        pos = j + 1
    return answers, flagged, used


def masked_row_sums(packed, w):
    """Per row, the sum of ``w`` over the columns whose bit is set."""
    n, d = packed.shape[0], w.shape[0]
    out = np.empty(n, dtype=np.float64)
    step = max(1, _ENTRY_CHUNK // max(d, 1))
    for start in range(0, n, step):
        bits = np.unpackbits(packed[start:start + step], axis=1, count=d, bitorder="little").astype(bool)
        # numpy's sum is pairwise, which keeps the error at O(log d) ulps.
        out[start:start + step] = np.sum(np.where(bits, w, 0.0), axis=1)
    return out
