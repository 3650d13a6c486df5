"""Modular-arithmetic kernels with a numba path and a pure-numpy fallback.

The backend is picked once at import time from ``PMPIR_BACKEND``
(``numba`` or ``numpy``). When numba is missing the numpy path is used
regardless of the flag. Both implementations are always importable under
their own names so tests and the benchmark can compare them directly.

All kernels take ``int64`` arrays holding canonical residues in ``[0, q)``
with ``q < 2**31`` so every product fits in 64 bits.
"""

import logging
import os

import numpy as np

logger = logging.getLogger(__name__)

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


def _requested_backend():
    name = os.environ.get("PMPIR_BACKEND", "numba").strip().lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"PMPIR_BACKEND must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and not HAS_NUMBA:
        logger.warning("numba not importable, falling back to numpy kernels")
        return "numpy"
    return name


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _np_inv_scalar(a, q):
    q = int(q)
    return pow(int(a), q - 2, q)


def numpy_matmul_mod(a, b, q):
    """Return ``a @ b mod q`` accumulating one rank-1 update at a time."""
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.int64)
    for t in range(a.shape[1]):
        out += np.outer(a[:, t], b[t, :]) % q
        out %= q
    return out


def numpy_rref_mod(a, q, ncols):
    """Gauss-Jordan on ``a`` in place, pivoting only inside the first ``ncols`` columns.

    Returns the pivot column indices as an int64 array.
    """
    rows = a.shape[0]
    pivots = []
    row = 0
    for col in range(ncols):
        if row >= rows:
            break
        nz = np.nonzero(a[row:, col])[0]
        if nz.size == 0:
            continue
        piv = row + int(nz[0])
        if piv != row:
            a[[row, piv]] = a[[piv, row]]
        inv = _np_inv_scalar(a[row, col], q)
        a[row] = (a[row] * inv) % q
        factors = a[:, col].copy()
        factors[row] = 0
        a -= np.outer(factors, a[row]) % q
        a %= q
        pivots.append(col)
        row += 1
    return np.asarray(pivots, dtype=np.int64)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @numba.njit(cache=True)
    def _nb_pow_mod(base, exp, q):
        result = 1
        base %= q
        while exp > 0:
            if exp & 1:
                result = (result * base) % q
            base = (base * base) % q
            exp >>= 1
        return result

    @numba.njit(cache=True)
    def numba_matmul_mod(a, b, q):
        n, inner = a.shape
        cols = b.shape[1]
        out = np.zeros((n, cols), dtype=np.int64)
        for i in range(n):
            for t in range(inner):
                ait = a[i, t]
                if ait == 0:
                    continue
                for j in range(cols):
                    out[i, j] = (out[i, j] + ait * b[t, j]) % q
        return out

    @numba.njit(cache=True)
    def numba_rref_mod(a, q, ncols):
        rows, total = a.shape
        pivots = np.empty(min(rows, ncols), dtype=np.int64)
        row = 0
        for col in range(ncols):
            if row >= rows:
                break
            piv = -1
            for i in range(row, rows):
                if a[i, col] != 0:
                    piv = i
                    break
            if piv < 0:
                continue
            if piv != row:
                for j in range(total):
                    tmp = a[row, j]
                    a[row, j] = a[piv, j]
                    a[piv, j] = tmp
            inv = _nb_pow_mod(a[row, col], q - 2, q)
            for j in range(total):
                a[row, j] = (a[row, j] * inv) % q
            for i in range(rows):
                if i == row:
                    continue
                f = a[i, col]
                if f == 0:
                    continue
                for j in range(total):
                    a[i, j] = (a[i, j] - f * a[row, j]) % q
            pivots[row] = col
            row += 1
        return pivots[:row].copy()

else:  # pragma: no cover
    numba_matmul_mod = None
    numba_rref_mod = None


BACKEND = _requested_backend()

if BACKEND == "numba":
    _matmul = numba_matmul_mod
    _rref = numba_rref_mod
else:
    _matmul = numpy_matmul_mod
    _rref = numpy_rref_mod


def matmul_mod(a, b, q):
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    return _matmul(a, b, np.int64(q))


def rref_mod(a, q, ncols=None):
    """Reduce a copy of ``a``; return ``(reduced, pivot_columns)``."""
    work = np.array(a, dtype=np.int64, copy=True, order="C")
    if ncols is None:
        ncols = work.shape[1]
    pivots = _rref(work, np.int64(q), np.int64(ncols))
    return work, pivots
