"""Windowed map-comparison kernels.

Two interchangeable backends compute the same per-tile counts over a pair of
equally-shaped uint8 cell arrays (0 = unknown, 1 = free, 2 = occupied):

* ``numba``: explicit loops compiled with ``@njit``; ``any_conflict`` exits on
  the first conflicting tile.
* ``numpy``: vectorised pad/reshape/sum.

The numba backend is used when numba imports and ``SWARMLEDGER_NO_JIT`` is
unset (or ``0``).  Set ``SWARMLEDGER_NO_JIT=1`` to force the numpy path.
"""

from __future__ import annotations

import os

import numpy as np

UNKNOWN = 0


def _jit_requested() -> bool:
    return os.environ.get("SWARMLEDGER_NO_JIT", "0").strip().lower() in ("", "0", "false", "no")


# ---------------------------------------------------------------------------
# numpy backend


def _tile_sum(mask: np.ndarray, n: int) -> np.ndarray:
    rows, cols = mask.shape
    tr = -(-rows // n)
    tc = -(-cols // n)
    padded = np.zeros((tr * n, tc * n), dtype=np.int64)
    padded[:rows, :cols] = mask
    return padded.reshape(tr, n, tc, n).sum(axis=(1, 3))


def tile_counts_numpy(a: np.ndarray, b: np.ndarray, n: int):
    a_unknown = a == UNKNOWN
    b_unknown = b == UNKNOWN
    same = (a == b) & ~a_unknown
    diff = (a != b) & ~a_unknown & ~b_unknown
    cells = np.ones(a.shape, dtype=bool)
    return (
        _tile_sum(same, n),
        _tile_sum(diff, n),
        _tile_sum(a_unknown, n),
        _tile_sum(b_unknown, n),
        _tile_sum(cells, n),
    )


def conflict_mask_numpy(S, D, U, Up, cc, t: float, tp: float) -> np.ndarray:
    cc_f = cc.astype(np.float64)
    known = D + S
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(known > 0, D / np.where(known > 0, known, 1), 0.0)
    return (U / cc_f < t) & (Up / cc_f < t) & (known > 0) & (ratio > tp)


def any_conflict_numpy(a: np.ndarray, b: np.ndarray, n: int, t: float, tp: float) -> bool:
    if a.size == 0:
        return False
    return bool(conflict_mask_numpy(*tile_counts_numpy(a, b, n), t, tp).any())


# ---------------------------------------------------------------------------
# numba backend

try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False


if HAVE_NUMBA:

    @njit(cache=True)
    def _tile_counts_jit(a, b, n):
        rows, cols = a.shape
        tr = (rows + n - 1) // n
        tc = (cols + n - 1) // n
        S = np.zeros((tr, tc), dtype=np.int64)
        D = np.zeros((tr, tc), dtype=np.int64)
        U = np.zeros((tr, tc), dtype=np.int64)
        Up = np.zeros((tr, tc), dtype=np.int64)
        cc = np.zeros((tr, tc), dtype=np.int64)
        for i in range(rows):
            ti = i // n
            for j in range(cols):
                tj = j // n
                x = a[i, j]
                y = b[i, j]
                cc[ti, tj] += 1
                if x == 0:
                    U[ti, tj] += 1
                if y == 0:
                    Up[ti, tj] += 1
                if x != 0 and y != 0:
                    if x == y:
                        S[ti, tj] += 1
                    else:
                        D[ti, tj] += 1
        return S, D, U, Up, cc

    @njit(cache=True)
    def _any_conflict_jit(a, b, n, t, tp):
        rows, cols = a.shape
        for r0 in range(0, rows, n):
            r1 = min(r0 + n, rows)
            for c0 in range(0, cols, n):
                c1 = min(c0 + n, cols)
                s = 0
                d = 0
                u = 0
                up = 0
                for i in range(r0, r1):
                    for j in range(c0, c1):
                        x = a[i, j]
                        y = b[i, j]
                        if x == 0:
                            u += 1
                        if y == 0:
                            up += 1
                        if x != 0 and y != 0:
                            if x == y:
                                s += 1
                            else:
                                d += 1
                cc = (r1 - r0) * (c1 - c0)
                known = s + d
                if known > 0 and u / cc < t and up / cc < t and d / known > tp:
                    return True
        return False

    def tile_counts_numba(a: np.ndarray, b: np.ndarray, n: int):
        return _tile_counts_jit(np.ascontiguousarray(a), np.ascontiguousarray(b), n)

    def any_conflict_numba(a: np.ndarray, b: np.ndarray, n: int, t: float, tp: float) -> bool:
        if a.size == 0:
            return False
        return bool(_any_conflict_jit(np.ascontiguousarray(a), np.ascontiguousarray(b), n, float(t), float(tp)))

else:  # pragma: no cover
    tile_counts_numba = None
    any_conflict_numba = None


def backend() -> str:
    return "numba" if HAVE_NUMBA and _jit_requested() else "numpy"


def tile_counts(a: np.ndarray, b: np.ndarray, n: int):
    """Per-tile (same, diff, unknown_a, unknown_b, cell_count) arrays."""
    if backend() == "numba":
        return tile_counts_numba(a, b, n)
    return tile_counts_numpy(a, b, n)


def any_conflict(a: np.ndarray, b: np.ndarray, n: int, t: float, tp: float) -> bool:
    if backend() == "numba":
        return any_conflict_numba(a, b, n, t, tp)
    return any_conflict_numpy(a, b, n, t, tp)
