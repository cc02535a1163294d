"""Exact integer/rational matrix helpers (Python ints, no overflow)."""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def as_int_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a 2-d int64 array, rejecting non-integral entries."""
    arr = np.asarray(a)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 0)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise ValueError(f"{name} has non-integer entries")
    elif arr.dtype.kind not in "iu" and arr.size:
        raise ValueError(f"{name} has non-numeric entries")
    return arr.astype(np.int64)


def _rows(a) -> list[list[int]]:
    return [[int(v) for v in row] for row in np.asarray(a)]


def int_det(a) -> int:
    """Determinant by fraction-free Bareiss elimination."""
    m = _rows(a)
    n = len(m)
    if n == 0:
        return 1
    if any(len(r) != n for r in m):
        raise ValueError("determinant needs a square matrix")
    sign, prev = 1, 1
    for k in range(n - 1):
        if m[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if m[i][k] != 0), None)
            if swap is None:
                return 0
            m[k], m[swap] = m[swap], m[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1]


def rational_inverse(a) -> list[list[Fraction]]:
    m = [[Fraction(v) for v in row] for row in _rows(a)]
    n = len(m)
    aug = [row + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(m)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if piv is None:
            raise ZeroDivisionError("singular matrix")
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        aug[col] = [v / p for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [vr - f * vc for vr, vc in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def int_inverse(a) -> np.ndarray:
    """Exact inverse of a unimodular integer matrix."""
    inv = rational_inverse(a)
    if any(v.denominator != 1 for row in inv for v in row):
        raise ValueError("matrix is not unimodular: inverse is not integral")
    n = len(inv)
    return np.array([[int(v) for v in row] for row in inv], dtype=np.int64).reshape(n, n)


def int_rank(a) -> int:
    """Rank over the rationals (exact)."""
    m = [[Fraction(v) for v in row] for row in _rows(a)]
    if not m or not m[0]:
        return 0
    rows, cols = len(m), len(m[0])
    rank = 0
    for col in range(cols):
        piv = next((r for r in range(rank, rows) if m[r][col] != 0), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        for r in range(rows):
            if r != rank and m[r][col] != 0:
                f = m[r][col] / m[rank][col]
                m[r] = [vr - f * vc for vr, vc in zip(m[r], m[rank])]
        rank += 1
        if rank == rows:
            break
    return rank


def int_matmul(a, b) -> np.ndarray:
    """Integer product via Python ints, then checked back into int64."""
    ra, rb = _rows(a), _rows(b)
    inner = len(rb)
    cols = np.asarray(b).shape[1]
    out = [[sum(ra[i][t] * rb[t][j] for t in range(inner)) for j in range(cols)] for i in range(len(ra))]
    return np.array(out, dtype=np.int64).reshape(len(ra), cols)
