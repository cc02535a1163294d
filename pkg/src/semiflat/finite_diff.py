"""Second-order finite differences on uniform tensor grids.

Interior nodes use the compact central stencils (three points per axis,
corner points for mixed terms); boundary nodes use second-order one-sided
stencils.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def first_derivative(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    return np.gradient(f, h, axis=axis, edge_order=2)


def second_derivative(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    n = f.shape[0]
    if n < 4:
        raise ValueError("need at least 4 nodes per axis for second derivatives")
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h**2
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h**2
    out[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / h**2
    return np.moveaxis(out, 0, axis)


def grid_jets(f: np.ndarray, h: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Gradient and Hessian of a scalar grid function; shapes ``grid+(k,)`` and ``grid+(k,k)``."""
    f = np.asarray(f, dtype=float)
    k = f.ndim
    grad = np.stack([first_derivative(f, h[i], i) for i in range(k)], axis=-1)
    hess = np.empty(f.shape + (k, k))
    for i in range(k):
        hess[..., i, i] = second_derivative(f, h[i], i)
        for j in range(i + 1, k):
            hess[..., i, j] = hess[..., j, i] = first_derivative(grad[..., i], h[j], j)
    return grad, hess


def grid_gradient(values: np.ndarray, h: Sequence[float], grid_ndim: int) -> np.ndarray:
    """Derivatives of a vector/tensor valued grid function along the first ``grid_ndim`` axes.

    ``values`` has shape ``grid + tail``; the result has shape ``grid + tail + (k,)``.
    """
    values = np.asarray(values, dtype=float)
    return np.stack([first_derivative(values, h[i], i) for i in range(grid_ndim)], axis=-1)
