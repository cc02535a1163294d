"""Circle-valued helpers: principal branch, circular distance, grid unwrapping."""

from __future__ import annotations

import numpy as np


def wrap(x):
    """Map angles to the principal interval ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - np.asarray(x, dtype=float), 2.0 * np.pi)


def circular_distance(a, b):
    return np.abs(wrap(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def continuation_parent(idx: tuple[int, ...]) -> tuple[int, ...] | None:
    """Grid neighbour used for continuation: decrement the last nonzero index."""
    for pos in range(len(idx) - 1, -1, -1):
        if idx[pos] > 0:
            parent = list(idx)
            parent[pos] -= 1
            return tuple(parent)
    return None


def unwrap_grid(phase: np.ndarray) -> np.ndarray:
    """Nearest-branch unwrapping along the lexicographic continuation order."""
    phase = np.asarray(phase, dtype=float)
    out = np.empty_like(phase)
    for idx in np.ndindex(*phase.shape):
        parent = continuation_parent(idx)
        if parent is None:
            out[idx] = phase[idx]
        else:
            ref = out[parent]
            out[idx] = ref + wrap(phase[idx] - ref)
    return out


def max_neighbour_jump(phase: np.ndarray) -> float:
    """Largest phase difference between grid neighbours along any axis."""
    phase = np.asarray(phase, dtype=float)
    jumps = [np.max(np.abs(np.diff(phase, axis=ax)), initial=0.0) for ax in range(phase.ndim)]
    return float(max(jumps, default=0.0))
