"""Sum tree over nonnegative leaf priorities with proportional sampling.

Leaves live at ``nodes[size + i]`` where ``size`` is the smallest power of two
holding ``capacity`` leaves; node ``j`` has children ``2j`` and ``2j + 1`` and
the root is ``nodes[1]``. Padding leaves beyond ``capacity`` stay at zero.
"""
import math

import numpy as np
from numba import njit

REBUILD_EVERY = 1 << 20


class EmptyDistributionError(ValueError):
    """Raised when sampling from a tree whose total mass is zero."""


@njit("void(float64[::1], int64, int64, float64)", cache=True)
def _set_leaf(nodes, size, index, value):
    j = index + size
    nodes[j] = value
    j >>= 1
    while j >= 1:
        nodes[j] = nodes[2 * j] + nodes[2 * j + 1]
        j >>= 1


@njit("int64(float64[::1], int64, float64)", cache=True)
def _descend(nodes, size, mass):
    j = 1
    while j < size:
        left = nodes[2 * j]
        if mass < left:
            j = 2 * j
        elif nodes[2 * j + 1] > 0.0:
            mass -= left
            j = 2 * j + 1
        else:
            # rounding pushed the residual past the last positive leaf
            j = 2 * j
    return j - size


@njit("int64[::1](float64[::1], int64, float64[::1])", cache=True)
def _descend_many(nodes, size, us):
    out = np.empty(us.shape[0], dtype=np.int64)
    total = nodes[1]
    for k in range(us.shape[0]):
        out[k] = _descend(nodes, size, us[k] * total)
    return out


def _rebuild(nodes, size):
    lo = size
    while lo > 1:
        nodes[lo // 2:lo] = nodes[lo:2 * lo:2] + nodes[lo + 1:2 * lo:2]
        lo //= 2


class SumTree:
    """Fixed-capacity sum tree. Not safe for concurrent mutation."""

    def __init__(self, capacity):
        capacity = int(capacity)
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        size = 1
        while size < capacity:
            size *= 2
        self._size = size
        self.nodes = np.zeros(2 * size, dtype=np.float64)
        self.leaf_count_in_use = 0
        self._sets_since_rebuild = 0

    def __len__(self):
        return self.capacity

    def total(self):
        return float(self.nodes[1])

    def get(self, index):
        if not 0 <= index < self.capacity:
            raise ValueError(f"leaf index {index} out of range [0, {self.capacity})")
        return float(self.nodes[self._size + index])

    def leaves(self):
        """View of the leaf values (do not write through it)."""
        return self.nodes[self._size:self._size + self.capacity]

    def set(self, index, priority):
        if not 0 <= index < self.capacity:
            raise ValueError(f"leaf index {index} out of range [0, {self.capacity})")
        priority = float(priority)
        if not (priority >= 0.0 and math.isfinite(priority)):
            raise ValueError(f"priority must be finite and >= 0, got {priority}")
        nodes = self.nodes
        j = self._size + index
        old = nodes[j]
        if old > 0.0:
            if priority == 0.0:
                self.leaf_count_in_use -= 1
        elif priority > 0.0:
            self.leaf_count_in_use += 1
        _set_leaf(nodes, self._size, index, priority)
        self._sets_since_rebuild += 1
        if self._sets_since_rebuild >= REBUILD_EVERY:
            self.rebuild()

    def rebuild(self):
        """Recompute every internal node from the leaves."""
        _rebuild(self.nodes, self._size)
        self._sets_since_rebuild = 0

    def sample(self, u):
        """Leaf whose half-open cumulative interval contains ``u * total()``."""
        total = self.nodes[1]
        if not total > 0.0:
            raise EmptyDistributionError("cannot sample from a tree with zero total")
        if not 0.0 <= u < 1.0:
            raise ValueError(f"u must lie in [0, 1), got {u}")
        return _descend(self.nodes, self._size, u * total)

    def sample_batch(self, n, rng):
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        if not self.nodes[1] > 0.0:
            raise EmptyDistributionError("cannot sample from a tree with zero total")
        us = rng.random(n)
        return _descend_many(self.nodes, self._size, us).tolist()

    def probability(self, index):
        return self.get(index) / self.total()
