"""Feature-cluster matching between the two linked views.

The matching term compares the aggregated table of view (1,1), with its rows
reordered by a permutation ``h``, against the aggregated table of view (1,2):

    KL( P1[h] || P2 ),   where  P1[h][k] = P1[h[k]].

Because the divergence is a sum over rows, each candidate pairing of row ``a``
of ``P1`` with row ``k`` of ``P2`` has an independent cost and the optimal
``h`` solves a linear assignment problem.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import rel_entr

from .errors import InvalidInputError

#: ``auto`` enumerates all permutations up to this many clusters
EXHAUSTIVE_MAX_K = 8
_EXHAUSTIVE_FALLBACK_MAX_K = 10
_CHUNK = 1 << 14


@dataclass(frozen=True, eq=False)
class Permutation:
    """Bijection of ``{0..K-1}``; ``map[k]`` is the row of P1 placed at row k."""

    map: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.map, dtype=np.int64)
        if m.ndim != 1 or not np.array_equal(np.sort(m), np.arange(m.size)):
            raise InvalidInputError(f"not a permutation: {m.tolist()}")
        object.__setattr__(self, "map", m)

    @classmethod
    def identity(cls, k: int) -> "Permutation":
        return cls(np.arange(k))

    def __len__(self):
        return self.map.size

    def __eq__(self, other):
        return isinstance(other, Permutation) and np.array_equal(self.map, other.map)

    def __hash__(self):
        return hash(self.map.tobytes())

    def inverse(self) -> "Permutation":
        inv = np.empty_like(self.map)
        inv[self.map] = np.arange(self.map.size)
        return Permutation(inv)

    def tolist(self) -> list[int]:
        return self.map.tolist()


def matching_kl(ptilde1, ptilde2, h) -> float:
    """``KL(ptilde1[h] || ptilde2)`` in nats (``inf`` if not absolutely continuous)."""
    ptilde1 = np.asarray(ptilde1, dtype=float)
    ptilde2 = np.asarray(ptilde2, dtype=float)
    hm = h.map if isinstance(h, Permutation) else np.asarray(h)
    return float(rel_entr(ptilde1[hm], ptilde2).sum())


def pairing_costs(ptilde1, ptilde2) -> np.ndarray:
    """``c[a, k] = sum_j P1[a, j] log(P1[a, j] / P2[k, j])``."""
    ptilde1 = np.asarray(ptilde1, dtype=float)
    ptilde2 = np.asarray(ptilde2, dtype=float)
    return rel_entr(ptilde1[:, None, :], ptilde2[None, :, :]).sum(axis=2)


def _exhaustive(ptilde1, ptilde2):
    k = ptilde1.shape[0]
    best_val, best_perm = math.inf, None
    perms = itertools.permutations(range(k))
    while True:
        chunk = np.array(list(itertools.islice(perms, _CHUNK)), dtype=np.int64)
        if chunk.size == 0:
            break
        vals = rel_entr(ptilde1[chunk], ptilde2[None, :, :]).sum(axis=(1, 2))
        i = int(np.argmin(vals))
        if vals[i] < best_val or best_perm is None:
            best_val, best_perm = float(vals[i]), chunk[i]
    return Permutation(best_perm), best_val


def _assignment(ptilde1, ptilde2):
    k = ptilde1.shape[0]
    cost = pairing_costs(ptilde1, ptilde2)
    finite = np.isfinite(cost)
    clamped = cost.copy()
    if not finite.all():
        big = np.abs(cost[finite]).max() if finite.any() else 0.0
        clamped[~finite] = 2.0 * big * k + 1.0
    rows, cols = linear_sum_assignment(clamped)
    hmap = np.empty(k, dtype=np.int64)
    hmap[cols] = rows
    h = Permutation(hmap)
    if not finite[rows, cols].all() and k <= _EXHAUSTIVE_FALLBACK_MAX_K:
        return _exhaustive(ptilde1, ptilde2)
    return h, matching_kl(ptilde1, ptilde2, h)


def solve_permutation(ptilde1, ptilde2, solver: str = "auto"):
    """Permutation ``h`` minimizing ``KL(ptilde1[h] || ptilde2)``.

    Parameters
    ----------
    ptilde1, ptilde2 : ndarray, shape (K, N)
    solver : {"exhaustive", "assignment", "auto"}
        ``exhaustive`` scores all K! orderings; ``assignment`` solves the
        equivalent linear assignment problem; ``auto`` enumerates for
        K <= 8.

    Returns
    -------
    (Permutation, float)
    """
    ptilde1 = np.asarray(ptilde1, dtype=float)
    ptilde2 = np.asarray(ptilde2, dtype=float)
    if ptilde1.shape != ptilde2.shape or ptilde1.ndim != 2:
        raise InvalidInputError(f"shape mismatch: {ptilde1.shape} vs {ptilde2.shape}")
    if ptilde1.shape[0] < 1:
        raise InvalidInputError("need at least one row")
    if solver == "auto":
        solver = "exhaustive" if ptilde1.shape[0] <= EXHAUSTIVE_MAX_K else "assignment"
    if solver == "exhaustive":
        return _exhaustive(ptilde1, ptilde2)
    if solver == "assignment":
        return _assignment(ptilde1, ptilde2)
    raise InvalidInputError(f"unknown permutation solver {solver!r}")
