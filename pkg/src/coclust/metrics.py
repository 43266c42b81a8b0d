"""Clustering agreement and model-selection metrics.

NMI here divides by the geometric mean of the two entropies, so values are
not directly comparable with tools that use the arithmetic mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import xlogy

from .errors import InvalidInputError


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    counts: np.ndarray
    row_sums: np.ndarray
    col_sums: np.ndarray
    total: int


def _codes(labels):
    """Integer codes for a labeling; small nonnegative ints are used as they are."""
    if labels.dtype.kind in "iu" and labels.size and labels.min() >= 0 \
            and labels.max() < 4 * labels.size + 16:
        return labels.astype(np.int64, copy=False), int(labels.max()) + 1
    _, inv = np.unique(labels, return_inverse=True)
    return inv.ravel(), (int(inv.max()) + 1 if inv.size else 0)


def _counts(a, b):
    a, ka = _codes(a)
    b, kb = _codes(b)
    return np.bincount(a * kb + b, minlength=ka * kb).reshape(ka, kb)


def _check_pair(labels_a, labels_b):
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidInputError("labelings must be 1-D and of equal length")
    return a, b


def contingency_table(labels_a, labels_b, n_rows=None, n_cols=None) -> ContingencyTable:
    """Overlap counts ``n_ij`` between two labelings of the same items.

    Labels may be arbitrary hashables; with ``n_rows``/``n_cols`` they are
    taken as integer ids in ``range(n_rows)`` / ``range(n_cols)``.
    """
    a, b = _check_pair(labels_a, labels_b)
    if n_rows is None:
        _, a = np.unique(a, return_inverse=True)
        n_rows = int(a.max()) + 1 if a.size else 0
    if n_cols is None:
        _, b = np.unique(b, return_inverse=True)
        n_cols = int(b.max()) + 1 if b.size else 0
    counts = np.zeros((n_rows, n_cols), dtype=np.int64)
    np.add.at(counts, (a.astype(np.int64).ravel(), b.astype(np.int64).ravel()), 1)
    return ContingencyTable(counts, counts.sum(axis=1), counts.sum(axis=0), int(a.size))


def _pairs(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1) / 2


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-np.sum(xlogy(p, p)))


def nmi(labels_a, labels_b) -> float:
    """Normalized mutual information ``I(G;P) / sqrt(H(G) H(P))`` in [0, 1]."""
    a, b = _check_pair(labels_a, labels_b)
    if a.size == 0:
        raise InvalidInputError("empty labeling")
    counts = _counts(a, b)
    n = a.size
    rows, cols = counts.sum(axis=1), counts.sum(axis=0)
    ha, hb = _entropy(rows, n), _entropy(cols, n)
    if ha == 0 and hb == 0:
        return 1.0
    if ha == 0 or hb == 0:
        return 0.0
    nz = counts > 0
    nij = counts[nz]
    outer = np.outer(rows, cols)[nz]
    mi = float(np.sum(nij / n * np.log(nij * n / outer)))
    return float(min(1.0, max(0.0, mi / np.sqrt(ha * hb))))


def ari(labels_a, labels_b) -> float:
    """Adjusted Rand index from the contingency table (pairs counted by binomials)."""
    a, b = _check_pair(labels_a, labels_b)
    if a.size < 2:
        raise InvalidInputError("ARI needs at least two items")
    counts = _counts(a, b)
    index = _pairs(counts).sum()
    sa = _pairs(counts.sum(axis=1)).sum()
    sb = _pairs(counts.sum(axis=0)).sum()
    expected = sa * sb / _pairs(a.size)
    top = 0.5 * (sa + sb)
    if top == expected:
        # only reachable when both labelings are identical trivial partitions
        return 1.0
    return float((index - expected) / (top - expected))


def ch_index(data, labels, n_clusters: int | None = None) -> float:
    """Calinski-Harabasz index of a sample clustering.

    Parameters
    ----------
    data : array-like or sparse, shape (n_features, n_samples)
        Columns are the samples being clustered.
    labels : array-like of int, shape (n_samples,)
    n_clusters : int, optional
        When given, labels are ids in ``range(n_clusters)`` and every id
        must be used.

    Returns ``inf`` when the within-cluster dispersion is zero.
    """
    labels = np.asarray(labels)
    X = data.T.tocsr() if sp.issparse(data) else np.asarray(data, dtype=float).T
    n = X.shape[0]
    if labels.shape != (n,):
        raise InvalidInputError(f"expected {n} labels, got {labels.shape}")
    if n_clusters is None:
        _, labels = np.unique(labels, return_inverse=True)
        n_clusters = int(labels.max()) + 1
    sizes = np.bincount(labels, minlength=n_clusters)
    if sizes.size > n_clusters or np.any(sizes == 0):
        raise InvalidInputError("every cluster must be nonempty")
    if n_clusters < 2:
        raise InvalidInputError("CH index needs at least two clusters")
    ind = sp.csr_matrix((np.ones(n), (np.arange(n), labels)), shape=(n, n_clusters))
    sums = np.asarray((ind.T @ X).todense() if sp.issparse(X) else ind.T @ X)
    centers = sums / sizes[:, None]
    grand = np.asarray(X.sum(axis=0)).ravel() / n
    between = float(np.sum(sizes * np.sum((centers - grand) ** 2, axis=1)))
    sq = X.multiply(X).sum() if sp.issparse(X) else np.sum(X * X)
    within = float(sq - np.sum(sizes * np.sum(centers ** 2, axis=1)))
    if within <= 1e-12 * max(float(sq), 1e-300):
        return float("inf")
    return between / (n_clusters - 1) / (within / (n - n_clusters))
