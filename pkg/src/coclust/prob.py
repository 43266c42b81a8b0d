"""Probability-table primitives for information-theoretic co-clustering.

A :class:`JointDistribution` keeps the nonzero part of ``D / S`` as a CSR
matrix plus a scalar ``background`` (``pseudocount / S``) that is added to
every cell.  Single-cell count matrices are overwhelmingly zero, so all
sums below visit only stored entries and add the background contribution in
closed form.

All logarithms are natural; results are in nats.  Cluster labels are
0-based integer arrays internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import rel_entr, xlogy

from .errors import InvalidInputError, NormalizationError

#: default additive smoothing per cell applied by :func:`normalize_to_joint`
DEFAULT_PSEUDOCOUNT = 1e-8


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Normalized q x n table ``p(X, Y)`` with cached marginals.

    ``table[x, y] == scaled[x, y] + background``.
    """

    scaled: sp.csr_matrix
    background: float = 0.0
    row_marginals: np.ndarray = field(init=False, repr=False)
    col_marginals: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        q, n = self.scaled.shape
        rows = np.asarray(self.scaled.sum(axis=1)).ravel() + self.background * n
        cols = np.asarray(self.scaled.sum(axis=0)).ravel() + self.background * q
        object.__setattr__(self, "row_marginals", rows)
        object.__setattr__(self, "col_marginals", cols)

    @classmethod
    def from_table(cls, table, atol: float = 1e-12) -> "JointDistribution":
        """Wrap an already-normalized probability table."""
        table = _check_nonnegative(table)
        total = table.sum()
        if abs(total - 1.0) > atol:
            raise InvalidInputError(f"table sums to {total!r}, expected 1")
        return cls(_to_csr(table), 0.0)

    @property
    def shape(self) -> tuple[int, int]:
        return self.scaled.shape

    @property
    def table(self) -> np.ndarray:
        """Dense copy of the probability table."""
        return self.scaled.toarray() + self.background

    def transpose(self) -> "JointDistribution":
        """The same distribution with the roles of X and Y swapped."""
        return JointDistribution(self.scaled.T.tocsr(), self.background)

    def row_entropy_terms(self) -> np.ndarray:
        """Per-row ``sum_y p(x, y) log p(x, y)``."""
        s, b = self.scaled, self.background
        per_row = np.diff(s.indptr)
        vals = s.data + b
        rows = np.repeat(np.arange(s.shape[0]), per_row)
        out = np.bincount(rows, weights=xlogy(vals, vals), minlength=s.shape[0]).astype(float)
        if b > 0:
            out += (s.shape[1] - per_row) * b * np.log(b)
        return out


@dataclass(frozen=True, eq=False)
class AggregatedDistribution:
    """Cluster-level K x N table ``p~(X~, Y~)`` with its marginals."""

    table: np.ndarray
    row_marginals: np.ndarray = field(init=False, repr=False)
    col_marginals: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "row_marginals", self.table.sum(axis=1))
        object.__setattr__(self, "col_marginals", self.table.sum(axis=0))

    @property
    def shape(self) -> tuple[int, int]:
        return self.table.shape


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    """Hard assignment of ``m`` items to ``k`` clusters (labels ``0..k-1``)."""

    labels: np.ndarray
    k: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            raise InvalidInputError("labels must be one-dimensional")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise InvalidInputError("labels must be integers")
        labels = labels.astype(np.int64)
        if self.k < 1:
            raise InvalidInputError("k must be positive")
        if labels.size and (labels.min() < 0 or labels.max() >= self.k):
            raise InvalidInputError(f"labels must lie in [0, {self.k})")
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.labels.size

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def indicator(self) -> sp.csr_matrix:
        """Sparse m x k membership matrix."""
        m = self.labels.size
        return sp.csr_matrix(
            (np.ones(m), (np.arange(m), self.labels)), shape=(m, self.k)
        )


def as_assignment(labels, k: int | None = None) -> ClusterAssignment:
    if isinstance(labels, ClusterAssignment):
        return labels
    labels = np.asarray(labels, dtype=np.int64)
    if k is None:
        k = int(labels.max()) + 1 if labels.size else 1
    return ClusterAssignment(labels, k)


def _check_nonnegative(D):
    if sp.issparse(D):
        data = D.data
    else:
        D = np.asarray(D, dtype=float)
        data = D
    if not np.all(np.isfinite(data)):
        raise InvalidInputError("matrix contains non-finite entries")
    if np.any(data < 0):
        raise InvalidInputError("matrix contains negative entries")
    return D


def _to_csr(D) -> sp.csr_matrix:
    m = sp.csr_matrix(D, dtype=float, copy=True)
    m.eliminate_zeros()
    m.sort_indices()
    return m


def _as_joint(p) -> JointDistribution:
    if isinstance(p, JointDistribution):
        return p
    if isinstance(p, AggregatedDistribution):
        return JointDistribution.from_table(p.table, atol=1e-10)
    return JointDistribution.from_table(p, atol=1e-10)


def _dense(p) -> np.ndarray:
    if isinstance(p, (JointDistribution, AggregatedDistribution)):
        return p.table
    return np.asarray(p, dtype=float)


def normalize_to_joint(D, pseudocount: float = DEFAULT_PSEUDOCOUNT) -> JointDistribution:
    """Scale a nonnegative matrix (plus per-cell smoothing) to total mass 1.

    Parameters
    ----------
    D : array-like or scipy sparse matrix, shape (q, n)
    pseudocount : float
        Added to every cell before normalization.
    """
    if pseudocount < 0 or not np.isfinite(pseudocount):
        raise InvalidInputError("pseudocount must be a finite nonnegative number")
    D = _check_nonnegative(D)
    if D.ndim != 2:
        raise InvalidInputError("expected a 2-D matrix")
    q, n = D.shape
    if q == 0 or n == 0:
        raise NormalizationError("matrix is empty")
    csr = _to_csr(D)
    total = csr.sum() + pseudocount * q * n
    if not total > 0:
        raise NormalizationError("matrix has no positive mass and pseudocount is 0")
    csr.data /= total
    return JointDistribution(csr, pseudocount / total)


def mutual_information(p) -> float:
    """I(X; Y) in nats of a joint (or aggregated) probability table."""
    if isinstance(p, AggregatedDistribution) or not isinstance(p, JointDistribution):
        t = _dense(p)
        px, py = t.sum(axis=1), t.sum(axis=0)
        return max(0.0, float(rel_entr(t, np.outer(px, py)).sum()))
    hxy = p.row_entropy_terms().sum()
    hx = xlogy(p.row_marginals, p.row_marginals).sum()
    hy = xlogy(p.col_marginals, p.col_marginals).sum()
    return max(0.0, float(hxy - hx - hy))


def kl_divergence(p, q) -> float:
    """KL(p || q) in nats; ``inf`` when p puts mass where q has none."""
    p, q = _dense(p), _dense(q)
    if p.shape != q.shape:
        raise InvalidInputError(f"shape mismatch: {p.shape} vs {q.shape}")
    return float(rel_entr(p, q).sum())


def aggregate(p, cx, cy) -> AggregatedDistribution:
    """Block sums of ``p`` under a feature and a sample clustering."""
    p = _as_joint(p)
    cx, cy = as_assignment(cx), as_assignment(cy)
    q, n = p.shape
    if len(cx) != q or len(cy) != n:
        raise InvalidInputError(
            f"assignment lengths ({len(cx)}, {len(cy)}) do not match table {p.shape}"
        )
    block = (cx.indicator().T @ p.scaled @ cy.indicator()).toarray()
    if p.background:
        block += p.background * np.outer(cx.sizes(), cy.sizes())
    return AggregatedDistribution(block)


def _safe_ratio(num, den):
    out = np.zeros_like(num, dtype=float)
    np.divide(num, den, out=out, where=den > 0)
    return out


def q_distribution(p, cx, cy) -> np.ndarray:
    """Dense q x n table of the co-clustering approximation ``p*``.

    ``p*(x, y) = p~(cx(x), cy(y)) * p(x) / p~(cx(x)) * p(y) / p~(cy(y))``;
    a ratio whose denominator is a zero-mass cluster is taken as 0.
    """
    p = _as_joint(p)
    cx, cy = as_assignment(cx), as_assignment(cy)
    agg = aggregate(p, cx, cy)
    fx = _safe_ratio(p.row_marginals, agg.row_marginals[cx.labels])
    fy = _safe_ratio(p.col_marginals, agg.col_marginals[cy.labels])
    return agg.table[np.ix_(cx.labels, cy.labels)] * fx[:, None] * fy[None, :]


def loss_mutual_information(p, cx, cy) -> float:
    """Information lost by co-clustering: ``I(X;Y) - I(X~;Y~)`` (>= 0)."""
    p = _as_joint(p)
    return max(0.0, mutual_information(p) - mutual_information(aggregate(p, cx, cy)))


def weighted_row_costs(p: JointDistribution, col_labels, n_col_clusters: int,
                       ptilde: np.ndarray, row_agg: np.ndarray | None = None) -> np.ndarray:
    """Matrix ``C[x, i] = p(x) * KL(p(Y|x) || p*(Y | x~=i))``.

    ``p*`` is the approximation induced by the aggregated table ``ptilde``
    (K x N) and the column clustering ``col_labels``; it does not depend on
    the current cluster of ``x``.  Entries are ``inf`` where ``x`` has mass in
    a block that ``ptilde`` leaves empty.
    """
    col_labels = np.asarray(col_labels)
    if row_agg is None:
        row_agg = row_profiles(p, col_labels, n_col_clusters)
    pt_rows = ptilde.sum(axis=1)
    const = row_cost_constants(p, col_labels, ptilde.sum(axis=0))

    log_pt = np.zeros_like(ptilde)
    np.log(ptilde, out=log_pt, where=ptilde > 0)
    log_rows = np.zeros_like(pt_rows)
    np.log(pt_rows, out=log_rows, where=pt_rows > 0)
    cross = row_agg @ log_pt.T - np.outer(p.row_marginals, log_rows)
    costs = const[:, None] - cross
    blocked = (row_agg > 0).astype(float) @ (ptilde <= 0).T.astype(float)
    costs[blocked > 0] = np.inf
    return costs


def row_cost_constants(p: JointDistribution, col_labels, pt_cols) -> np.ndarray:
    """The part of ``C[x, i]`` that does not depend on ``i``.

    ``sum_y p(x,y) [log p(x,y) - log p(y) + log p~(y~)] - p(x) log p(x)``,
    where ``pt_cols`` holds the column-cluster masses ``p~(y~)``.
    """
    col_labels = np.asarray(col_labels)
    py = p.col_marginals
    w = np.zeros(p.shape[1])
    ok = py > 0
    w[ok] = np.log(pt_cols[col_labels[ok]]) - np.log(py[ok])
    const = p.row_entropy_terms() + p.scaled @ w + p.background * w.sum()
    return const - xlogy(p.row_marginals, p.row_marginals)


def row_profiles(p: JointDistribution, col_labels, n_col_clusters: int) -> np.ndarray:
    """Dense q x N matrix ``p(x, y~)``: each row summed within column clusters."""
    cy = as_assignment(col_labels, n_col_clusters)
    agg = np.asarray((p.scaled @ cy.indicator()).todense())
    if p.background:
        agg = agg + p.background * cy.sizes()[None, :]
    return agg


def row_decomposed_loss(p, cx, cy) -> np.ndarray:
    """Per-feature share ``p(x) KL(p(Y|x) || p*(Y|x~, x))`` of the co-clustering loss."""
    p = _as_joint(p)
    cx, cy = as_assignment(cx), as_assignment(cy)
    agg = aggregate(p, cx, cy)
    costs = weighted_row_costs(p, cy.labels, cy.k, agg.table)
    return costs[np.arange(len(cx)), cx.labels]


def col_decomposed_loss(p, cx, cy) -> np.ndarray:
    """Per-sample share ``p(y) KL(p(X|y) || p*(X|y~, y))`` of the co-clustering loss."""
    p = _as_joint(p)
    return row_decomposed_loss(p.transpose(), cy, cx)
