"""Single-view information-theoretic co-clustering.

Alternately reassigns features and samples to the clusters that minimize
their conditional KL divergence to the co-clustering approximation ``p*``,
which never increases the loss ``I(X;Y) - I(X~;Y~)``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from sklearn.cluster import KMeans

from ._sweep import UPDATE_RULES, SweepState, ViewData
from .errors import DegenerateInputError, InvalidInputError
from .prob import ClusterAssignment, JointDistribution, normalize_to_joint

log = logging.getLogger(__name__)

INIT_METHODS = ("round_robin", "kmeans_profiles", "random")


@dataclass
class ItccConfig:
    k_features: int
    n_clusters: int
    max_iters: int = 100
    tol: float = 1e-4
    seed: int = 0
    init: str = "kmeans_profiles"
    update_rule: str = "exact"

    def validate(self, shape=None):
        if self.k_features < 1 or self.n_clusters < 1:
            raise InvalidInputError("cluster counts must be positive")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be positive")
        if not self.tol >= 0:
            raise InvalidInputError("tol must be nonnegative")
        if self.init not in INIT_METHODS:
            raise InvalidInputError(f"unknown init {self.init!r}")
        if self.update_rule not in UPDATE_RULES:
            raise InvalidInputError(f"unknown update rule {self.update_rule!r}")
        if shape is not None:
            q, n = shape
            if self.k_features > q or self.n_clusters > n:
                raise InvalidInputError(
                    f"need K <= q and N <= n, got K={self.k_features}, N={self.n_clusters} "
                    f"for a {q}x{n} table"
                )


@dataclass
class ItccResult:
    cx: ClusterAssignment
    cy: ClusterAssignment
    objective_trace: list[float]
    iterations: int
    converged: bool
    step_trace: list[tuple[int, str, float]] = field(default_factory=list, repr=False)

    @property
    def loss(self) -> float:
        return self.objective_trace[-1]


def round_robin(m: int, k: int) -> np.ndarray:
    """Item ``i`` goes to cluster ``i mod k``."""
    return np.arange(m, dtype=np.int64) % k


def _fill_empty(labels: np.ndarray, k: int) -> np.ndarray:
    # give each empty cluster the highest-index member of the largest cluster
    labels = labels.copy()
    sizes = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(sizes == 0):
        donor = int(np.argmax(sizes))
        x = int(np.flatnonzero(labels == donor)[-1])
        labels[x] = c
        sizes[donor] -= 1
        sizes[c] += 1
    return labels


def _normalized_rows(m) -> sp.csr_matrix:
    m = sp.csr_matrix(m, dtype=float)
    tot = np.asarray(m.sum(axis=1)).ravel()
    inv = np.zeros_like(tot)
    np.divide(1.0, tot, out=inv, where=tot > 0)
    return sp.diags(inv) @ m


def kmeans_labels(profiles, k: int, seed: int) -> np.ndarray:
    """k-means on the rows of ``profiles`` with every cluster kept nonempty."""
    m = profiles.shape[0]
    if k == 1:
        return np.zeros(m, dtype=np.int64)
    if k >= m:
        return np.arange(m, dtype=np.int64) % k
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        km = KMeans(n_clusters=k, n_init=4, random_state=seed).fit(profiles)
    return _fill_empty(km.labels_.astype(np.int64), k)


def random_labels(m: int, k: int, seed, stream: int = 0) -> np.ndarray:
    """Uniform random labels with every cluster kept nonempty."""
    rng = np.random.default_rng([seed, stream, m, k])
    return _fill_empty(rng.integers(0, k, size=m), k) if m >= k else round_robin(m, k)


def init_rows(p: JointDistribution, k: int, method: str, seed: int) -> np.ndarray:
    if method == "round_robin":
        return round_robin(p.shape[0], k)
    if method == "random":
        return random_labels(p.shape[0], k, seed)
    return kmeans_labels(_normalized_rows(p.scaled), k, seed)


def init_cols(views, n_clusters: int, method: str, seed: int) -> np.ndarray:
    """Shared sample initialization from the concatenated profiles ``p(X|y)``."""
    n = views[0].shape[1]
    if method == "round_robin":
        return round_robin(n, n_clusters)
    if method == "random":
        return random_labels(n, n_clusters, seed, stream=1)
    blocks = [_normalized_rows(v.scaled.T) for v in views]
    return kmeans_labels(sp.hstack(blocks, format="csr"), n_clusters, seed)


def init_assignments(p: JointDistribution, cfg: ItccConfig):
    """Initial ``(cx, cy)``; deterministic for a given seed."""
    cfg.validate(p.shape)
    cx = init_rows(p, cfg.k_features, cfg.init, cfg.seed)
    cy = init_cols([p], cfg.n_clusters, cfg.init, cfg.seed)
    return ClusterAssignment(cx, cfg.k_features), ClusterAssignment(cy, cfg.n_clusters)


def _check_support(p: JointDistribution, cfg: ItccConfig):
    s = p.scaled
    rows = int(np.count_nonzero(np.diff(s.indptr)))
    cols = int(np.unique(s.indices).size)
    if rows <= 1 and cfg.k_features > max(rows, 1):
        raise DegenerateInputError(
            f"{rows} nonzero feature row(s) cannot support K={cfg.k_features} clusters"
        )
    if cols <= 1 and cfg.n_clusters > max(cols, 1):
        raise DegenerateInputError(
            f"{cols} nonzero sample column(s) cannot support N={cfg.n_clusters} clusters"
        )


def run_sweeps(state: SweepState, max_iters: int, tol: float, solver=None):
    """Outer iteration loop shared with the multi-view fit.

    Returns ``(trace, per_term, step_trace, iterations, converged)``.
    """
    total, losses, m = state.objective()
    trace, per_term = [total], [(losses, m)]
    step_trace = [(0, "init", total)]
    use_h = state.linked and state.alpha > 0 and solver is not None
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        moves = 0
        for v in range(len(state.views)):
            moves += state.feature_sweep(v)
            state.refresh()
            step_trace.append((it, f"features[{v}]", state.objective()[0]))
        moves += state.cell_sweep()
        state.refresh()
        step_trace.append((it, "samples", state.objective()[0]))
        if use_h:
            moves += int(state.permutation_step(solver))
            step_trace.append((it, "permutation", state.objective()[0]))
        total, losses, m = state.objective()
        trace.append(total)
        per_term.append((losses, m))
        log.debug("iteration %d: objective %.10g, %d moves", it, total, moves)
        if moves == 0 or abs(trace[-2] - total) < tol:
            converged = True
            break
    return trace, per_term, step_trace, it, converged


def itcc_fit(p, cfg: ItccConfig) -> ItccResult:
    """Co-cluster one view into ``cfg.k_features`` x ``cfg.n_clusters`` blocks.

    ``p`` may be a :class:`JointDistribution` or a raw nonnegative matrix,
    which is normalized without smoothing.
    """
    if not isinstance(p, JointDistribution):
        p = normalize_to_joint(p, pseudocount=0.0)
    cfg.validate(p.shape)
    _check_support(p, cfg)
    cx, cy = init_assignments(p, cfg)
    state = SweepState([ViewData(p)], [cx.labels], [cfg.k_features], cy.labels, cfg.n_clusters,
                       update_rule=cfg.update_rule)
    trace, _, steps, iters, conv = run_sweeps(state, cfg.max_iters, cfg.tol)
    return ItccResult(
        cx=ClusterAssignment(state.cx[0], cfg.k_features),
        cy=ClusterAssignment(state.cy, cfg.n_clusters),
        objective_trace=trace,
        iterations=iters,
        converged=conv,
        step_trace=steps,
    )
