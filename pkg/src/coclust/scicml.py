"""Multi-view information-theoretic co-clustering with linked-view matching.

Four views ``(l, v)`` in ``{1,2} x {1,2}`` describe the same samples.  Each
view gets its own feature clustering, all views share one sample clustering,
and the feature clusters of the linked pair (1,1)/(1,2) are aligned by a
permutation ``h``.  The fit minimizes

    sum_{l,v} [I(X_lv; Y) - I(X~_lv; Y~)] + alpha * KL(p~_11[h] || p~_12)

by sweeping feature assignments view by view, then sample assignments, then
re-solving ``h``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ._sweep import UPDATE_RULES, SweepState, ViewData
from .errors import InvalidInputError, SmoothingError
from .itcc import INIT_METHODS, init_cols, init_rows, run_sweeps
from .matching import Permutation, matching_kl, solve_permutation
from .prob import (
    DEFAULT_PSEUDOCOUNT,
    ClusterAssignment,
    JointDistribution,
    aggregate,
    as_assignment,
    loss_mutual_information,
    normalize_to_joint,
    weighted_row_costs,
)

log = logging.getLogger(__name__)

#: view roles in processing order
VIEW_ROLES = ((1, 1), (1, 2), (2, 1), (2, 2))
PERMUTATION_SOLVERS = ("exhaustive", "assignment", "auto")


def role_index(l: int, v: int) -> int:
    try:
        return VIEW_ROLES.index((l, v))
    except ValueError:
        raise InvalidInputError(f"no view with role ({l},{v})") from None


@dataclass
class ScicmlConfig:
    n_clusters: int
    k_features: tuple[int, int, int, int] = (10, 10, 10, 10)
    alpha: float = 1.0
    max_iters: int = 200
    tol: float = 1e-4
    seed: int = 0
    init: str = "kmeans_profiles"
    pseudocount: float = DEFAULT_PSEUDOCOUNT
    permutation_solver: str = "auto"
    restarts: int = 1
    update_rule: str = "exact"

    def __post_init__(self):
        if isinstance(self.k_features, int):
            self.k_features = (self.k_features,) * 4
        self.k_features = tuple(int(k) for k in self.k_features)

    def validate(self, shapes=None):
        if len(self.k_features) != 4:
            raise InvalidInputError("k_features needs one value per view")
        if self.k_features[0] != self.k_features[1]:
            raise InvalidInputError(
                "linked views (1,1) and (1,2) need equal feature-cluster counts, got "
                f"{self.k_features[0]} and {self.k_features[1]}"
            )
        if self.n_clusters < 1 or min(self.k_features) < 1:
            raise InvalidInputError("cluster counts must be positive")
        if not self.alpha >= 0:
            raise InvalidInputError("alpha must be nonnegative")
        if self.max_iters < 1 or self.restarts < 1:
            raise InvalidInputError("max_iters and restarts must be positive")
        if not self.tol >= 0:
            raise InvalidInputError("tol must be nonnegative")
        if self.init not in INIT_METHODS:
            raise InvalidInputError(f"unknown init {self.init!r}")
        if self.permutation_solver not in PERMUTATION_SOLVERS:
            raise InvalidInputError(f"unknown permutation solver {self.permutation_solver!r}")
        if self.update_rule not in UPDATE_RULES:
            raise InvalidInputError(f"unknown update rule {self.update_rule!r}")
        if shapes is not None:
            for (q, n), k, role in zip(shapes, self.k_features, VIEW_ROLES):
                if k > q:
                    raise InvalidInputError(f"view {role}: K={k} exceeds {q} features")
            if self.n_clusters > shapes[0][1]:
                raise InvalidInputError(f"N={self.n_clusters} exceeds {shapes[0][1]} samples")


@dataclass(eq=False)
class MultiViewModel:
    """Complete state of the four-view problem."""

    views: list[JointDistribution]
    cx: list[ClusterAssignment]
    cy: ClusterAssignment
    h: Permutation
    alpha: float = 1.0

    def __post_init__(self):
        if len(self.views) != 4 or len(self.cx) != 4:
            raise InvalidInputError("a model has exactly four views")
        n = self.views[0].shape[1]
        for p, c, role in zip(self.views, self.cx, VIEW_ROLES):
            if p.shape[1] != n:
                raise InvalidInputError(f"view {role} has {p.shape[1]} samples, expected {n}")
            if len(c) != p.shape[0]:
                raise InvalidInputError(f"view {role}: feature assignment length mismatch")
        if len(self.cy) != n:
            raise InvalidInputError("sample assignment length mismatch")
        if self.cx[0].k != self.cx[1].k or len(self.h) != self.cx[0].k:
            raise InvalidInputError("linked views need equal K and a permutation of that size")
        if self.alpha < 0:
            raise InvalidInputError("alpha must be nonnegative")

    def aggregated(self):
        return [aggregate(p, c, self.cy).table for p, c in zip(self.views, self.cx)]


@dataclass
class ScicmlResult:
    cell_labels: ClusterAssignment
    feature_labels: list[ClusterAssignment]
    h: Permutation
    objective_trace: list[float]
    per_term_trace: list[dict]
    iterations: int
    converged: bool
    step_trace: list[tuple[int, str, float]] = field(default_factory=list, repr=False)
    config: ScicmlConfig | None = None
    seed: int = 0

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


def total_objective(model: MultiViewModel) -> float:
    """Sum of the four co-clustering losses plus ``alpha`` times the matching KL."""
    total = sum(loss_mutual_information(p, c, model.cy) for p, c in zip(model.views, model.cx))
    if model.alpha > 0:
        tables = model.aggregated()
        total += model.alpha * matching_kl(tables[0], tables[1], model.h)
    return float(total)


def _moved(labels: ClusterAssignment, item: int, target: int) -> ClusterAssignment:
    out = labels.labels.copy()
    out[item] = target
    return ClusterAssignment(out, labels.k)


def _would_empty(labels: ClusterAssignment, item: int, target: int) -> bool:
    cur = labels.labels[item]
    return target != cur and np.count_nonzero(labels.labels == cur) <= 1


def _with_feature(model: MultiViewModel, idx: int, x: int, i: int) -> MultiViewModel:
    cx = list(model.cx)
    cx[idx] = _moved(cx[idx], x, i)
    return MultiViewModel(model.views, cx, model.cy, model.h, model.alpha)


def _with_sample(model: MultiViewModel, y: int, j: int) -> MultiViewModel:
    return MultiViewModel(model.views, model.cx, _moved(model.cy, y, j), model.h, model.alpha)


def _candidate_matching(model: MultiViewModel) -> float:
    tables = model.aggregated()
    return matching_kl(tables[0], tables[1], model.h)


def feature_update_cost(model: MultiViewModel, l: int, v: int, x: int, i: int,
                        update_rule: str = "exact") -> float:
    """Cost of placing feature ``x`` of view ``(l, v)`` in cluster ``i``.

    All rules return a per-unit-mass cost ``U`` whose differences, times
    ``p(x)``, are what a sweep compares:

    ``exact``
        ``(F(x -> i) - F) / p(x)`` where ``F`` is :func:`total_objective`;
        ``p(x) (U(i) - U(j))`` is then exactly the objective difference.
    ``auxiliary``
        ``KL(p(Y|x) || p*(Y | x~=i)) + alpha * M_i / p(x)``, with ``p*``
        induced by the current assignments and ``M_i`` the matching KL with
        ``x`` moved to ``i`` (``h`` fixed).
    ``scaled``
        as ``auxiliary`` with the matching term divided by ``q p(x)``.

    The matching term only applies to the linked views (``l == 1``).  Moves
    that would empty the current cluster of ``x`` cost ``inf``.
    """
    if update_rule not in UPDATE_RULES:
        raise InvalidInputError(f"unknown update rule {update_rule!r}")
    idx = role_index(l, v)
    p, cx = model.views[idx], model.cx[idx]
    q = p.shape[0]
    if not (0 <= x < q and 0 <= i < cx.k):
        raise InvalidInputError("feature or cluster index out of range")
    if _would_empty(cx, x, i):
        return float("inf")
    px = p.row_marginals[x]
    if px <= 0:
        return 0.0
    if update_rule == "exact":
        moved = _with_feature(model, idx, x, i)
        return float((total_objective(moved) - total_objective(model)) / px)
    ptilde = aggregate(p, cx, model.cy).table
    cost = weighted_row_costs(p, model.cy.labels, model.cy.k, ptilde)[x, i] / px
    if l == 1 and model.alpha > 0:
        m = _candidate_matching(_with_feature(model, idx, x, i))
        denom = q * px if update_rule == "scaled" else px
        cost += model.alpha * m / denom
    return float(cost)


def cell_update_cost(model: MultiViewModel, y: int, j: int,
                     update_rule: str = "exact") -> float:
    """Cost of placing sample ``y`` in cluster ``j``.

    ``exact``: ``F(y -> j) - F``.  ``auxiliary``: the sum over views of
    ``p(y) KL(p(X|y) || p*(X | y~=j))`` plus ``alpha`` times the matching KL
    with ``y`` moved to ``j``.  ``scaled``: as ``auxiliary`` with the matching
    term divided by the number of samples.
    """
    if update_rule not in UPDATE_RULES:
        raise InvalidInputError(f"unknown update rule {update_rule!r}")
    n = model.cy.labels.size
    if not (0 <= y < n and 0 <= j < model.cy.k):
        raise InvalidInputError("sample or cluster index out of range")
    if _would_empty(model.cy, y, j):
        return float("inf")
    if update_rule == "exact":
        return float(total_objective(_with_sample(model, y, j)) - total_objective(model))
    cost = 0.0
    for p, cx in zip(model.views, model.cx):
        ptilde = aggregate(p, cx, model.cy).table
        cost += weighted_row_costs(p.transpose(), cx.labels, cx.k, ptilde.T)[y, j]
    if model.alpha > 0:
        m = _candidate_matching(_with_sample(model, y, j))
        cost += model.alpha * m / (n if update_rule == "scaled" else 1)
    return float(cost)


def prepare_views(views, pseudocount: float = DEFAULT_PSEUDOCOUNT) -> list[JointDistribution]:
    """Normalize four raw matrices (or pass through distributions) in role order."""
    if isinstance(views, dict):
        try:
            views = [views[r] for r in VIEW_ROLES]
        except KeyError as e:
            raise InvalidInputError(f"missing view {e.args[0]}") from None
    views = list(views)
    if len(views) != 4:
        raise InvalidInputError(f"expected four views, got {len(views)}")
    out = [v if isinstance(v, JointDistribution) else normalize_to_joint(v, pseudocount)
           for v in views]
    n = out[0].shape[1]
    for p, role in zip(out, VIEW_ROLES):
        if p.shape[1] != n:
            raise InvalidInputError(f"view {role} has {p.shape[1]} samples, view (1, 1) has {n}")
    return out


def _fit_once(views, data, cfg: ScicmlConfig, seed: int, matching: bool) -> ScicmlResult:
    ks = cfg.k_features
    cx = [init_rows(p, k, cfg.init, seed) for p, k in zip(views, ks)]
    cy = init_cols(views, cfg.n_clusters, cfg.init, seed)
    alpha = cfg.alpha if matching else 0.0
    state = SweepState(data, cx, ks, cy, cfg.n_clusters, alpha=alpha, linked=True,
                       update_rule=cfg.update_rule)
    if matching:
        state.h, _ = solve_permutation(state.ptilde[0], state.ptilde[1], cfg.permutation_solver)
    start = state.objective()[0]
    if not np.isfinite(start):
        raise SmoothingError(
            "objective is infinite at initialization; some aggregated blocks are empty. "
            "Increase the pseudocount (e.g. --pseudocount 1e-8 or larger)."
        )
    solver = cfg.permutation_solver if matching else None
    trace, per_term, steps, iters, conv = run_sweeps(state, cfg.max_iters, cfg.tol, solver)
    terms = [
        {"total": t, "losses": list(ls), "matching_kl": m}
        for t, (ls, m) in zip(trace, per_term)
    ]
    return ScicmlResult(
        cell_labels=ClusterAssignment(state.cy, cfg.n_clusters),
        feature_labels=[ClusterAssignment(c, k) for c, k in zip(state.cx, ks)],
        h=state.h,
        objective_trace=trace,
        per_term_trace=terms,
        iterations=iters,
        converged=conv,
        step_trace=steps,
        config=cfg,
        seed=seed,
    )


def _fit(views, cfg: ScicmlConfig, matching: bool) -> ScicmlResult:
    views = prepare_views(views, cfg.pseudocount)
    cfg.validate([p.shape for p in views])
    data = [ViewData(p) for p in views]
    best = None
    for r in range(cfg.restarts):
        res = _fit_once(views, data, cfg, cfg.seed + r, matching)
        log.info("restart %d (seed %d): objective %.10g after %d iterations",
                 r, res.seed, res.objective, res.iterations)
        if best is None or res.objective < best.objective:
            best = res
    return best


def scicml_fit(views, cfg: ScicmlConfig) -> ScicmlResult:
    """Fit the four-view model.

    Parameters
    ----------
    views : sequence of four matrices or JointDistributions, or a dict keyed by role
        In role order (1,1), (1,2), (2,1), (2,2); raw matrices are normalized
        with ``cfg.pseudocount``.
    cfg : ScicmlConfig
    """
    return _fit(views, cfg, matching=True)


def scicml0_fit(views, cfg: ScicmlConfig) -> ScicmlResult:
    """Ablation without feature-cluster matching (alpha = 0, ``h`` left as identity)."""
    return _fit(views, cfg, matching=False)


def config_dict(cfg: ScicmlConfig) -> dict:
    d = asdict(cfg)
    d["k_features"] = list(cfg.k_features)
    return d


__all__ = [
    "MultiViewModel",
    "ScicmlConfig",
    "ScicmlResult",
    "VIEW_ROLES",
    "as_assignment",
    "cell_update_cost",
    "feature_update_cost",
    "scicml0_fit",
    "scicml_fit",
    "total_objective",
]
