"""Alternating coordinate sweeps shared by single-view and multi-view fits.

A sweep walks the features (or samples) in ascending index order and moves
each one to the cluster of lowest score.  The aggregated tables are updated
after every accepted move.  Three scoring rules are available:

``exact``
    the exact change of the objective (the four losses plus ``alpha`` times
    the matching KL), so every move is a strict descent step.
``auxiliary``
    ``p(x) KL(p(Y|x) || p*(Y | cluster))`` under the current tables plus
    ``alpha`` times the matching KL with the item moved.  For fixed ``p*`` a
    move lowers ``A = sum_x p(x) KL(p(Y|x) || p*(Y|C(x))) + alpha * KL_match``
    and recomputing ``p*`` can only lower the loss part further.
``scaled``
    as ``auxiliary`` with the matching KL divided by the number of items
    (features of the view, or samples); moves that would raise ``A`` are
    refused so the objective still never increases.
"""

from __future__ import annotations

import numpy as np
from scipy.special import rel_entr, xlogy

from .errors import InvalidInputError
from .matching import Permutation, matching_kl, solve_permutation
from .prob import (
    ClusterAssignment,
    JointDistribution,
    aggregate,
    mutual_information,
    row_cost_constants,
    row_profiles,
)

UPDATE_RULES = ("exact", "auxiliary", "scaled")
_REL_EPS = 1e-11
_MOVE_EPS = 1e-13


class ViewData:
    """A normalized view plus cached transposes and constants."""

    def __init__(self, p: JointDistribution):
        self.p = p
        self.pT = p.transpose()
        self.q, self.n = p.shape
        self.mi = mutual_information(p)


class SweepState:
    """Mutable assignments of one fit.

    ``linked`` marks views 0 and 1 as the matched pair; ``h`` is then the
    permutation with ``ptilde[0][h]`` compared to ``ptilde[1]``.
    """

    def __init__(self, views, cx, ks, cy, n_clusters, alpha=0.0, linked=False,
                 h=None, update_rule="exact"):
        if update_rule not in UPDATE_RULES:
            raise InvalidInputError(f"unknown update rule {update_rule!r}")
        self.views = views
        self.cx = [np.array(c, dtype=np.int64) for c in cx]
        self.ks = list(ks)
        self.cy = np.array(cy, dtype=np.int64)
        self.n_clusters = n_clusters
        self.alpha = float(alpha)
        self.linked = linked
        self.h = h if h is not None else (Permutation.identity(ks[0]) if linked else None)
        self.update_rule = update_rule
        self.refresh()

    # -- bookkeeping -------------------------------------------------------

    def refresh(self):
        """Recompute every aggregated table exactly from the assignments."""
        self.ptilde = [
            aggregate(v.p, ClusterAssignment(c, k), ClusterAssignment(self.cy, self.n_clusters)).table
            for v, c, k in zip(self.views, self.cx, self.ks)
        ]

    def losses(self) -> list[float]:
        return [max(0.0, v.mi - mutual_information(t)) for v, t in zip(self.views, self.ptilde)]

    def match_kl(self) -> float:
        if not self.linked:
            return 0.0
        return matching_kl(self.ptilde[0], self.ptilde[1], self.h)

    def objective(self):
        """(total, per-view losses, unweighted matching KL)."""
        losses = self.losses()
        m = self.match_kl()
        total = float(sum(losses))
        if self.linked and self.alpha > 0:
            total += self.alpha * m
        return total, losses, m

    def _matching_weight(self, size: int) -> float:
        if self.update_rule == "scaled":
            return self.alpha / size
        return self.alpha

    # -- feature sweep ------------------------------------------------------

    def feature_sweep(self, v: int) -> int:
        view = self.views[v]
        P = self.ptilde[v]
        rprof = row_profiles(view.p, self.cy, self.n_clusters)
        const = row_cost_constants(view.p, self.cy, P.sum(axis=0))
        block = _Block(P, rprof, const, view.p.row_marginals)
        matcher = None
        if self.linked and self.alpha > 0 and v in (0, 1):
            matcher = _RowMatcher(self.ptilde, v, self.h, rprof)
        return self._run(self.cx[v], [block], view.p.row_marginals, matcher,
                         self._matching_weight(view.q))

    # -- sample sweep --------------------------------------------------------

    def cell_sweep(self) -> int:
        blocks, profiles = [], []
        for view, c, k, P in zip(self.views, self.cx, self.ks, self.ptilde):
            cprof = row_profiles(view.pT, c, k)
            const = row_cost_constants(view.pT, c, P.sum(axis=1))
            blocks.append(_Block(P.T, cprof, const, view.p.col_marginals))
            profiles.append(cprof)
        scale = sum(v.p.col_marginals for v in self.views)
        matcher = None
        if self.linked and self.alpha > 0:
            matcher = _ColMatcher(self.ptilde[0], self.ptilde[1], self.h, profiles[0], profiles[1])
        return self._run(self.cy, blocks, scale, matcher, self._matching_weight(self.cy.size))

    def _run(self, labels, blocks, scale, matcher, weight) -> int:
        """Visit items in index order, moving each to its best cluster.

        ``blocks`` hold live (k x m) tables that are updated after every
        accepted move, so later items are scored against the current state.
        With the ``exact`` rule an item's scores are the exact changes of
        the objective; otherwise they are the conditional-KL costs against
        the current ``p*`` plus the weighted matching KL.
        """
        k = blocks[0].P.shape[0]
        sizes = np.bincount(labels, minlength=k)
        exact = self.update_rule == "exact"
        guard = matcher is not None and self.update_rule == "scaled"
        moves = 0
        for x in range(labels.size):
            a = labels[x]
            if sizes[a] <= 1:
                continue
            costs = np.zeros(k)
            for b in blocks:
                costs += b.deltas(x, a) if exact else b.costs(x)
            total = costs
            if matcher is not None:
                cand = matcher.candidates(x, a)
                total = costs + weight * (cand - cand[a] if exact else cand)
            i = int(np.argmin(total))
            if i == a:
                continue
            margin = _MOVE_EPS if exact else _REL_EPS * (scale[x] + abs(total[a]))
            if not total[i] < total[a] - margin:
                continue
            if guard and (costs[i] - costs[a]) + self.alpha * (cand[i] - cand[a]) > 0:
                continue
            for b in blocks:
                b.move(x, a, i)
            if matcher is not None:
                matcher.commit(a, i)
            labels[x] = i
            sizes[a] -= 1
            sizes[i] += 1
            moves += 1
        return moves

    # -- permutation step ----------------------------------------------------

    def permutation_step(self, solver: str) -> bool:
        h, val = solve_permutation(self.ptilde[0], self.ptilde[1], solver)
        cur = self.match_kl()
        if val < cur - _REL_EPS * max(1.0, abs(cur)) or (np.isinf(cur) and np.isfinite(val)):
            self.h = h
            return True
        return False


def _row_info(P):
    s = P.sum(axis=-1)
    return xlogy(P, P).sum(axis=-1) - xlogy(s, s)


def _safe_log(a):
    out = np.zeros_like(a)
    np.log(a, out=out, where=a > 0)
    return out


class _Block:
    """Live aggregated table of one view seen from the items being moved.

    ``P`` is (k x m) with rows indexed by the clusters of the moving items
    (a view into the state's table, so updates are shared).  The cost of
    putting item ``x`` in cluster ``i`` is
    ``const[x] - prof[x] . log P[i] + marg[x] log P[i].sum()``, which equals
    ``p(x) KL(p(.|x) || p*(.|i))`` for the current tables.
    """

    def __init__(self, P, prof, const, marg):
        self.P, self.prof, self.const, self.marg = P, prof, const, marg
        self.logP = _safe_log(P)
        self.logR = _safe_log(P.sum(axis=1))
        self.zero = P <= 0
        self.g = _row_info(P)

    def deltas(self, x, a):
        """Exact change of the co-clustering loss if ``x`` moves from ``a`` to each cluster.

        The loss is ``I(X;Y) - I(P)`` and moving an item changes only two
        rows of ``P`` (its column sums stay fixed), so the change is
        ``-(g(P[i] + r) - g(P[i])) - (g(P[a] - r) - g(P[a]))`` with
        ``g(row) = sum row log row - |row| log |row|``.
        """
        r = self.prof[x]
        gained = _row_info(self.P + r) - self.g
        lost = _row_info(np.maximum(self.P[a] - r, 0.0)[None, :])[0] - self.g[a]
        d = -(gained + lost)
        d[a] = 0.0
        return d

    def costs(self, x):
        r = self.prof[x]
        c = self.const[x] - self.logP @ r + self.marg[x] * self.logR
        if self.zero.any():
            c[(self.zero & (r > 0)).any(axis=1)] = np.inf
        return c

    def move(self, x, a, i):
        r = self.prof[x]
        P = self.P
        P[a] = np.maximum(P[a] - r, 0.0)
        P[i] = P[i] + r
        for c in (a, i):
            self.logP[c] = _safe_log(P[c])
            self.logR[c] = _safe_log(P[c].sum(keepdims=True))[0]
            self.zero[c] = P[c] <= 0
        self.g[[a, i]] = _row_info(P[[a, i]])


class _RowMatcher:
    """Exact matching KL under each candidate move of a linked-view feature."""

    def __init__(self, ptilde, v, h, prof):
        self.P = ptilde[v]
        self.prof = prof
        self.forward = v == 0
        if self.forward:
            self.partner = ptilde[1][h.inverse().map]   # aligned with rows of P
        else:
            self.partner = ptilde[0][h.map]
        self.row_m = self._kl(self.P)

    def _kl(self, rows, idx=slice(None)):
        if self.forward:
            return rel_entr(rows, self.partner[idx]).sum(axis=-1)
        return rel_entr(self.partner[idx], rows).sum(axis=-1)

    def candidates(self, x, a):
        P, r, row_m = self.P, self.prof[x], self.row_m
        m_now = row_m.sum()
        cand = (m_now - row_m + self._kl(P + r) - row_m[a]
                + self._kl(np.maximum(P[a] - r, 0.0), a))
        cand[a] = m_now
        return cand

    def commit(self, a, i):
        self.row_m[a] = self._kl(self.P[a], a)
        self.row_m[i] = self._kl(self.P[i], i)


class _ColMatcher:
    """Exact matching KL under each candidate move of a sample."""

    def __init__(self, P1, P2, h, prof1, prof2):
        self.P1, self.P2, self.hm = P1, P2, h.map
        self.prof1, self.prof2 = prof1, prof2
        self.col_m = self._kl(P1, P2)

    def _kl(self, c1, c2):
        return rel_entr(c1[self.hm], c2).sum(axis=0)

    def candidates(self, y, b):
        P1, P2, col_m = self.P1, self.P2, self.col_m
        c1 = self.prof1[y][:, None]
        c2 = self.prof2[y][:, None]
        m_now = col_m.sum()
        removed = self._kl(np.maximum(P1[:, b:b + 1] - c1, 0.0),
                           np.maximum(P2[:, b:b + 1] - c2, 0.0))[0]
        cand = m_now - col_m + self._kl(P1 + c1, P2 + c2) - col_m[b] + removed
        cand[b] = m_now
        return cand

    def commit(self, b, j):
        self.col_m[[b, j]] = self._kl(self.P1[:, [b, j]], self.P2[:, [b, j]])
