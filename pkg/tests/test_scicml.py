import itertools

import numpy as np
import pytest

from coclust.errors import InvalidInputError, SmoothingError
from coclust.itcc import ItccConfig, itcc_fit
from coclust.matching import Permutation, matching_kl, solve_permutation
from coclust.metrics import ari
from coclust.prob import ClusterAssignment, normalize_to_joint
from coclust.scicml import (
    MultiViewModel,
    ScicmlConfig,
    cell_update_cost,
    feature_update_cost,
    scicml0_fit,
    scicml_fit,
    total_objective,
)
from coclust.synth import SynthSpec, generate, permutation_in_truth_frame

from . import oracles

ROLES = ((1, 1), (1, 2), (2, 1), (2, 2))


def random_views(rng, n=None, qmax=12, rate=1.0, pseudocount=1e-6):
    n = n or int(rng.integers(6, 14))
    qs = rng.integers(4, qmax + 1, size=4)
    return [normalize_to_joint(rng.poisson(rate, size=(q, n)).astype(float), pseudocount)
            for q in qs]


def random_model(rng, alpha=1.0, k=3, n_clusters=3):
    views = random_views(rng)
    n = views[0].shape[1]
    cx = [ClusterAssignment(np.arange(p.shape[0]) % k, k) for p in views]
    cx = [ClusterAssignment(rng.permutation(c.labels), k) for c in cx]
    cy = ClusterAssignment(rng.permutation(np.arange(n) % n_clusters), n_clusters)
    h = Permutation(rng.permutation(k))
    return MultiViewModel(views, cx, cy, h, alpha)


def oracle_objective(model):
    total = 0.0
    for p, c in zip(model.views, model.cx):
        t = p.table
        total += oracles.dense_kl(t, oracles.q_table(t, c.labels, model.cy.labels, c.k,
                                                     model.cy.k))
    t11 = oracles.block_sums(model.views[0].table, model.cx[0].labels, model.cy.labels,
                             model.cx[0].k, model.cy.k)
    t12 = oracles.block_sums(model.views[1].table, model.cx[1].labels, model.cy.labels,
                             model.cx[1].k, model.cy.k)
    return total + model.alpha * oracles.matching_kl_loop(t11, t12, model.h.map)


def moved(model, role=None, item=0, target=0):
    cx = list(model.cx)
    cy = model.cy
    if role is None:
        lab = cy.labels.copy()
        lab[item] = target
        cy = ClusterAssignment(lab, cy.k)
    else:
        i = ROLES.index(role)
        lab = cx[i].labels.copy()
        lab[item] = target
        cx[i] = ClusterAssignment(lab, cx[i].k)
    return MultiViewModel(model.views, cx, cy, model.h, model.alpha)


# ----------------------------------------------------------------- objective


def test_objective_zero_for_identity_clusterings():
    rng = np.random.default_rng(0)
    views = random_views(rng, n=5, qmax=5)
    cx = [ClusterAssignment(np.arange(p.shape[0]), p.shape[0]) for p in views]
    cy = ClusterAssignment(np.arange(5), 5)
    # linked views need equal K; give (1,2) the size of (1,1)
    views[1] = normalize_to_joint(rng.random((views[0].shape[0], 5)))
    cx[1] = ClusterAssignment(np.arange(views[0].shape[0]), views[0].shape[0])
    model = MultiViewModel(views, cx, cy, Permutation.identity(cx[0].k), alpha=0.0)
    assert total_objective(model) == pytest.approx(0.0, abs=1e-13)


def test_identical_linked_views_have_zero_matching_term():
    rng = np.random.default_rng(1)
    m = random_model(rng, alpha=3.0)
    views = list(m.views)
    views[1] = views[0]
    cx = list(m.cx)
    cx[1] = cx[0]
    m2 = MultiViewModel(views, cx, m.cy, Permutation.identity(3), 3.0)
    m0 = MultiViewModel(views, cx, m.cy, Permutation.identity(3), 0.0)
    assert total_objective(m2) == pytest.approx(total_objective(m0), abs=1e-14)


@pytest.mark.parametrize("alpha", [0.0, 0.5, 2.0])
def test_objective_matches_oracle(alpha):
    rng = np.random.default_rng(2)
    for _ in range(5):
        m = random_model(rng, alpha=alpha)
        assert total_objective(m) == pytest.approx(oracle_objective(m), rel=1e-11)


def test_model_invariants():
    rng = np.random.default_rng(3)
    m = random_model(rng)
    with pytest.raises(InvalidInputError):
        MultiViewModel(m.views, m.cx, m.cy, Permutation.identity(2), 1.0)
    with pytest.raises(InvalidInputError):
        MultiViewModel(m.views, m.cx, m.cy, m.h, -1.0)
    bad = list(m.cx)
    bad[1] = ClusterAssignment(np.arange(m.views[1].shape[0]) % 2, 2)
    with pytest.raises(InvalidInputError):
        MultiViewModel(m.views, bad, m.cy, m.h, 1.0)


# ----------------------------------------------------------------- update costs


def conditional_kl(model, role, x, i):
    """KL(p(Y|x) || p*(Y | x~=i)) from dense loops."""
    idx = ROLES.index(role)
    t = model.views[idx].table
    cx, cy = model.cx[idx], model.cy
    agg = oracles.block_sums(t, cx.labels, cy.labels, cx.k, cy.k)
    py = t.sum(axis=0)
    ry = agg.sum(axis=0)
    qy = agg[i, cy.labels] / agg[i].sum() * py / ry[cy.labels]
    return oracles.dense_kl(t[x] / t[x].sum(), qy)


@pytest.mark.parametrize("rule", ["auxiliary", "scaled"])
def test_unlinked_feature_cost_is_conditional_kl(rule):
    rng = np.random.default_rng(4)
    m = random_model(rng, alpha=5.0)
    for x, i in itertools.product(range(3), range(3)):
        cost = feature_update_cost(m, 2, 1, x, i, rule)
        if np.isinf(cost):
            continue
        assert cost == pytest.approx(conditional_kl(m, (2, 1), x, i), rel=1e-10)


def test_linked_feature_cost_adds_scaled_matching():
    rng = np.random.default_rng(5)
    m = random_model(rng, alpha=2.0)
    q = m.views[0].shape[0]
    px = m.views[0].table.sum(axis=1)
    for x, i in itertools.product(range(q), range(3)):
        mm = moved(m, (1, 1), x, i)
        if np.count_nonzero(m.cx[0].labels == m.cx[0].labels[x]) == 1 and m.cx[0].labels[x] != i:
            assert feature_update_cost(m, 1, 1, x, i, "scaled") == np.inf
            continue
        t11 = mm.aggregated()
        match = oracles.matching_kl_loop(t11[0], t11[1], m.h.map)
        base = conditional_kl(m, (1, 1), x, i)
        assert feature_update_cost(m, 1, 1, x, i, "scaled") == pytest.approx(
            base + 2.0 * match / (q * px[x]), rel=1e-10)
        assert feature_update_cost(m, 1, 1, x, i, "auxiliary") == pytest.approx(
            base + 2.0 * match / px[x], rel=1e-10)


def test_alpha_zero_feature_cost_is_single_view_cost():
    rng = np.random.default_rng(6)
    m = random_model(rng, alpha=0.0)
    for x, i in itertools.product(range(3), range(3)):
        c = feature_update_cost(m, 1, 2, x, i, "scaled")
        if np.isfinite(c):
            assert c == pytest.approx(conditional_kl(m, (1, 2), x, i), rel=1e-10)


@pytest.mark.parametrize("role", ROLES)
def test_exact_feature_cost_differences_are_objective_deltas(role):
    rng = np.random.default_rng(7)
    m = random_model(rng, alpha=1.5)
    idx = ROLES.index(role)
    p = m.views[idx].table
    base = oracle_objective(m)
    for x in range(p.shape[0]):
        px = p[x].sum()
        a = m.cx[idx].labels[x]
        for i in range(3):
            u = feature_update_cost(m, role[0], role[1], x, i)
            if np.isinf(u):
                continue
            delta = oracle_objective(moved(m, role, x, i)) - base
            assert px * (u - feature_update_cost(m, role[0], role[1], x, a)) == pytest.approx(
                delta, abs=1e-12)


def test_exact_cell_cost_differences_are_objective_deltas():
    rng = np.random.default_rng(8)
    m = random_model(rng, alpha=0.7)
    base = oracle_objective(m)
    for y, j in itertools.product(range(m.cy.labels.size), range(3)):
        w = cell_update_cost(m, y, j)
        if np.isinf(w):
            continue
        assert w == pytest.approx(oracle_objective(moved(m, None, y, j)) - base, abs=1e-12)


def test_auxiliary_cell_cost_formula():
    rng = np.random.default_rng(9)
    m = random_model(rng, alpha=0.0)
    for y, j in itertools.product(range(4), range(3)):
        w = cell_update_cost(m, y, j, "scaled")
        if np.isinf(w):
            continue
        ref = 0.0
        for p, c in zip(m.views, m.cx):
            t = p.table.T
            agg = oracles.block_sums(t, m.cy.labels, c.labels, m.cy.k, c.k)
            px = t.sum(axis=0)
            rx = agg.sum(axis=0)
            qx = agg[j, c.labels] / agg[j].sum() * px / rx[c.labels]
            ref += t[y].sum() * oracles.dense_kl(t[y] / t[y].sum(), qx)
        assert w == pytest.approx(ref, rel=1e-10)


def test_emptying_moves_cost_infinity():
    rng = np.random.default_rng(10)
    m = random_model(rng)
    lab = m.cx[2].labels.copy()
    lab[:] = 1
    lab[0] = 0
    cx = list(m.cx)
    cx[2] = ClusterAssignment(lab, 3)
    m2 = MultiViewModel(m.views, cx, m.cy, m.h, m.alpha)
    assert feature_update_cost(m2, 2, 1, 0, 1) == np.inf
    with pytest.raises(InvalidInputError):
        feature_update_cost(m2, 3, 1, 0, 1)


# ----------------------------------------------------------------- permutation


def test_permutation_conjugation_invariance():
    rng = np.random.default_rng(11)
    for _ in range(20):
        k = int(rng.integers(2, 7))
        t1 = rng.random((k, 3))
        t2 = rng.random((k, 3))
        t1, t2 = t1 / t1.sum(), t2 / t2.sum()
        h, kl = solve_permutation(t1, t2)
        s = rng.permutation(k)
        h2, kl2 = solve_permutation(t1[s], t2[s])
        assert kl2 == pytest.approx(kl, abs=1e-13)
        # conjugated optimum: row s[k] of t2 is paired with row h[s[k]] of t1
        inv = np.argsort(s)
        conj = inv[h.map[s]]
        assert matching_kl(t1[s], t2[s], conj) == pytest.approx(kl, abs=1e-13)


# ----------------------------------------------------------------- fitting


def test_identical_block_views_recover_planted_cells():
    rng = np.random.default_rng(12)
    truth = np.repeat([0, 1, 2], 10)
    rng.shuffle(truth)
    feat = np.repeat([0, 1, 2], 6)
    D = (feat[:, None] == truth[None, :]).astype(float) * 5 + rng.random((18, 30)) * 0.1
    res = scicml_fit([D] * 4, ScicmlConfig(n_clusters=3, k_features=3))
    assert ari(truth, res.cell_labels.labels) == 1.0
    assert res.h == Permutation.identity(3)


def test_hidden_permutation_recovered():
    spec = SynthSpec(n=120, q=(80, 80, 80, 80), n_clusters=3, k_features=(3, 3, 3, 3),
                     hidden_permutation=(2, 0, 1), signal=2.0, noise=0.1, seed=3)
    mats, truth = generate(spec)
    res = scicml_fit(mats, ScicmlConfig(n_clusters=3, k_features=3, seed=3))
    h = permutation_in_truth_frame(res.h, res.feature_labels[0].labels,
                                   res.feature_labels[1].labels,
                                   truth.feature_labels[0], truth.feature_labels[1])
    assert h == truth.hidden_permutation
    assert ari(truth.cell_labels, res.cell_labels.labels) == 1.0


def test_alpha_zero_equals_ablation():
    rng = np.random.default_rng(13)
    mats = [rng.poisson(0.5, size=(q, 40)) for q in (15, 12, 20, 9)]
    cfg = ScicmlConfig(n_clusters=3, k_features=(3, 3, 4, 2), alpha=0.0, seed=1)
    a = scicml_fit(mats, cfg)
    b = scicml0_fit(mats, ScicmlConfig(n_clusters=3, k_features=(3, 3, 4, 2), alpha=5.0, seed=1))
    assert a.objective_trace == b.objective_trace
    np.testing.assert_array_equal(a.cell_labels.labels, b.cell_labels.labels)
    assert b.h == Permutation.identity(3)


def test_single_informative_view_matches_itcc():
    rng = np.random.default_rng(14)
    D = rng.poisson(1.0, size=(25, 40)).astype(float)
    D[:12, :20] += rng.poisson(2.0, size=(12, 20))
    zeros = np.zeros((10, 40))
    pc = 1e-6
    res = scicml0_fit([D, zeros, zeros, zeros],
                      ScicmlConfig(n_clusters=2, k_features=(3, 3, 2, 2), pseudocount=pc, seed=4))
    ref = itcc_fit(normalize_to_joint(D, pc), ItccConfig(3, 2, seed=4))
    np.testing.assert_array_equal(res.cell_labels.labels, ref.cy.labels)


@pytest.mark.parametrize("rule", ["exact", "auxiliary", "scaled"])
def test_steps_never_increase_objective(rule):
    rng = np.random.default_rng(15)
    for trial in range(8):
        n = int(rng.integers(8, 40))
        mats = [rng.poisson(rng.uniform(0.2, 1.5), size=(int(rng.integers(4, 30)), n))
                for _ in range(4)]
        k = int(rng.integers(1, 5))
        cfg = ScicmlConfig(n_clusters=int(rng.integers(1, 5)),
                           k_features=(k, k, int(rng.integers(1, 5)), int(rng.integers(1, 5))),
                           alpha=float(rng.choice([0.0, 0.5, 1.0, 5.0])), tol=0.0,
                           seed=trial, update_rule=rule)
        res = scicml_fit(mats, cfg)
        steps = np.array([s[2] for s in res.step_trace])
        assert np.all(np.diff(steps) <= 1e-9)
        assert res.converged
        assert len(res.per_term_trace) == len(res.objective_trace) == res.iterations + 1


def test_exact_fit_ends_at_single_move_local_minimum():
    rng = np.random.default_rng(16)
    mats = [rng.poisson(0.8, size=(q, 14)) for q in (8, 7, 9, 6)]
    cfg = ScicmlConfig(n_clusters=3, k_features=(2, 2, 3, 2), alpha=1.0, tol=0.0, seed=2)
    res = scicml_fit(mats, cfg)
    views = [normalize_to_joint(m, cfg.pseudocount) for m in mats]
    model = MultiViewModel(views, res.feature_labels, res.cell_labels, res.h, 1.0)
    assert total_objective(model) == pytest.approx(res.objective, abs=1e-12)
    for idx, (l, v) in enumerate(ROLES):
        for x in range(views[idx].shape[0]):
            for i in range(res.feature_labels[idx].k):
                assert feature_update_cost(model, l, v, x, i) * views[idx].row_marginals[x] \
                    >= -1e-10
    for y in range(14):
        for j in range(3):
            assert cell_update_cost(model, y, j) >= -1e-10
    # and h is optimal for the final tables
    t = model.aggregated()
    assert matching_kl(t[0], t[1], res.h) == pytest.approx(solve_permutation(t[0], t[1])[1],
                                                           abs=1e-12)


def test_restarts_keep_best():
    rng = np.random.default_rng(17)
    mats = [rng.poisson(0.6, size=(q, 30)) for q in (12, 12, 10, 8)]
    single = [scicml_fit(mats, ScicmlConfig(n_clusters=3, k_features=3, seed=s,
                                            init="random")).objective for s in range(3)]
    best = scicml_fit(mats, ScicmlConfig(n_clusters=3, k_features=3, seed=0, restarts=3,
                                         init="random"))
    assert best.objective == pytest.approx(min(single), abs=1e-14)


def test_deterministic():
    rng = np.random.default_rng(18)
    mats = [rng.poisson(0.6, size=(q, 30)) for q in (12, 12, 10, 8)]
    cfg = ScicmlConfig(n_clusters=3, k_features=3, seed=9)
    a, b = scicml_fit(mats, cfg), scicml_fit(mats, cfg)
    assert a.objective_trace == b.objective_trace
    np.testing.assert_array_equal(a.cell_labels.labels, b.cell_labels.labels)


def test_errors():
    rng = np.random.default_rng(19)
    mats = [rng.poisson(0.6, size=(q, 30)) for q in (12, 12, 10, 8)]
    with pytest.raises(InvalidInputError):
        scicml_fit(mats, ScicmlConfig(n_clusters=3, k_features=(3, 4, 3, 3)))
    with pytest.raises(InvalidInputError):
        scicml_fit(mats[:3] + [np.ones((4, 29))], ScicmlConfig(n_clusters=3, k_features=3))
    with pytest.raises(InvalidInputError):
        scicml_fit(mats, ScicmlConfig(n_clusters=3, k_features=3, update_rule="greedy"))
    # without smoothing, view (1,2) has no mass in the second sample cluster
    linked = np.kron(np.eye(2), np.ones((3, 3)))
    other = np.zeros((6, 6))
    other[:, 0] = 1.0
    with pytest.raises(SmoothingError):
        scicml_fit([linked, other, linked, linked],
                   ScicmlConfig(n_clusters=2, k_features=2, pseudocount=0.0, init="round_robin"))
