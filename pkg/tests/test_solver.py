import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctxsep.closedform import BlockDesign, least_squares_theta, ls_sources, reconstruct_sources
from ctxsep.core import FeatureBlock, SourceModelSpec, build_problem, objective_value
from ctxsep.energy import AlignedSeries, build_energy_problem
from ctxsep.solver import (
    SolverConfig,
    canonicalize,
    project_nonneg,
    project_sum_nonneg,
    prox_l1,
    separate,
    solve,
)
from oracles import cvx_separate

TIGHT = SolverConfig(eps_abs=1e-10, eps_rel=1e-10, max_iter=20000)


# ---------------------------------------------------------------- atoms

def test_prox_l1_example():
    assert np.array_equal(prox_l1([3.0, -0.5], 1.0), [2.0, 0.0])


def test_prox_l1_small_t_is_identity():
    v = np.array([0.3, -2.0, 5.0])
    assert np.allclose(prox_l1(v, 1e-14), v, atol=1e-13)


@given(st.floats(-5, 5), st.floats(0.01, 3))
def test_prox_l1_grid_oracle(v, t):
    grid = np.linspace(-6, 6, 240001)
    z_grid = grid[np.argmin(t * np.abs(grid) + 0.5 * (grid - v) ** 2)]
    assert abs(prox_l1([v], t)[0] - z_grid) <= 1e-4


def test_project_nonneg():
    assert np.array_equal(project_nonneg([-1.0, 2.0]), [0.0, 2.0])
    v = np.array([0.0, 1.5, 3.0])
    assert np.array_equal(project_nonneg(v), v)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20))
def test_project_nonneg_idempotent(v):
    p = project_nonneg(v)
    assert np.array_equal(project_nonneg(p), p)


def test_project_sum_nonneg_against_qp_oracle(rng):
    import cvxpy as cp

    for _ in range(10):
        k = int(rng.integers(2, 5))
        nonneg = rng.random(k) < 0.6
        nonneg[0] = True
        Y = rng.normal(size=(6, k)) * 2
        ybar = np.abs(rng.normal(size=6))
        Z = project_sum_nonneg(Y, ybar, nonneg)
        for t in range(6):
            z = cp.Variable(k)
            cons = [cp.sum(z) == ybar[t]] + [z[i] >= 0 for i in range(k) if nonneg[i]]
            cp.Problem(cp.Minimize(cp.sum_squares(z - Y[t])), cons).solve(solver=cp.CLARABEL)
            assert np.allclose(Z[t], z.value, atol=1e-7)
        assert np.allclose(Z.sum(axis=1), ybar, atol=1e-12)
        assert Z[:, nonneg].min() >= 0


# ---------------------------------------------------------- canonical form

def _blk(name, r, T, n):
    return FeatureBlock(name, r.normal(size=(T, n)))


def test_canonical_pure_l2_has_no_splits(rng):
    p = build_problem(rng.normal(size=30), [(_blk("a", rng, 30, 3), None), (_blk("b", rng, 30, 2), None)])
    c = canonicalize(p)
    assert c.n_splits == 0
    assert c.dim == 30 * 2 + 5
    assert c.C.shape == (30, c.dim)


def test_canonical_single_l1_source():
    p = build_problem(np.ones(5), [(FeatureBlock.empty("a", 5), SourceModelSpec("l1"))])
    assert canonicalize(p).n_splits == 1


def test_canonical_energy_model():
    T = 48
    ts = np.datetime64("2020-07-01T00:00") + np.arange(T) * np.timedelta64(1, "h")
    temp = 60 + 30 * np.sin(np.arange(T) / 4)
    aligned = AlignedSeries(ts, np.ones(T), temp, {})
    c = canonicalize(build_energy_problem(aligned))
    kinds = [t.kind for t in c.terms]
    assert kinds.count("l1") == 7
    assert kinds.count("nonneg") == 4
    assert c.dim == 4 * T + 24 + 6 + 6


# ---------------------------------------------------------------- solve

def test_zero_weights_single_source_returns_aggregate():
    ybar = np.array([1.0, -2.0, 3.0])
    spec = SourceModelSpec("sq_l2", loss_weight=0.0)
    p = build_problem(ybar, [(FeatureBlock("a", np.ones((3, 2))), spec)])
    res = separate(p)
    assert np.allclose(res.Y_hat[:, 0], ybar, atol=1e-12)
    # minimum-norm: nothing pulls theta away from zero
    assert np.allclose(res.theta_hat[0], 0.0, atol=1e-9)


def test_single_l1_nonneg_source_is_the_aggregate():
    ybar = np.array([0.5, 2.0, 0.0, 1.0])
    p = build_problem(ybar, [(FeatureBlock("a", np.zeros((4, 1))), SourceModelSpec("l1", nonneg=True))])
    res = separate(p)
    assert np.array_equal(res.Y_hat[:, 0], ybar)
    assert res.objective == pytest.approx(np.abs(ybar).sum())


def test_l2_matches_closed_form(rng):
    T, n = 200, 4
    X = [rng.normal(size=(T, n)) for _ in range(2)]
    ybar = sum(x @ rng.uniform(-1, 1, n) for x in X) + rng.normal(size=T)
    p = build_problem(ybar, [(FeatureBlock(f"s{i}", X[i]), None) for i in range(2)])
    res = separate(p)
    design = BlockDesign.from_blocks(X)
    th = least_squares_theta(design, ybar)
    F = reconstruct_sources(design, th)
    assert np.sqrt(np.mean((res.fitted(p) - F) ** 2, axis=0)).max() <= 1e-4
    assert np.sqrt(np.mean((res.Y_hat - ls_sources(design, ybar)) ** 2, axis=0)).max() <= 1e-4


def _random_mixed(r, T=40):
    k = int(r.integers(1, 4))
    sources = []
    for i in range(k):
        n = int(r.integers(0, 4))
        spec = SourceModelSpec(
            loss_norm=str(r.choice(["l1", "sq_l2"])),
            loss_operator=str(r.choice(["identity", "smooth:2", "blocksum:4"])),
            loss_weight=float(r.uniform(0.2, 2)),
            reg_norm=str(r.choice(["l1", "sq_l2", "none"])),
            reg_operator=str(r.choice(["identity", "diff"])),
            reg_weight=float(r.uniform(0.05, 1)),
            theta_ridge=float(r.choice([0.0, 0.1])),
            nonneg=bool(r.random() < 0.5),
        )
        sources.append((FeatureBlock(f"s{i}", r.normal(size=(T, n))), spec))
    agg = np.abs(r.normal(size=T)) + 0.5 + (sources[0][0].matrix.sum(axis=1) if sources[0][0].n else 0)
    if all(s.nonneg for _, s in sources):
        agg = np.abs(agg)
    return build_problem(agg, sources)


@pytest.mark.parametrize("seed", range(12))
def test_matches_conic_solver(seed):
    p = _random_mixed(np.random.default_rng(seed))
    _, _, f_ref = cvx_separate(p)
    res = separate(p)
    assert res.converged
    assert res.objective <= f_ref + 2e-3 * max(1.0, abs(f_ref))
    tight = separate(p, TIGHT)
    assert tight.objective == pytest.approx(f_ref, rel=1e-6, abs=1e-7)


@given(st.integers(0, 2**32 - 1))
def test_result_invariants(seed):
    p = _random_mixed(np.random.default_rng(seed), T=24)
    res = separate(p)
    ybar = p.aggregate.values
    assert np.max(np.abs(res.Y_hat.sum(axis=1) - ybar)) <= 1e-6 * np.linalg.norm(ybar) + 1e-8
    for i, s in enumerate(p.specs):
        if s.nonneg:
            assert res.Y_hat[:, i].min() >= -1e-8
    assert res.objective == pytest.approx(objective_value(p, res.Y_hat, res.theta_hat))


def _smooth_only(r, T=60):
    sources = []
    for i in range(3):
        spec = SourceModelSpec("sq_l2", loss_operator=str(r.choice(["identity", "smooth:3"])),
                               reg_norm="sq_l2", reg_operator="diff", reg_weight=float(r.uniform(0.1, 3)))
        sources.append((FeatureBlock(f"s{i}", r.normal(size=(T, 2))), spec))
    return build_problem(r.normal(size=T) * 3, sources)


@given(st.integers(0, 2**32 - 1))
def test_smooth_only_objective_nonincreasing(seed):
    p = _smooth_only(np.random.default_rng(seed))
    res = separate(p, SolverConfig(eps_abs=1e-12, eps_rel=1e-12, max_iter=50))
    h = res.history
    tail = h[len(h) // 10:]
    assert np.all(np.diff(tail) <= 1e-8 * np.abs(tail[1:]) + 1e-12)


def test_smooth_only_kkt_stationarity(rng):
    for _ in range(5):
        p = _smooth_only(rng)
        canon = canonicalize(p)
        res = solve(canon)
        v = np.concatenate([res.Y_hat.T.ravel(), *res.theta_hat])
        g = canon.P @ v
        # project onto the null space of the sum constraint
        gy = g[: p.T * p.k].reshape(p.k, p.T)
        gy = gy - gy.mean(axis=0)
        g_proj = np.concatenate([gy.ravel(), g[p.T * p.k:]])
        assert np.linalg.norm(g_proj) <= 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_source_permutation_equivariance(seed):
    r = np.random.default_rng(100 + seed)
    p = _random_mixed(r)
    while p.k < 2:
        p = _random_mixed(r)
    perm = r.permutation(p.k)
    q = build_problem(p.aggregate, [p.sources[j] for j in perm])
    a, b = separate(p), separate(q)
    assert np.allclose(a.Y_hat[:, perm], b.Y_hat, atol=1e-6, rtol=0)


@pytest.mark.parametrize("c", [0.01, 3.0, 250.0])
def test_consistent_scaling(c):
    # l1 weights are degree-1 homogeneous already; squared terms need 1/c, ridge c
    r = np.random.default_rng(7)
    T = 50

    def make(scale):
        X1, X2 = r_X
        s1 = SourceModelSpec("sq_l2", loss_weight=1.0 / scale, reg_norm="l1", reg_operator="diff",
                             reg_weight=0.3, theta_ridge=0.1 * scale, nonneg=True)
        s2 = SourceModelSpec("sq_l2", "smooth:2", 2.0 / scale, "sq_l2", "diff", 0.5 / scale, nonneg=True)
        return build_problem(scale * ybar, [(FeatureBlock("a", scale * X1), s1), (FeatureBlock("b", scale * X2), s2)])

    r_X = (np.abs(r.normal(size=(T, 2))), np.abs(r.normal(size=(T, 3))))
    ybar = np.abs(r.normal(size=T)) * 2
    base = separate(make(1.0), TIGHT)
    scaled = separate(make(c), TIGHT)
    assert np.allclose(scaled.Y_hat, c * base.Y_hat, rtol=1e-6, atol=1e-6 * c * np.abs(base.Y_hat).max())


def test_deterministic(rng):
    p = _random_mixed(rng)
    a, b = separate(p), separate(p)
    assert np.array_equal(a.Y_hat, b.Y_hat)
    assert all(np.array_equal(x, y) for x, y in zip(a.theta_hat, b.theta_hat))
    assert a.iterations == b.iterations


def test_iteration_cap_returns_feasible_best_iterate(rng):
    p = _random_mixed(np.random.default_rng(3))
    res = separate(p, SolverConfig(max_iter=2))
    assert not res.converged and res.iterations == 2
    assert np.allclose(res.Y_hat.sum(axis=1), p.aggregate.values, atol=1e-9)


def test_rank_deficient_design_still_solves():
    X = np.ones((20, 1))
    p = build_problem(np.linspace(1, 2, 20), [(FeatureBlock("a", X), None), (FeatureBlock("b", X), None)])
    res = separate(p)
    assert res.converged
    assert np.all(np.isfinite(res.Y_hat))


def test_config_validation():
    for bad in [dict(eps_abs=0), dict(eps_rel=-1), dict(max_iter=0), dict(rho_init=0), dict(alpha=2.0)]:
        with pytest.raises(ValueError):
            SolverConfig(**bad)
    with pytest.raises(ValueError):
        SolverConfig.from_dict({"tolerance": 1})
    c = SolverConfig(eps_abs=1e-7, max_iter=10)
    assert SolverConfig.from_dict(c.to_dict()) == c
