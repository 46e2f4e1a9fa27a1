import numpy as np
import pytest
from scipy import stats

from ctxsep.synth import DisaggConfig, RecoveryConfig, gen_disagg, gen_recovery, make_rng, step_noise


def test_streams_are_reproducible_and_split():
    a = make_rng(5).random(8)
    assert np.array_equal(a, make_rng(5).random(8))
    # trial j equals the j-th spawned child of the root sequence
    child = np.random.SeedSequence(5).spawn(3)[2]
    assert np.array_equal(make_rng(5, 2).random(8), np.random.Generator(np.random.Philox(child)).random(8))
    assert not np.array_equal(make_rng(5, 1).random(8), make_rng(5, 2).random(8))
    assert isinstance(make_rng(5).bit_generator, np.random.Philox)


def test_recovery_same_seed_identical():
    a = gen_recovery(RecoveryConfig(T=50, seed=3))
    b = gen_recovery(RecoveryConfig(T=50, seed=3))
    assert np.array_equal(a.design.X, b.design.X)
    assert np.array_equal(a.aggregate.values, b.aggregate.values)
    assert np.array_equal(a.Y_star, b.Y_star)
    c = gen_recovery(RecoveryConfig(T=50, seed=3), trial=1)
    assert not np.array_equal(a.design.X, c.design.X)


def test_recovery_shapes_and_sums():
    d = gen_recovery(RecoveryConfig(T=60, k=3, n_i=4, seed=1))
    assert d.design.X.shape == (60, 12) and d.design.sizes == (4, 4, 4)
    assert np.array_equal(d.aggregate.values, d.Y.sum(axis=1))
    for i, th in enumerate(d.theta_star):
        assert np.all(np.abs(th) <= 1)
        assert np.allclose(d.Y_star[:, i], d.design.block(i) @ th)
    # unit noise per source
    assert np.std(d.Y - d.Y_star) == pytest.approx(1.0, abs=0.15)


def _corr_summary(X, sizes):
    C = np.corrcoef(X, rowvar=False)
    edges = np.concatenate(([0], np.cumsum(sizes)))
    within, cross = [], []
    for a in range(len(sizes)):
        for b in range(len(sizes)):
            blk = C[edges[a]:edges[a + 1], edges[b]:edges[b + 1]]
            if a == b:
                within.append(blk[~np.eye(len(blk), dtype=bool)])
            else:
                cross.append(blk.ravel())
    return np.concatenate(within), np.concatenate(cross)


def test_mu_one_gives_uncorrelated_columns():
    d = gen_recovery(RecoveryConfig(T=10000, n_i=6, mu=1.0, seed=2))
    C = np.corrcoef(d.design.X, rowvar=False)
    assert np.max(np.abs(C - np.eye(len(C)))) < 0.1


def test_mu_small_within_block_correlation():
    d = gen_recovery(RecoveryConfig(T=100000, n_i=16, mu=0.01, seed=4))
    within, cross = _corr_summary(d.design.X, d.design.sizes)
    assert within.mean() == pytest.approx(0.99 / 1.99, abs=0.02)
    assert abs(cross.mean()) < 0.02


def test_disagg_features():
    d = gen_disagg(DisaggConfig(T=1000, seed=0))
    assert d.X1.min() == pytest.approx(0.0, abs=1e-12) and d.X1.max() == pytest.approx(2.0, abs=1e-12)
    assert d.X2.mean() == 0.5
    assert set(np.unique(d.X2)) == {0.0, 1.0}
    assert np.all(d.Y_star >= 0)
    assert np.array_equal(d.aggregate.values, d.Y_star.sum(axis=1))
    assert np.allclose(d.Y_star, np.maximum(np.column_stack([d.X1, d.X2]) + d.noise, 0))


def test_disagg_deterministic():
    a = gen_disagg(DisaggConfig(T=500, seed=9))
    b = gen_disagg(DisaggConfig(T=500, seed=9))
    assert np.array_equal(a.Y_star, b.Y_star)


def test_step_noise_is_windowed_mixture():
    w = step_noise(make_rng(1), 100000, 10, 0.5)
    assert abs(stats.skew(w)) < 0.05
    # overlapping windows inflate the spread of the sample skewness (sd ~0.02
    # per stream), so symmetry is also checked on the mean over 20 streams
    pooled = np.mean([stats.skew(step_noise(make_rng(s), 100000, 10, 0.5)) for s in range(100, 120)])
    assert abs(pooled) < 0.02
    # variance of a window sum of beta iid draws: beta * (1 - p0) / 3
    assert w.var() == pytest.approx(10 * 0.5 / 3, rel=0.05)
    # beta = 1 leaves raw draws: about half are exactly zero, the rest in [-1, 1]
    raw = step_noise(make_rng(1), 100000, 1, 0.5)
    assert np.mean(raw == 0) == pytest.approx(0.5, abs=0.01)
    assert np.all(np.abs(raw) <= 1)
    # consecutive window sums share beta - 1 draws
    assert np.corrcoef(w[:-1], w[1:])[0, 1] == pytest.approx(0.9, abs=0.02)


def test_config_validation():
    for bad in [dict(tau1=1), dict(sigma=0), dict(beta=0), dict(p_zero=1.0), dict(T=1)]:
        with pytest.raises(ValueError):
            DisaggConfig(**bad)
    for bad in [dict(mu=0), dict(mu=1.5), dict(k=0), dict(T=1)]:
        with pytest.raises(ValueError):
            RecoveryConfig(**bad)
