import numpy as np
import pytest
from scipy.stats import multivariate_normal, norm

from switchrank.mvn import max_normal_tail, max_normal_tail_mc, semidefinite_cholesky


def rank3_corr(rng):
    """Correlation of four FH-style weight vectors where w00 = w10 + w01."""
    m = rng.integers(5, 40)
    s = np.sort(rng.random(m))[::-1]
    v = rng.random(m)
    w = np.array([np.ones(m), s, 1 - s, s * (1 - s)])
    cov = (w * v) @ w.T
    sd = np.sqrt(np.diag(cov))
    return cov / np.outer(sd, sd)


def test_semidefinite_cholesky_reconstructs():
    rng = np.random.default_rng(0)
    for _ in range(10):
        c = rank3_corr(rng)
        L = semidefinite_cholesky(c)
        np.testing.assert_allclose(L @ L.T, c, atol=1e-10)
        assert np.count_nonzero(np.abs(np.diag(L)) > 0) == 3


def test_univariate():
    p, err = max_normal_tail(np.eye(1), 1.3)
    assert p == pytest.approx(norm.sf(1.3), rel=1e-14)
    assert err == 0.0


@pytest.mark.parametrize("z", [-1.0, 0.5, 2.0, 3.5])
def test_all_ones_collapses_to_univariate(z):
    p, _ = max_normal_tail(np.ones((4, 4)), z)
    assert abs(p - norm.sf(z)) < 1e-3


@pytest.mark.parametrize("z", [0.0, 1.0, 2.5])
def test_independent(z):
    p, _ = max_normal_tail(np.eye(4), z)
    assert p == pytest.approx(1 - norm.cdf(z) ** 4, abs=1e-4)


@pytest.mark.parametrize("seed", range(5))
def test_full_rank_against_scipy(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(4, 6))
    cov = a @ a.T
    sd = np.sqrt(np.diag(cov))
    corr = cov / np.outer(sd, sd)
    z = 1.5
    p, _ = max_normal_tail(corr, z)
    ref = 1 - multivariate_normal(mean=np.zeros(4), cov=corr).cdf(np.full(4, z))
    assert p == pytest.approx(ref, abs=5e-4)


@pytest.mark.parametrize("seed", range(5))
def test_rank_deficient_against_monte_carlo(seed):
    rng = np.random.default_rng(seed)
    corr = rank3_corr(rng)
    z = float(rng.uniform(0.5, 3.0))
    p, err = max_normal_tail(corr, z)
    assert err <= 1e-4 or err < 0.02 * p
    p_mc, se = max_normal_tail_mc(corr, z, n_draws=400_000, seed=seed)
    assert abs(p - p_mc) <= 3 * se + err


def test_deterministic_default_seed():
    corr = rank3_corr(np.random.default_rng(9))
    assert max_normal_tail(corr, 1.7) == max_normal_tail(corr, 1.7)


def test_far_tail_keeps_relative_accuracy():
    corr = np.full((3, 3), 0.5) + 0.5 * np.eye(3)
    p, _ = max_normal_tail(corr, 6.0)
    assert norm.sf(6.0) <= p <= 3 * norm.sf(6.0)
