import numpy as np
import pytest

from artcombine import decorrelate
from artcombine.correlation import CorrelationMatrix
from artcombine.exceptions import DataError, NumericalError, UsageError
from artcombine.schemas import HaplotypeTable, PValueVector


def _equicorrelated(L, rho):
    return CorrelationMatrix(np.full((L, L), rho) + (1 - rho) * np.eye(L))


def test_whitening_matrix_inverts_the_correlation():
    """H S H = I for the symmetric inverse square root"""
    sigma = decorrelate.random_correlation(8, 0.5, 1.0, seed=2)
    h = decorrelate.whitening_matrix(sigma)
    np.testing.assert_allclose(h, h.T, atol=1e-12)
    np.testing.assert_allclose(h @ sigma.entries @ h, np.eye(8), atol=1e-9)


def test_whitened_statistics_are_uncorrelated():
    sigma = _equicorrelated(5, 0.7)
    rng = np.random.default_rng(0)
    y = rng.multivariate_normal(np.zeros(5), sigma.entries, size=40_000)
    white = decorrelate.whiten(y, sigma)
    np.testing.assert_allclose(np.cov(white.T), np.eye(5), atol=0.04)


def test_whiten_checks_dimensions():
    with pytest.raises(DataError):
        decorrelate.whiten(np.zeros(3), CorrelationMatrix.identity(4))


def test_equicorrelated_whitening_respects_permutations():
    """Permuting equicorrelated statistics permutes the whitened values"""
    sigma = _equicorrelated(4, 0.4)
    y = np.array([1.5, -0.3, 0.8, 2.1])
    perm = np.array([2, 0, 3, 1])
    np.testing.assert_allclose(decorrelate.whiten(y[perm], sigma), decorrelate.whiten(y, sigma)[perm], atol=1e-12)


def test_identity_correlation_leaves_pvalues_unchanged():
    p = PValueVector.full([0.01, 0.2, 0.5, 0.9])
    out = decorrelate.decorrelate_pvalues(p, CorrelationMatrix.identity(4), signs=[1, 1, 1, 1])
    np.testing.assert_allclose(out.values, p.values, rtol=1e-10)

    two = decorrelate.decorrelate_pvalues(p, CorrelationMatrix.identity(4), signs=[1, -1, 1, -1], sided="two")
    np.testing.assert_allclose(two.values, p.values, rtol=1e-10)


def test_decorrelated_null_pvalues_are_uniform():
    """Correlated null statistics map to uniform decorrelated p-values"""
    sigma = decorrelate.random_correlation(6, 0.5, 1.0, seed=9)
    rng = np.random.default_rng(3)
    y = rng.multivariate_normal(np.zeros(6), sigma.entries, size=30_000)
    p = decorrelate.decorrelate_statistics(y, sigma)
    assert p.mean() == pytest.approx(0.5, abs=0.01)
    assert np.mean(p <= 0.05) == pytest.approx(0.05, abs=0.005)


def test_statistics_from_pvalues():
    y = decorrelate.statistics_from_pvalues([0.025, 0.5], signs=[1, -1])
    np.testing.assert_allclose(y, [1.959963984540054, 0.0], atol=1e-12)
    two = decorrelate.statistics_from_pvalues([0.05], signs=[-1], sided="two")
    assert two[0] == pytest.approx(-1.959963984540054)
    with pytest.raises(DataError):
        decorrelate.statistics_from_pvalues([0.1, 0.2], signs=[1, 0])
    with pytest.raises(DataError):
        decorrelate.statistics_from_pvalues([0.1, 0.2], signs=[1])
    with pytest.raises(UsageError):
        decorrelate.statistics_from_pvalues([0.1], sided="both")


def test_missing_signs_are_treated_as_positive(caplog):
    y = decorrelate.statistics_from_pvalues([0.1, 0.3])
    assert np.all(y > 0)
    assert "No signs supplied" in caplog.text


def test_near_singular_matrix_needs_a_ridge():
    singular = CorrelationMatrix([[1.0, 1.0], [1.0, 1.0]])
    p = PValueVector.full([0.1, 0.2])
    with pytest.raises(NumericalError):
        decorrelate.decorrelate_pvalues(p, singular, signs=[1, 1])
    out = decorrelate.decorrelate_pvalues(p, singular.with_ridge(0.1), signs=[1, 1])
    assert out.L == 2


def test_decorrelation_needs_every_value():
    with pytest.raises(UsageError):
        decorrelate.decorrelate_pvalues(PValueVector(values=[0.1], L=2), CorrelationMatrix.identity(2))
    with pytest.raises(DataError):
        decorrelate.decorrelate_pvalues(PValueVector.full([0.1, 0.2]), CorrelationMatrix.identity(3))


def test_ld_matrix_from_haplotypes():
    """r = D / sqrt(p1 (1 - p1) p2 (1 - p2))"""
    table = HaplotypeTable(
        n_snps=2,
        rows=[
            {"pattern": "00", "frequency": 0.4},
            {"pattern": "11", "frequency": 0.4},
            {"pattern": "01", "frequency": 0.1},
            {"pattern": "10", "frequency": 0.1},
        ],
    )
    r = decorrelate.ld_matrix_from_haplotypes(table).entries
    np.testing.assert_allclose(r, [[1.0, 0.6], [0.6, 1.0]], atol=1e-12)


def test_ld_matrix_three_snps_is_valid_correlation():
    table = HaplotypeTable(
        n_snps=3,
        rows=[
            {"pattern": "000", "frequency": 0.3},
            {"pattern": "110", "frequency": 0.25},
            {"pattern": "011", "frequency": 0.2},
            {"pattern": "101", "frequency": 0.15},
            {"pattern": "111", "frequency": 0.1},
        ],
    )
    sigma = decorrelate.ld_matrix_from_haplotypes(table)
    assert sigma.order == 3
    np.testing.assert_allclose(np.diag(sigma.entries), 1.0)
    assert sigma.min_eigenvalue >= 0


def test_monomorphic_snp_is_rejected():
    table = HaplotypeTable(n_snps=2, rows=[{"pattern": "01", "frequency": 0.5}, {"pattern": "11", "frequency": 0.5}])
    with pytest.raises(DataError, match="monomorphic"):
        decorrelate.ld_matrix_from_haplotypes(table, snp_names=["rsA", "rsB"])


def test_random_correlation():
    """Perturbed equicorrelation is a valid, reproducible correlation matrix"""
    a = decorrelate.random_correlation(10, 0.5, 1.0, seed=4)
    b = decorrelate.random_correlation(10, 0.5, 1.0, seed=4)
    c = decorrelate.random_correlation(10, 0.5, 1.0, seed=5)
    np.testing.assert_array_equal(a.entries, b.entries)
    assert not np.array_equal(a.entries, c.entries)
    np.testing.assert_allclose(np.diag(a.entries), 1.0)
    assert a.min_eigenvalue > 0
    off = a.entries[~np.eye(10, dtype=bool)]
    assert np.all(np.abs(off) <= 1.0)


@pytest.mark.parametrize("L,rho,delta", [(0, 0.5, 1.0), (5, 1.0, 1.0), (5, -0.5, 1.0), (5, 0.5, 0.0)])
def test_random_correlation_rejects_bad_parameters(L, rho, delta):
    with pytest.raises(UsageError):
        decorrelate.random_correlation(L, rho, delta, seed=0)


def test_random_correlation_extra_key_gives_new_draws():
    """Keyed draws are reproducible, distinct from each other and from the unkeyed draw"""
    base = decorrelate.random_correlation(6, 0.5, 1.0, 3)
    first = decorrelate.random_correlation(6, 0.5, 1.0, 3, 0, 1)
    np.testing.assert_array_equal(first.entries, decorrelate.random_correlation(6, 0.5, 1.0, 3, 0, 1).entries)
    assert not np.array_equal(first.entries, base.entries)
    assert not np.array_equal(first.entries, decorrelate.random_correlation(6, 0.5, 1.0, 3, 0, 2).entries)


@pytest.mark.slow
def test_random_correlation_mean_absolute_correlation():
    """Mean off-diagonal |rho| of the rank-one generator at rho = 0.5, delta = 1"""
    L = 10
    off = ~np.eye(L, dtype=bool)
    means = [np.abs(decorrelate.random_correlation(L, 0.5, 1.0, seed).entries[off]).mean() for seed in range(500)]
    assert np.mean(means) == pytest.approx(0.40, abs=0.02)


@pytest.mark.slow
def test_whitening_is_exact_over_random_matrices():
    """max |H S H - I| stays at rounding level"""
    worst = 0.0
    for seed in range(100):
        sigma = decorrelate.random_correlation(20, 0.5, 1.0, seed)
        h = decorrelate.whitening_matrix(sigma)
        worst = max(worst, float(np.max(np.abs(h.T @ sigma.entries @ h - np.eye(20)))))
    assert worst < 1e-8
