import numpy as np
import pytest

from artcombine import combine_adaptive
from artcombine.combine_fixed import sidak_min
from artcombine.exceptions import DataError, UsageError
from artcombine.orderstats import sample_head_batch
from artcombine.schemas import AdaptiveSpec, Method, PValueVector


def test_weight_schemes():
    np.testing.assert_array_equal(combine_adaptive.equal_weights(3), [1.0, 1.0, 1.0])
    np.testing.assert_allclose(combine_adaptive.sparse_signal_weights(4), [2.0, np.sqrt(2.0), np.sqrt(4 / 3), 1.0])
    spec = AdaptiveSpec.default(4, 10, weights="sparse")
    np.testing.assert_allclose(spec.weights, combine_adaptive.sparse_signal_weights(4))


def test_adaptive_spec_validation():
    """Candidates must increase, stay within L and have weights"""
    with pytest.raises(ValueError):
        AdaptiveSpec(candidate_ks=[3, 2], weights=[1, 1, 1], L=5)
    with pytest.raises(ValueError):
        AdaptiveSpec(candidate_ks=[2, 6], weights=[1] * 6, L=5)
    with pytest.raises(ValueError):
        AdaptiveSpec(candidate_ks=[1, 3], weights=[1, 1], L=5)
    with pytest.raises(ValueError):
        AdaptiveSpec.default(3, 5, weights="heavy")


def test_z_transform_of_null_heads_is_uniform_and_independent():
    """Z_i computed from sorted null p-values are iid uniform"""
    L, B = 20, 40_000
    heads = sample_head_batch(4, L, B, seed=31)
    z = combine_adaptive.z_transform(heads, L)
    assert z.shape == (B, 4)
    np.testing.assert_allclose(z.mean(axis=0), 0.5, atol=0.01)
    np.testing.assert_allclose(z.var(axis=0), 1 / 12, atol=0.005)
    corr = np.corrcoef(z.T)
    assert np.max(np.abs(corr - np.eye(4))) < 0.03


def test_z_transform_first_value():
    """Z_1 = (1 - p_(1))^L"""
    p = PValueVector.full([0.3, 0.1, 0.2])
    z = combine_adaptive.z_transform(p)
    assert z[0] == pytest.approx(0.9 ** 3)
    assert z[1] == pytest.approx((0.8 / 0.9) ** 2)
    assert z[2] == pytest.approx(0.7 / 0.8)


def test_z_transform_rejects_unsorted_input():
    with pytest.raises(DataError):
        combine_adaptive.z_transform([0.2, 0.1], L=5)
    with pytest.raises(UsageError):
        combine_adaptive.z_transform([0.1, 0.2, 0.3], L=2)


def test_candidate_correlation_for_equal_weights():
    """Standardized partial sums at j and k correlate as sqrt(min/max)"""
    spec = AdaptiveSpec(candidate_ks=[1, 4, 9], weights=[1.0] * 9, L=20)
    corr = combine_adaptive.candidate_correlation(spec).entries
    assert corr[0, 1] == pytest.approx(0.5)
    assert corr[1, 2] == pytest.approx(2 / 3)
    assert corr[0, 2] == pytest.approx(1 / 3)


def test_single_candidate_reduces_to_sidak(worked_example_pvalues):
    """With the single candidate k = 1 the ART-A p-value is the Sidak correction"""
    spec = AdaptiveSpec(candidate_ks=[1], weights=[1.0], L=6)
    result = combine_adaptive.arta_pvalue(worked_example_pvalues, spec)
    assert result.method == Method.ARTA
    assert result.p_combined == pytest.approx(sidak_min(0.07, 6), rel=1e-9)


def test_arta_pvalue_is_bounded_by_min_p(worked_example_pvalues):
    """min_p <= p <= d * min_p"""
    spec = AdaptiveSpec.default(4, 6)
    result = combine_adaptive.arta_pvalue(worked_example_pvalues, spec, seed=1)
    min_p = result.diagnostics["min_p"]
    assert min_p <= result.p_combined <= min(1.0, 4 * min_p)
    assert result.diagnostics["argmin_k"] in spec.candidate_ks
    assert result.diagnostics["candidates"] == 4


def test_arta_statistic_partial_sums(worked_example_pvalues):
    spec = AdaptiveSpec.default(3, 6)
    stat = combine_adaptive.arta_statistic(worked_example_pvalues, spec)
    assert len(stat.partial_sums) == 3
    assert len(stat.marginal_ps) == 3
    assert stat.min_p == min(stat.marginal_ps)
    assert not stat.z_clamped


def test_arta_strong_signal():
    """Very small leading p-values give a very small combined p-value"""
    p = PValueVector(values=[1e-9, 1e-8, 1e-7], L=50)
    result = combine_adaptive.arta_pvalue(p, AdaptiveSpec.default(3, 50))
    assert result.p_combined < 1e-5


def test_arta_needs_enough_values():
    p = PValueVector(values=[0.01, 0.02], L=10)
    with pytest.raises(UsageError):
        combine_adaptive.arta_pvalue(p, AdaptiveSpec.default(3, 10))
    with pytest.raises(UsageError):
        combine_adaptive.arta_pvalue(p, AdaptiveSpec.default(2, 11))


def test_arta_min_p_matches_scalar_statistic(worked_example_pvalues):
    spec = AdaptiveSpec.default(4, 6, weights="sparse")
    heads = np.sort(worked_example_pvalues.values)[None, :4]
    batch = combine_adaptive.arta_min_p(heads, spec)[0]
    assert batch == pytest.approx(combine_adaptive.arta_statistic(worked_example_pvalues, spec).min_p, rel=1e-12)


@pytest.mark.slow
def test_arta_threshold_gives_level_alpha():
    """Null heads fall below the ART-A threshold at rate alpha"""
    L, B = 30, 20_000
    spec = AdaptiveSpec.default(5, L)
    threshold = combine_adaptive.arta_threshold(spec, 0.05, seed=0)
    assert 0.05 / 5 <= threshold <= 0.05
    heads = sample_head_batch(5, L, B, seed=41)
    rate = np.mean(combine_adaptive.arta_min_p(heads, spec) <= threshold)
    assert rate == pytest.approx(0.05, abs=4 * np.sqrt(0.05 * 0.95 / B) + 0.003)


def test_gamma_method_pvalue():
    """A single unit-weight term gives exp(-G^-1(Z))"""
    z = 1 - np.exp(-1.0)
    assert combine_adaptive.gamma_method_pvalue([z], [1.0]) == pytest.approx(np.exp(-1.0), rel=1e-10)
    assert combine_adaptive.gamma_method_pvalue([0.999, 0.999], [1.0, 1.0]) < combine_adaptive.gamma_method_pvalue([0.5, 0.5], [1.0, 1.0])
    with pytest.raises(UsageError):
        combine_adaptive.gamma_method_pvalue([0.5, 0.5], [1.0])


def test_artp_empirical_strong_signal_hits_resolution_floor():
    """An extreme observation ranks above every null row"""
    B = 2000
    p = PValueVector(values=[1e-12, 1e-11, 1e-10], L=20)
    result = combine_adaptive.artp_empirical(p, AdaptiveSpec.default(3, 20), B=B, seed=3)
    assert result.method == Method.ARTP
    assert result.p_combined == pytest.approx(1 / (B + 1))
    assert result.diagnostics["B"] == B


def test_artp_empirical_is_reproducible(worked_example_pvalues):
    spec = AdaptiveSpec.default(4, 6)
    first = combine_adaptive.artp_empirical(worked_example_pvalues, spec, B=2000, seed=5)
    second = combine_adaptive.artp_empirical(worked_example_pvalues, spec, B=2000, seed=5)
    assert first.p_combined == second.p_combined
    assert 0 < first.p_combined <= 1


def test_artp_requires_enough_resamples(worked_example_pvalues):
    with pytest.raises(UsageError):
        combine_adaptive.artp_empirical(worked_example_pvalues, AdaptiveSpec.default(4, 6), B=999)


def test_artp_pvalues_are_calibrated_under_the_null():
    """Batch aRTP p-values of null heads reject at rate alpha"""
    L, B = 25, 5000
    spec = AdaptiveSpec.default(4, L)
    null = sample_head_batch(4, L, B, seed=51)
    observed = sample_head_batch(4, L, B, seed=52)
    pvalues = combine_adaptive.artp_pvalues(observed, null, spec)
    assert np.mean(pvalues <= 0.05) == pytest.approx(0.05, abs=4 * np.sqrt(0.05 * 0.95 / B) + 0.005)
