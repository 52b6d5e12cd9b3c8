import numpy as np
import pytest
from pydantic import ValidationError

from artcombine import simharness
from artcombine.config import settings
from artcombine.exceptions import DataError
from artcombine.schemas import SimStudyConfig
from artcombine.utils.rng import stream


def _within(rate, target, B, z=4.0):
    return abs(rate - target) <= z * np.sqrt(target * (1 - target) / B)


def test_draw_effects():
    rng = stream(0, 99)
    constant = SimStudyConfig(k=2, L=5, effect_law={"kind": "constant", "mu": 0.3})
    np.testing.assert_array_equal(simharness.draw_effects(constant, rng), np.full(5, 0.3))

    uniform = SimStudyConfig(k=2, L=1000, effect_law={"kind": "uniform", "mu_lo": -0.45, "mu_hi": 1.3})
    mu = simharness.draw_effects(uniform, rng)
    assert mu.min() >= -0.45 and mu.max() <= 1.3

    sparse = SimStudyConfig(k=10, L=1000, effect_law={"kind": "sparse", "fraction": 0.025, "mu": 1.4})
    mu = simharness.draw_effects(sparse, rng)
    assert np.count_nonzero(mu) == 25
    assert np.all(mu[:25] == 1.4)


def test_generate_pvalues_is_reproducible():
    cfg = SimStudyConfig(k=3, L=10, seed=7, effect_law={"kind": "uniform", "mu_lo": 0.0, "mu_hi": 1.0})
    first, stats_first = simharness.generate_pvalues(cfg, replicate=4)
    second, _ = simharness.generate_pvalues(cfg, replicate=4)
    other, _ = simharness.generate_pvalues(cfg, replicate=5)
    assert first.values == second.values
    assert first.values != other.values
    assert stats_first is None
    assert all(0 < v <= 1 for v in first.values)


def test_correlated_replicates_return_statistics():
    cfg = SimStudyConfig(k=3, L=6, correlation_source={"kind": "random", "rho": 0.5, "delta": 1.0})
    p, x = simharness.generate_pvalues(cfg, replicate=0)
    assert x.shape == (6,)
    np.testing.assert_allclose(p.values, simharness.two_sided_pvalues(x))


def test_null_study_holds_alpha():
    """Exact null distributions give rejection rates near alpha"""
    B = 4000
    cfg = SimStudyConfig(B=B, k=5, L=20, seed=1, methods=["rtp", "art", "simes", "fisher", "sidak"])
    report = simharness.run_study(cfg)
    assert len(report.rows) == 5
    for row in report.rows:
        assert row.variant == "plain"
        assert row.B == B
        assert _within(row.rejection_rate, 0.05, B), f"{row.method}: {row.rejection_rate}"
    assert "stages" in report.performance


def test_study_with_effects_has_power():
    cfg = SimStudyConfig(B=1000, k=10, L=100, seed=2, effect_law={"kind": "constant", "mu": 0.8}, methods=["rtp", "art", "simes"])
    report = simharness.run_study(cfg)
    assert report.rate("art") > 0.2
    assert report.rate("rtp") > 0.2
    with pytest.raises(KeyError):
        report.rate("arta")


def test_study_is_independent_of_worker_count(monkeypatch):
    """Per-replicate streams make the table identical for any pool size"""
    monkeypatch.setattr(settings, "block_size", 64)
    cfg = SimStudyConfig(B=300, k=3, L=12, seed=5, effect_law={"kind": "constant", "mu": 0.4}, methods=["rtp", "simes"])
    one = simharness.run_study(cfg, workers=1)
    three = simharness.run_study(cfg, workers=3)
    assert [r.rejection_rate for r in one.rows] == [r.rejection_rate for r in three.rows]


def test_fixed_effects_are_drawn_once():
    cfg = SimStudyConfig(
        k=2, L=8, seed=3, resample_effects=False, effect_law={"kind": "uniform", "mu_lo": -1.0, "mu_hi": 1.0}
    )
    context = simharness.StudyContext(cfg)
    assert context.fixed_effects is not None
    assert context.fixed_effects.shape == (8,)


@pytest.mark.slow
@pytest.mark.parametrize("redraw", [False, True])
def test_correlated_null_study_holds_alpha_in_both_variants(redraw):
    """Resampling-calibrated plain and analytic decorrelated variants both hold alpha"""
    B = 3000
    cfg = SimStudyConfig(
        B=B,
        k=4,
        L=10,
        seed=4,
        correlation_source={"kind": "random", "rho": 0.5, "delta": 1.0},
        methods=["rtp", "art", "simes"],
        decorrelate_flag=True,
        redraw_correlation=redraw,
    )
    report = simharness.run_study(cfg)
    assert {(r.method, r.variant) for r in report.rows} == {
        (m, v) for m in ("rtp", "art", "simes") for v in ("plain", "decorr")
    }
    for row in report.rows:
        assert _within(row.rejection_rate, 0.05, B, z=4.5), f"{row.method}/{row.variant}: {row.rejection_rate}"


def test_run_correlated_study_requires_correlation():
    with pytest.raises(DataError):
        simharness.run_correlated_study(SimStudyConfig(B=10, k=2, L=4))


def test_file_correlation_source_order_must_match(write_matrix):
    path = write_matrix(np.eye(3))
    cfg = SimStudyConfig(B=10, k=2, L=4, correlation_source={"kind": "file", "path": path})
    with pytest.raises(DataError):
        simharness.run_study(cfg)


def test_file_correlation_source(write_matrix):
    entries = np.full((4, 4), 0.3) + 0.7 * np.eye(4)
    cfg = SimStudyConfig(
        B=200, k=2, L=4, seed=1, correlation_source={"kind": "file", "path": write_matrix(entries)}, methods=["art"],
        decorrelate_flag=True,
    )
    report = simharness.run_study(cfg)
    assert {r.variant for r in report.rows} == {"plain", "decorr"}


def test_presets():
    configs = simharness.preset_configs("table1", B=100)
    assert len(configs) == 1
    assert (configs[0].k, configs[0].L, configs[0].B) == (10, 100, 100)
    assert len(simharness.preset_configs("table1", all_cells=True)) == 6

    table5 = simharness.preset_configs("table5")
    assert table5[0].L == 1000 and table5[0].effect_law.kind == "sparse"

    tabcor = simharness.preset_configs("tabcor4", B=50)[0]
    assert tabcor.correlated and tabcor.decorrelate_flag
    assert tabcor.redraw_correlation
    assert not simharness.preset_configs("table2")[0].redraw_correlation

    with pytest.raises(KeyError):
        simharness.preset_configs("table9")
    with pytest.raises(ValidationError):
        simharness.preset_configs("muopioid-power")


def test_study_config_validation():
    with pytest.raises(ValidationError):
        SimStudyConfig(k=5, L=4)
    with pytest.raises(ValidationError):
        SimStudyConfig(k=2, L=4, methods=["magic"])
    with pytest.raises(ValidationError):
        SimStudyConfig(k=2, L=4, alpha=1.5)
    with pytest.raises(ValidationError):
        SimStudyConfig(k=2, L=4, redraw_correlation=True)


def test_redrawn_correlation_differs_per_replicate():
    """Each replicate, and the null stream, gets its own reproducible matrix"""
    cfg = SimStudyConfig(
        k=3, L=6, seed=2, correlation_source={"kind": "random", "rho": 0.5, "delta": 1.0}, redraw_correlation=True
    )
    context = simharness.StudyContext(cfg)
    first = context.correlation(0)
    assert not np.array_equal(first.entries, context.correlation(1).entries)
    assert not np.array_equal(first.entries, context.correlation(0, null=True).entries)
    x, sigma = context.draw(0)
    np.testing.assert_array_equal(sigma.entries, first.entries)
    np.testing.assert_array_equal(x, simharness.StudyContext(cfg).statistics(0))

    fixed = simharness.StudyContext(cfg.model_copy(update={"redraw_correlation": False}))
    assert fixed.correlation(0) is fixed.correlation(1)


@pytest.mark.slow
def test_power_ordering_under_constant_effects():
    """k = 10, L = 100, effect 0.5: ART leads, ART-A tracks aRTP, Simes trails"""
    report = simharness.run_study(simharness.preset_configs("table2", B=10_000)[0])
    rates = {method: report.rate(method) for method in ("rtp", "art", "artp", "arta", "simes")}
    for method, target in {"rtp": 0.35, "art": 0.38, "artp": 0.27, "arta": 0.27, "simes": 0.14}.items():
        assert rates[method] == pytest.approx(target, abs=0.02), f"{method}: {rates[method]}"
    assert abs(rates["arta"] - rates["artp"]) <= 0.03
    assert rates["art"] > rates["rtp"] > rates["arta"]
    assert rates["artp"] > rates["simes"]


@pytest.mark.slow
def test_sparse_effect_power():
    """L = 1000 with 5% of tests at effect 1.4: ART well ahead of Simes"""
    B = 10_000
    cfg = simharness.preset_configs("table5", B=B)[0].model_copy(update={"methods": ["art", "simes"]})
    report = simharness.run_study(cfg)
    for method, target in {"art": 0.52, "simes": 0.23}.items():
        tolerance = 0.02 + 2 * np.sqrt(target * (1 - target) / B)
        assert report.rate(method) == pytest.approx(target, abs=tolerance), f"{method}: {report.rate(method)}"


@pytest.mark.slow
def test_decorrelation_gains_power_on_random_correlation():
    """Heterogeneous effects under random correlation: decorrelated RTP beats the calibrated plain one"""
    cfg = simharness.preset_configs("tabcor4", B=2000)[0].model_copy(update={"methods": ["rtp", "art"]})
    report = simharness.run_study(cfg)
    for method in ("rtp", "art"):
        plain, decorr = report.rate(method, "plain"), report.rate(method, "decorr")
        assert decorr > plain + 0.1, f"{method}: plain {plain}, decorr {decorr}"
