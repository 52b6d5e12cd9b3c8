"""Monte-Carlo type I error and power studies.

Each replicate r draws its statistics from its own stream (seed, r), so a
study gives the same table for any worker count. Replicates are processed
in blocks; a block keeps only the sorted head of its p-values plus the Simes
and Fisher values, which is all the study methods need.

Rejection uses thresholds computed once per study (RTP critical value,
ART-A min-p threshold) instead of a quadrature or MVN call per replicate.
Plain methods on correlated data are calibrated against null replicates
drawn with the same correlation, or from the same random-matrix law when
the matrix is redrawn per replicate; decorrelated methods use the analytic
null.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional
import logging

import numpy as np
from scipy import special

from artcombine.combine_adaptive import arta_min_p, arta_threshold, artp_pvalues
from artcombine.combine_fixed import (
    art_pvalues,
    fisher_pvalues,
    rtp_critical_value,
    rtp_statistics,
    sidak_pvalues,
    simes_pvalues,
)
from artcombine.config import settings
from artcombine.correlation import CorrelationMatrix
from artcombine.decorrelate import random_correlation, whiten
from artcombine.exceptions import DataError
from artcombine.orderstats import sample_head_batch
from artcombine.schemas import (
    AdaptiveSpec,
    PValueVector,
    SimStudyConfig,
    StudyReport,
    StudyRow,
    TruncationSpec,
)
from artcombine.utils.input_validator import input_validator
from artcombine.utils.performance_monitor import PerformanceMonitor
from artcombine.utils.rng import (
    TAG_ARTP_NULL,
    TAG_EFFECTS,
    TAG_STUDY,
    TAG_STUDY_NULL,
    blocks,
    parallel_map,
    stream,
)

logger = logging.getLogger(__name__)


def draw_effects(cfg: SimStudyConfig, rng: np.random.Generator) -> np.ndarray:
    """Per-test effect sizes for one replicate (or one study)"""
    law, L = cfg.effect_law, cfg.L
    if law.kind == "constant":
        return np.full(L, law.mu)
    if law.kind == "uniform":
        return rng.uniform(law.mu_lo, law.mu_hi, size=L)
    n_signals = max(1, int(round(law.fraction * L)))
    mu = np.zeros(L)
    mu[:n_signals] = law.mu
    return mu


def study_correlation(cfg: SimStudyConfig) -> Optional[CorrelationMatrix]:
    source = cfg.correlation_source
    if source.kind == "independent":
        return None
    if source.kind == "random":
        return random_correlation(cfg.L, source.rho, source.delta, cfg.seed)

    sigma = input_validator.load_correlation(source.path)
    if sigma.order != cfg.L:
        raise DataError(f"Correlation file {source.path} has order {sigma.order} but L = {cfg.L}")
    return sigma


def _factor(sigma: CorrelationMatrix) -> np.ndarray:
    values, vectors = sigma.eigen
    return vectors * np.sqrt(values)


class StudyContext:
    """Per-study state shared by all replicates: correlation, its factor, fixed effects

    With ``redraw_correlation`` every replicate gets its own random matrix,
    keyed by (seed, null flag, replicate).
    """

    def __init__(self, cfg: SimStudyConfig):
        self.cfg = cfg
        self.redraw = cfg.redraw_correlation
        self.sigma = study_correlation(cfg)
        self.factor = None if self.sigma is None or self.redraw else _factor(self.sigma)
        self.fixed_effects = None
        if not cfg.resample_effects:
            self.fixed_effects = draw_effects(cfg, stream(cfg.seed, TAG_EFFECTS))

    def correlation(self, replicate: int, null: bool = False) -> Optional[CorrelationMatrix]:
        """Correlation matrix the replicate is drawn with"""
        if not self.redraw:
            return self.sigma
        source = self.cfg.correlation_source
        return random_correlation(self.cfg.L, source.rho, source.delta, self.cfg.seed, int(null), replicate)

    def draw(self, replicate: int, null: bool = False):
        """(X ~ MVN(mu, S), S) for one replicate"""
        cfg = self.cfg
        rng = stream(cfg.seed, TAG_STUDY_NULL if null else TAG_STUDY, replicate)
        if null:
            mu = 0.0
        elif self.fixed_effects is not None:
            mu = self.fixed_effects
        else:
            mu = draw_effects(cfg, rng)
        noise = rng.standard_normal(cfg.L)
        sigma = self.correlation(replicate, null)
        if sigma is not None:
            noise = (self.factor if self.factor is not None else _factor(sigma)) @ noise
        return mu + noise, sigma

    def statistics(self, replicate: int, null: bool = False) -> np.ndarray:
        """X ~ MVN(mu, S) for one replicate"""
        return self.draw(replicate, null)[0]


def two_sided_pvalues(x) -> np.ndarray:
    """2(1 - Phi(|x|))"""
    return 2.0 * special.ndtr(-np.abs(np.asarray(x, dtype=float)))


def generate_pvalues(cfg: SimStudyConfig, replicate: int, context: Optional[StudyContext] = None):
    """L p-values of one replicate and, for correlated studies, the raw statistics

    Returns:
        (PValueVector, statistics or None)
    """
    context = context or StudyContext(cfg)
    x = context.statistics(replicate)
    p = PValueVector(values=two_sided_pvalues(x).tolist(), L=cfg.L)
    return p, (x if context.sigma is not None else None)


@dataclass
class _Summary:
    """What the study methods need from a set of replicates"""

    heads: np.ndarray
    simes: np.ndarray
    fisher: np.ndarray

    @classmethod
    def from_pvalues(cls, p: np.ndarray, k: int) -> "_Summary":
        p = np.maximum(np.sort(p, axis=1), settings.pvalue_floor)
        return cls(heads=p[:, :k], simes=simes_pvalues(p, p.shape[1]), fisher=fisher_pvalues(p))

    @classmethod
    def concat(cls, parts: List["_Summary"]) -> "_Summary":
        return cls(
            heads=np.concatenate([s.heads for s in parts]),
            simes=np.concatenate([s.simes for s in parts]),
            fisher=np.concatenate([s.fisher for s in parts]),
        )


def _simulate(context: StudyContext, B: int, null: bool, decorrelate: bool, workers: Optional[int]) -> Dict[str, _Summary]:
    """Summaries per variant ("plain", and "decorr" when requested) over B replicates"""
    cfg = context.cfg

    def run(block):
        _, start, size = block
        draws = [context.draw(r, null) for r in range(start, start + size)]
        x = np.stack([d[0] for d in draws])
        out = {"plain": _Summary.from_pvalues(two_sided_pvalues(x), cfg.k)}
        if decorrelate:
            if context.redraw:
                y = np.stack([whiten(xr, sigma) for xr, sigma in draws])
            else:
                y = whiten(x, context.sigma)
            out["decorr"] = _Summary.from_pvalues(two_sided_pvalues(y), cfg.k)
        return out

    parts = parallel_map(run, blocks(B), workers)
    return {variant: _Summary.concat([p[variant] for p in parts]) for variant in parts[0]}


def _scores(method: str, summary: _Summary, cfg: SimStudyConfig, adaptive: AdaptiveSpec, null_heads) -> np.ndarray:
    """Per-replicate score of a method; smaller is more significant"""
    if method == "rtp":
        return -rtp_statistics(summary.heads)
    if method == "art":
        return art_pvalues(summary.heads, cfg.L)
    if method == "arta":
        return arta_min_p(summary.heads, adaptive)
    if method == "artp":
        return artp_pvalues(summary.heads, null_heads, adaptive)
    if method == "simes":
        return summary.simes
    if method == "fisher":
        return summary.fisher
    return sidak_pvalues(summary.heads[:, 0], cfg.L)


def _analytic_cutoffs(cfg: SimStudyConfig, adaptive: AdaptiveSpec) -> Dict[str, float]:
    """Score cutoffs at level alpha under independence"""
    cutoffs = {}
    for method in cfg.methods:
        if method == "rtp":
            cutoffs[method] = -rtp_critical_value(cfg.alpha, TruncationSpec(k=cfg.k, L=cfg.L))
        elif method == "arta":
            cutoffs[method] = arta_threshold(adaptive, cfg.alpha, cfg.seed)
        else:
            cutoffs[method] = cfg.alpha
    return cutoffs


def _row(cfg: SimStudyConfig, method: str, variant: str, rejected: np.ndarray) -> StudyRow:
    rate = float(np.mean(rejected))
    return StudyRow(
        method=method,
        variant=variant,
        rejection_rate=rate,
        se=float(np.sqrt(rate * (1.0 - rate) / rejected.size)),
        B=int(rejected.size),
        seed=cfg.seed,
        k=cfg.k,
        L=cfg.L,
        alpha=cfg.alpha,
    )


def _needs_null_heads(cfg: SimStudyConfig) -> bool:
    return "artp" in cfg.methods


def _artp_null_heads(cfg: SimStudyConfig, workers: Optional[int]) -> np.ndarray:
    return sample_head_batch(cfg.k, cfg.L, max(cfg.B, 1000), cfg.seed, workers, tag=TAG_ARTP_NULL)


def run_study(cfg: SimStudyConfig, workers: Optional[int] = None) -> StudyReport:
    """Rejection rate of every configured method at level alpha

    Correlated configurations report plain variants, plus decorrelated ones
    when ``decorrelate_flag`` is set.
    """
    if cfg.correlated:
        return _run_correlated(cfg, cfg.decorrelate_flag, workers)

    monitor = PerformanceMonitor()
    logger.info(f"Study start: k={cfg.k}, L={cfg.L}, B={cfg.B}, {cfg.effect_law.kind} effects, methods={cfg.methods}")
    adaptive = AdaptiveSpec.default(cfg.k, cfg.L)
    context = StudyContext(cfg)

    with monitor.stage("generate", cfg.B):
        summary = _simulate(context, cfg.B, null=False, decorrelate=False, workers=workers)["plain"]
    with monitor.stage("thresholds"):
        cutoffs = _analytic_cutoffs(cfg, adaptive)
        null_heads = _artp_null_heads(cfg, workers) if _needs_null_heads(cfg) else None

    rows = []
    with monitor.stage("evaluate", cfg.B * len(cfg.methods)):
        for method in cfg.methods:
            scores = _scores(method, summary, cfg, adaptive, null_heads)
            rows.append(_row(cfg, method, "plain", scores <= cutoffs[method]))

    performance = monitor.get_performance_summary()
    logger.info(f"Study done in {performance['total_seconds']}s: " + ", ".join(f"{r.method}={r.rejection_rate:.4f}" for r in rows))
    return StudyReport(rows=rows, performance=performance)


def run_correlated_study(cfg: SimStudyConfig, workers: Optional[int] = None) -> StudyReport:
    """Plain (resampling-calibrated) and decorrelated variants side by side"""
    if not cfg.correlated:
        raise DataError("A correlated study needs a random or file correlation source")
    return _run_correlated(cfg, True, workers)


def _empirical_reject(scores: np.ndarray, null_scores: np.ndarray, alpha: float) -> np.ndarray:
    """(1 + #{null <= score}) / (B + 1) <= alpha"""
    ordered = np.sort(null_scores)
    at_or_below = np.searchsorted(ordered, scores, side="right")
    return (1.0 + at_or_below) / (ordered.size + 1.0) <= alpha


def _run_correlated(cfg: SimStudyConfig, decorrelate: bool, workers: Optional[int]) -> StudyReport:
    monitor = PerformanceMonitor()
    source = cfg.correlation_source
    logger.info(
        f"Correlated study start: k={cfg.k}, L={cfg.L}, B={cfg.B}, source={source.kind}, "
        f"{cfg.effect_law.kind} effects, decorrelate={decorrelate}"
    )
    adaptive = AdaptiveSpec.default(cfg.k, cfg.L)

    with monitor.stage("correlation"):
        context = StudyContext(cfg)
    with monitor.stage("generate", cfg.B):
        observed = _simulate(context, cfg.B, null=False, decorrelate=decorrelate, workers=workers)
    with monitor.stage("null_calibration", cfg.B):
        null = _simulate(context, cfg.B, null=True, decorrelate=False, workers=workers)["plain"]
    with monitor.stage("thresholds"):
        cutoffs = _analytic_cutoffs(cfg, adaptive) if decorrelate else {}
        null_heads = _artp_null_heads(cfg, workers) if _needs_null_heads(cfg) else None

    rows = []
    with monitor.stage("evaluate", cfg.B * len(cfg.methods)):
        for method in cfg.methods:
            scores = _scores(method, observed["plain"], cfg, adaptive, null_heads)
            null_scores = _scores(method, null, cfg, adaptive, null_heads)
            rows.append(_row(cfg, method, "plain", _empirical_reject(scores, null_scores, cfg.alpha)))
        if decorrelate:
            for method in cfg.methods:
                scores = _scores(method, observed["decorr"], cfg, adaptive, null_heads)
                rows.append(_row(cfg, method, "decorr", scores <= cutoffs[method]))

    performance = monitor.get_performance_summary()
    logger.info(f"Correlated study done in {performance['total_seconds']}s")
    return StudyReport(rows=rows, performance=performance)


@dataclass(frozen=True)
class Preset:
    """A study table: its (k, L, effect) cells and the cell run by default"""

    name: str
    description: str
    cells: tuple
    default_cell: int
    base: dict
    needs_corr: bool = False


_INDEPENDENT_METHODS = ["rtp", "art", "artp", "arta", "simes"]
_GRID = tuple({"k": k, "L": L} for k in (10, 100) for L in (100, 200, 500))
_CORRELATED_GRID = (
    {"k": 4, "L": 4},
    {"k": 6, "L": 6},
    {"k": 10, "L": 10},
    {"k": 10, "L": 100},
    {"k": 100, "L": 100},
)

PRESETS: Dict[str, Preset] = {
    "table1": Preset(
        name="table1",
        description="Type I error under independence",
        cells=_GRID,
        default_cell=0,
        base={"effect_law": {"kind": "constant", "mu": 0.0}, "methods": _INDEPENDENT_METHODS},
    ),
    "table2": Preset(
        name="table2",
        description="Power under independence, constant effect 0.5 on every test",
        cells=_GRID,
        default_cell=0,
        base={"effect_law": {"kind": "constant", "mu": 0.5}, "methods": _INDEPENDENT_METHODS},
    ),
    "table3": Preset(
        name="table3",
        description="Power under independence, effects uniform on [0.05, 0.45]",
        cells=_GRID,
        default_cell=0,
        base={"effect_law": {"kind": "uniform", "mu_lo": 0.05, "mu_hi": 0.45}, "methods": _INDEPENDENT_METHODS},
    ),
    "table5": Preset(
        name="table5",
        description="Power under independence, effect 1.4 on a fraction of L = 1000 tests",
        cells=tuple(
            {"k": k, "L": 1000, "effect_law": {"kind": "sparse", "fraction": f, "mu": 1.4}}
            for k in (10, 50)
            for f in (0.025, 0.05, 0.1)
        ),
        default_cell=1,
        base={"methods": _INDEPENDENT_METHODS},
    ),
    "tabcor1": Preset(
        name="tabcor1",
        description="Type I error for randomly correlated statistics",
        cells=_CORRELATED_GRID,
        default_cell=2,
        base={
            "effect_law": {"kind": "constant", "mu": 0.0},
            "correlation_source": {"kind": "random", "rho": 0.5, "delta": 1.0},
            "methods": _INDEPENDENT_METHODS,
            "decorrelate_flag": True,
            "redraw_correlation": True,
        },
    ),
    "tabcor4": Preset(
        name="tabcor4",
        description="Power for randomly correlated statistics, effects uniform on [-0.45, 1.3]",
        cells=_CORRELATED_GRID,
        default_cell=2,
        base={
            "effect_law": {"kind": "uniform", "mu_lo": -0.45, "mu_hi": 1.3},
            "correlation_source": {"kind": "random", "rho": 0.5, "delta": 1.0},
            "methods": _INDEPENDENT_METHODS,
            "decorrelate_flag": True,
            "redraw_correlation": True,
        },
    ),
    "muopioid-power": Preset(
        name="muopioid-power",
        description="Power under a supplied 11-SNP LD matrix, effects uniform on [-0.5, 0.2]",
        cells=tuple({"k": k, "L": 11} for k in (5, 6, 7, 9, 11)),
        default_cell=2,
        base={
            "effect_law": {"kind": "uniform", "mu_lo": -0.5, "mu_hi": 0.2},
            "methods": _INDEPENDENT_METHODS,
            "decorrelate_flag": True,
        },
        needs_corr=True,
    ),
}


def preset_configs(
    name: str,
    B: Optional[int] = None,
    seed: int = 0,
    all_cells: bool = False,
    corr_path: Optional[str] = None,
    alpha: float = 0.05,
    resample_effects: bool = True,
) -> List[SimStudyConfig]:
    """Study configurations of a preset (its default cell, or all cells)"""
    if name not in PRESETS:
        raise KeyError(name)
    preset = PRESETS[name]
    cells = preset.cells if all_cells else (preset.cells[preset.default_cell],)

    configs = []
    for cell in cells:
        fields = {**preset.base, **cell, "seed": seed, "alpha": alpha, "resample_effects": resample_effects}
        if B is not None:
            fields["B"] = B
        if preset.needs_corr:
            fields["correlation_source"] = {"kind": "file", "path": corr_path}
        configs.append(SimStudyConfig(**fields))
    return configs
