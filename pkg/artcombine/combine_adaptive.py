"""Adaptive truncation: analytic ART-A and empirical aRTP.

ART-A maps the sorted p-values to independent uniforms Z_i, forms weighted
partial sums of their normal scores and corrects the minimum marginal
p-value over the candidate truncation points with the joint normal law of
the partial sums. aRTP gets the same correction from a simulated null.
"""

from typing import Optional, Sequence, Tuple, Union
import logging

import numpy as np
from scipy import optimize, special

from artcombine import numkernel
from artcombine.config import settings
from artcombine.correlation import CorrelationMatrix
from artcombine.exceptions import DataError, NumericalError, UsageError
from artcombine.orderstats import sample_head_batch
from artcombine.schemas import AdaptiveSpec, ArtaStatistic, CombinedResult, Method, MvnResult, MvnSpec, PValueVector
from artcombine.utils.rng import TAG_ARTP_NULL

logger = logging.getLogger(__name__)

MIN_RESAMPLES = 1000


def equal_weights(k: int) -> np.ndarray:
    return np.ones(k)


def sparse_signal_weights(k: int) -> np.ndarray:
    """lambda_j = sqrt(k / j), emphasizing sums with few terms"""
    return np.sqrt(k / np.arange(1, k + 1))


def _log_z(heads: np.ndarray, L: int) -> np.ndarray:
    """ln Z_i along the last axis of sorted heads"""
    with np.errstate(divide="ignore", invalid="ignore"):
        log_survival = np.log1p(-heads)
        previous = np.concatenate([np.zeros(heads.shape[:-1] + (1,)), log_survival[..., :-1]], axis=-1)
        exponents = L - np.arange(heads.shape[-1])
        log_z = exponents * (log_survival - previous)
    # A previous value of exactly 1 leaves the conditional law degenerate
    return np.where(np.isneginf(previous), 0.0, log_z)


def z_transform(p_sorted: Union[PValueVector, Sequence[float]], L: Optional[int] = None) -> np.ndarray:
    """Z_1 = (1 - p_(1))^L, Z_i = ((1 - p_(i)) / (1 - p_(i-1)))^(L-i+1)"""
    if isinstance(p_sorted, PValueVector):
        L = p_sorted.L if L is None else L
        values = np.asarray(p_sorted.sorted_values(), dtype=float)
    else:
        values = np.asarray(p_sorted, dtype=float)
    if L is None or values.shape[-1] > L:
        raise UsageError(f"z_transform needs L >= {values.shape[-1]}, got {L}")
    if np.any(np.diff(values, axis=-1) < 0):
        raise DataError("z_transform needs p-values sorted ascending")
    return np.exp(_log_z(values, L))


def _partial_sums(heads: np.ndarray, weights: np.ndarray, L: int) -> Tuple[np.ndarray, bool]:
    """S_j = sum_{i<=j} lambda_i Phi^-1(Z_i); large values are evidence against the null"""
    tail = -np.expm1(_log_z(heads, L))
    eps = settings.z_clamp
    clamped = bool(np.any((tail < eps) | (tail > 1.0 - eps)))
    tail = np.clip(tail, eps, 1.0 - eps)
    scores = -special.ndtri(tail)
    return np.cumsum(weights * scores, axis=-1), clamped


def _marginal_ps(sums: np.ndarray, spec: AdaptiveSpec) -> np.ndarray:
    ks = np.asarray(spec.candidate_ks) - 1
    weights = np.asarray(spec.weights[: spec.max_k], dtype=float)
    sigma = np.sqrt(np.cumsum(weights ** 2))[ks]
    return special.ndtr(-sums[..., ks] / sigma)


def arta_statistic(p_sorted: PValueVector, spec: AdaptiveSpec) -> ArtaStatistic:
    """Partial sums, candidate marginal p-values and their minimum"""
    if p_sorted.count < spec.max_k:
        raise UsageError(f"Largest candidate k = {spec.max_k} exceeds the {p_sorted.count} supplied p-values")
    if p_sorted.L != spec.L:
        raise UsageError(f"Adaptive L = {spec.L} does not match the {p_sorted.L} declared tests")

    head = np.asarray(p_sorted.head(spec.max_k), dtype=float)
    weights = np.asarray(spec.weights[: spec.max_k], dtype=float)
    sums, clamped = _partial_sums(head, weights, spec.L)
    if clamped:
        logger.warning(f"Transformed uniforms clamped to [{settings.z_clamp}, 1 - {settings.z_clamp}]")

    marginal = _marginal_ps(sums, spec)
    i = int(np.argmin(marginal))
    return ArtaStatistic(
        partial_sums=sums.tolist(),
        marginal_ps=marginal.tolist(),
        min_p=float(marginal[i]),
        argmin_k=spec.candidate_ks[i],
        z_clamped=clamped,
    )


def candidate_correlation(spec: AdaptiveSpec) -> CorrelationMatrix:
    """Correlation of standardized partial sums at the candidate truncation points"""
    weights = np.asarray(spec.weights[: spec.max_k], dtype=float)
    variances = np.cumsum(weights ** 2)[np.asarray(spec.candidate_ks) - 1]
    shared = np.minimum.outer(variances, variances)
    corr = shared / np.sqrt(np.outer(variances, variances))
    np.fill_diagonal(corr, 1.0)
    return CorrelationMatrix(corr)


def _adjust_min_p(min_p: float, corr: CorrelationMatrix, target_se: float, seed: int) -> Tuple[float, Optional[MvnResult]]:
    d = corr.order
    if d == 1 or min_p <= 0.0:
        return min_p, None
    if min_p >= 1.0:
        return 1.0, None

    bound = float(-special.ndtri(min_p))
    mvn = numkernel.mvn_rectangle(
        MvnSpec(dimension=d, correlation=corr, upper_bounds=[bound] * d, target_se=target_se), seed
    )
    p = float(np.clip(1.0 - mvn.probability, min_p, min(1.0, d * min_p)))
    return p, mvn


def arta_pvalue(p_sorted: PValueVector, spec: AdaptiveSpec, seed: int = 0) -> CombinedResult:
    """ART-A: selection-corrected minimum marginal p-value over candidate k"""
    stat = arta_statistic(p_sorted, spec)
    p_combined, mvn = _adjust_min_p(stat.min_p, candidate_correlation(spec), spec.mvn_target_se, seed)

    diagnostics = {"min_p": stat.min_p, "argmin_k": stat.argmin_k, "candidates": len(spec.candidate_ks)}
    if stat.z_clamped:
        diagnostics["z_clamped"] = True
    if p_sorted.clamped:
        diagnostics["clamped"] = True
    if mvn is not None:
        diagnostics.update({"mvn_se": mvn.se_estimate, "mvn_points": mvn.n_points, "mvn_converged": mvn.converged})

    logger.debug(f"ART-A min_p={stat.min_p:.6g} at k={stat.argmin_k}, p={p_combined:.6g}")
    return CombinedResult(method=Method.ARTA, statistic=stat.min_p, p_combined=p_combined, diagnostics=diagnostics)


def arta_threshold(spec: AdaptiveSpec, alpha: float, seed: int = 0) -> float:
    """min_p threshold m* at which the ART-A p-value equals alpha"""
    if not 0.0 < alpha < 1.0:
        raise UsageError(f"alpha must lie in (0, 1), got {alpha}")
    corr = candidate_correlation(spec)
    d = corr.order
    if d == 1:
        return alpha

    def excess(m):
        return _adjust_min_p(m, corr, spec.mvn_target_se, seed)[0] - alpha

    lo, hi = alpha / d, alpha
    if excess(lo) >= 0:
        return lo
    if excess(hi) <= 0:
        return hi
    try:
        threshold = float(optimize.brentq(excess, lo, hi, xtol=alpha * 1e-6))
    except (ValueError, RuntimeError) as e:
        raise NumericalError(f"ART-A threshold root finding failed: {e}")
    logger.info(f"ART-A threshold at alpha={alpha}: min_p <= {threshold:.6g} over {d} candidates")
    return threshold


def arta_min_p(heads: np.ndarray, spec: AdaptiveSpec) -> np.ndarray:
    """Row-wise minimum marginal p-value for a (B, >= max_k) array of sorted heads"""
    heads = np.asarray(heads, dtype=float)[:, : spec.max_k]
    weights = np.asarray(spec.weights[: spec.max_k], dtype=float)
    sums, _ = _partial_sums(heads, weights, spec.L)
    return _marginal_ps(sums, spec).min(axis=1)


def gamma_method_pvalue(z: Sequence[float], weights: Sequence[float]) -> float:
    """1 - G_{sum lambda}(sum G^-1_{lambda_i}(Z_i)), the exact gamma-sum transform"""
    z, weights = np.asarray(z, dtype=float), np.asarray(weights, dtype=float)
    if z.shape != weights.shape:
        raise UsageError(f"{z.size} transformed uniforms but {weights.size} weights")
    total = float(np.sum(special.gammaincinv(weights, np.clip(z, 0.0, 1.0))))
    return numkernel.gamma_sf(total, float(weights.sum()))


def _rtp_partial_statistics(heads: np.ndarray, spec: AdaptiveSpec) -> np.ndarray:
    """-ln W_k at each candidate k, one column per candidate"""
    partial = np.cumsum(-np.log(heads[:, : spec.max_k]), axis=1)
    return partial[:, np.asarray(spec.candidate_ks) - 1]


def _upper_counts(null: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Per column, number of null entries >= each value"""
    counts = np.empty(values.shape, dtype=np.int64)
    for j in range(null.shape[1]):
        ordered = np.sort(null[:, j])
        counts[:, j] = ordered.size - np.searchsorted(ordered, values[:, j], side="left")
    return counts


def artp_min_p(heads: np.ndarray, null_heads: np.ndarray, spec: AdaptiveSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Empirical minimum p over candidates for observed rows and for the null rows

    Null rows are ranked against the null matrix itself, observed rows with
    one added to numerator and denominator.
    """
    null_stats = _rtp_partial_statistics(np.asarray(null_heads, dtype=float), spec)
    obs_stats = _rtp_partial_statistics(np.asarray(heads, dtype=float), spec)
    B = null_stats.shape[0]

    null_min = (_upper_counts(null_stats, null_stats) / B).min(axis=1)
    obs_min = ((1.0 + _upper_counts(null_stats, obs_stats)) / (B + 1.0)).min(axis=1)
    return obs_min, null_min


def artp_pvalues(heads: np.ndarray, null_heads: np.ndarray, spec: AdaptiveSpec) -> np.ndarray:
    """aRTP p-values of observed rows against one shared null matrix"""
    obs_min, null_min = artp_min_p(heads, null_heads, spec)
    ordered = np.sort(null_min)
    at_or_below = np.searchsorted(ordered, obs_min, side="right")
    return (1.0 + at_or_below) / (ordered.size + 1.0)


def artp_empirical(p_sorted: PValueVector, spec: AdaptiveSpec, B: int, seed: int = 0) -> CombinedResult:
    """aRTP by single-layer resampling of B null heads

    Observed and null rows are ranked together within each candidate column,
    so the observed row is one of B + 1 exchangeable rows under the null.
    """
    if B < MIN_RESAMPLES:
        raise UsageError(f"aRTP needs at least {MIN_RESAMPLES} resamples, got B = {B}")
    if p_sorted.count < spec.max_k:
        raise UsageError(f"Largest candidate k = {spec.max_k} exceeds the {p_sorted.count} supplied p-values")
    if p_sorted.L != spec.L:
        raise UsageError(f"Adaptive L = {spec.L} does not match the {p_sorted.L} declared tests")

    head = np.asarray(p_sorted.head(spec.max_k), dtype=float)[None, :]
    null = sample_head_batch(spec.max_k, spec.L, B, seed, tag=TAG_ARTP_NULL)
    null_stats = _rtp_partial_statistics(null, spec)
    obs_stats = _rtp_partial_statistics(head, spec)

    obs_counts = _upper_counts(null_stats, obs_stats)
    obs_ps = (1.0 + obs_counts[0]) / (B + 1.0)
    # Null rows also see the observed row in their reference set
    null_counts = _upper_counts(null_stats, null_stats) + (obs_stats >= null_stats)
    null_min = (null_counts / (B + 1.0)).min(axis=1)

    i = int(np.argmin(obs_ps))
    obs_min = float(obs_ps[i])
    p_combined = (1.0 + np.count_nonzero(null_min <= obs_min)) / (B + 1.0)
    diagnostics = {
        "min_p": obs_min,
        "argmin_k": spec.candidate_ks[i],
        "B": B,
        "se": float(np.sqrt(p_combined * (1.0 - p_combined) / B)),
    }
    return CombinedResult(method=Method.ARTP, statistic=obs_min, p_combined=float(p_combined), diagnostics=diagnostics)
