"""Uniform order statistics: head sampler, RTP null sampler, decorrelation toolkit"""

from typing import Optional, Tuple
import logging

import numpy as np
from scipy import special, stats

from artcombine.exceptions import UsageError
from artcombine.schemas import DecorrelatedHead, HeadSample
from artcombine.utils.rng import TAG_HEAD, TAG_RTP_NULL, TAG_SHUFFLE, blockwise, stream

logger = logging.getLogger(__name__)


def _check_kL(k: int, L: int) -> None:
    if not 1 <= k <= L:
        raise UsageError(f"Need 1 <= k <= L, got k = {k}, L = {L}")


def head_from_uniforms(u: np.ndarray, L: int) -> np.ndarray:
    """P_(j) = 1 - prod_{i<=j} U_i^(1/(L-i+1)) along the last axis"""
    u = np.asarray(u, dtype=float)
    k = u.shape[-1]
    _check_kL(k, L)
    steps = np.log(u) / (L - np.arange(k))
    return -np.expm1(np.cumsum(steps, axis=-1))


def sample_head(k: int, L: int, seed: int) -> HeadSample:
    """k smallest of L iid uniforms, drawn step-wise in k draws"""
    _check_kL(k, L)
    u = 1.0 - stream(seed, TAG_HEAD).random(k)
    values = head_from_uniforms(u, L)
    with np.errstate(divide="ignore"):
        log_product = float(np.sum(np.log(values)))
    return HeadSample(k=k, L=L, values=values.tolist(), log_product=log_product)


def sample_head_batch(
    k: int, L: int, B: int, seed: int, workers: Optional[int] = None, tag: int = TAG_HEAD
) -> np.ndarray:
    """(B, k) array of sorted heads; identical for any worker count"""
    _check_kL(k, L)

    def draw(rng, size):
        return head_from_uniforms(1.0 - rng.random((size, k)), L)

    return blockwise(draw, B, seed, tag, workers)


def sample_rtp_null(k: int, L: int, B: int, seed: int, workers: Optional[int] = None) -> np.ndarray:
    """B null draws of -ln W_k as Y - k ln X, X ~ Beta(k+1, L-k), Y ~ Gamma(k)"""
    _check_kL(k, L)

    def draw(rng, size):
        if k == L:
            return rng.gamma(L, size=size)
        x = rng.beta(k + 1, L - k, size=size)
        y = rng.gamma(k, size=size)
        return y - k * np.log(x)

    return blockwise(draw, B, seed, TAG_RTP_NULL, workers)


def unordered_min_correlation(k: int, L: int) -> float:
    """Correlation of two of the k smallest of L uniforms taken in random order"""
    _check_kL(k, L)
    return 3.0 * (L - k) / (2.0 + k * (L - 2) + 5.0 * L)


def scale_factor_sigma(k: int, L: int) -> float:
    """Factor on the k-th smallest value that removes the unordered correlation"""
    _check_kL(k, L)
    return (2.0 * L - k + 3.0 + np.sqrt((k + 1.0) * (L + 1.0) * (L - k + 1.0))) / (4.0 + 2.0 * L)


def decorrelate_head(h: HeadSample, seed: int) -> DecorrelatedHead:
    """Scale the k-th value by sigma, then shuffle"""
    values = np.asarray(h.values, dtype=float)
    values[-1] *= scale_factor_sigma(h.k, h.L)
    perm = stream(seed, TAG_SHUFFLE).permutation(h.k)
    position = int(np.flatnonzero(perm == h.k - 1)[0])
    return DecorrelatedHead(k=h.k, L=h.L, values=values[perm].tolist(), scaled_position=position)


def decorrelate_head_batch(heads: np.ndarray, L: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Row-wise decorrelate_head; returns (values, scaled positions)"""
    heads = np.asarray(heads, dtype=float)
    B, k = heads.shape
    scaled = heads.copy()
    scaled[:, -1] *= scale_factor_sigma(k, L)

    keys = blockwise(lambda rng, size: rng.random((size, k)), B, seed, TAG_SHUFFLE)
    perm = np.argsort(keys, axis=1)
    values = np.take_along_axis(scaled, perm, axis=1)
    positions = np.argmax(perm == k - 1, axis=1)
    return values, positions


def _mixture_cdf(x: np.ndarray, k: int, L: int) -> np.ndarray:
    i = np.arange(1, k + 1).reshape((k,) + (1,) * x.ndim)
    return special.betainc(i, L - i + 1, x[None, ...]).mean(axis=0)


def uniformize_head(x, k: int, L: int, scaled_position: Optional[int] = None) -> np.ndarray:
    """U = (1/k) sum_i I_x(i, L-i+1) per entry, after undoing the sigma scale

    ``scaled_position`` defaults to the last entry, the unshuffled k-th value.
    """
    _check_kL(k, L)
    x = np.array(x, dtype=float)
    if x.shape != (k,):
        raise UsageError(f"Expected {k} values, got shape {x.shape}")
    position = k - 1 if scaled_position is None else scaled_position
    x[position] /= scale_factor_sigma(k, L)
    return _mixture_cdf(np.clip(x, 0.0, 1.0), k, L)


def uniformize_head_batch(values: np.ndarray, positions: np.ndarray, L: int) -> np.ndarray:
    values = np.array(values, dtype=float)
    B, k = values.shape
    rows = np.arange(B)
    values[rows, positions] /= scale_factor_sigma(k, L)
    return _mixture_cdf(np.clip(values, 0.0, 1.0), k, L)


def histogram_independence_test(first: np.ndarray, second: np.ndarray, bins: int = 10) -> Tuple[float, float]:
    """Chi-square independence test on a bins x bins histogram of two samples in [0,1]"""
    counts, _, _ = np.histogram2d(first, second, bins=bins, range=[[0.0, 1.0], [0.0, 1.0]])
    statistic, p_value, _, _ = stats.chi2_contingency(counts + 0.0)
    logger.debug(f"Independence chi-square {statistic:.2f}, p={p_value:.3g}")
    return float(statistic), float(p_value)
