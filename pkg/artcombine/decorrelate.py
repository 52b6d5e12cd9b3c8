"""Decorrelation of correlated test statistics by orthogonal transformation.

Statistics y ~ MVN(0, S) become independent standard normals via
y_e = H^T y with H = Q diag(lambda)^(-1/2) Q^T, the symmetric inverse square
root of S. Also builds LD correlation matrices from haplotype frequencies
and the rank-one-perturbed random correlation matrices used in studies.
"""

from typing import Optional, Sequence
import logging

import numpy as np
from scipy import special

from artcombine.config import settings
from artcombine.correlation import CorrelationMatrix
from artcombine.exceptions import DataError, NumericalError, UsageError
from artcombine.schemas import HaplotypeTable, PValueVector
from artcombine.utils.rng import TAG_CORRELATION, stream

logger = logging.getLogger(__name__)

SIDES = ("one", "two")
MONOMORPHIC_TOL = 1e-12


def whitening_matrix(sigma: CorrelationMatrix) -> np.ndarray:
    """H = Q diag(lambda)^(-1/2) Q^T"""
    values, vectors = sigma.eigen
    smallest = float(values[0])
    if smallest <= settings.whiten_min_eigenvalue:
        raise NumericalError(
            f"Correlation matrix is near-singular (smallest eigenvalue {smallest:.3e}); "
            f"supply a ridge to regularize it"
        )
    return (vectors / np.sqrt(values)) @ vectors.T


def whiten(y, sigma: CorrelationMatrix) -> np.ndarray:
    """y_e = H^T y; rows of a 2-D input are whitened independently"""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != sigma.order:
        raise DataError(f"{y.shape[-1]} statistics but a correlation matrix of order {sigma.order}")
    return y @ whitening_matrix(sigma)


def _check_sided(sided: str) -> None:
    if sided not in SIDES:
        raise UsageError(f"sided must be one of {SIDES}, got '{sided}'")


def statistics_from_pvalues(p, signs: Optional[Sequence[float]] = None, sided: str = "one") -> np.ndarray:
    """Normal scores s * Phi^-1(1 - p) (one-sided) or s * Phi^-1(1 - p/2) (two-sided)"""
    _check_sided(sided)
    p = np.asarray(p, dtype=float)
    if signs is None:
        logger.warning("No signs supplied for decorrelation; treating every statistic as positive")
        signs = np.ones_like(p)
    signs = np.asarray(signs, dtype=float)
    if signs.shape != p.shape:
        raise DataError(f"{signs.size} signs for {p.size} p-values")
    if not np.all(np.isin(signs, (-1.0, 1.0))):
        raise DataError("Signs must be +1 or -1")

    tail = p if sided == "one" else p / 2.0
    tail = np.clip(tail, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
    return signs * -special.ndtri(tail)


def pvalues_from_statistics(y, sided: str = "one") -> np.ndarray:
    """1 - Phi(y) (one-sided) or 2(1 - Phi(|y|)) (two-sided)"""
    _check_sided(sided)
    y = np.asarray(y, dtype=float)
    if sided == "one":
        return special.ndtr(-y)
    return np.minimum(1.0, 2.0 * special.ndtr(-np.abs(y)))


def decorrelate_statistics(y, sigma: CorrelationMatrix, sided: str = "one") -> np.ndarray:
    """p-values of whitened statistics"""
    return pvalues_from_statistics(whiten(y, sigma), sided)


def decorrelate_pvalues(
    p: PValueVector,
    sigma: CorrelationMatrix,
    signs: Optional[Sequence[float]] = None,
    sided: str = "one",
) -> PValueVector:
    """Independent p-values from correlated ones

    Args:
        p: all L p-values, in the order of the matrix rows
        sigma: correlation of the underlying statistics
        signs: +1/-1 direction of each statistic; all +1 when omitted
        sided: "one" for upper-tail p-values, "two" for two-sided ones

    Returns:
        PValueVector of the same length, suitable for any independence combiner

    Raises:
        DataError: length mismatch or invalid signs
        NumericalError: near-singular correlation matrix
    """
    if p.is_head:
        raise UsageError(f"Decorrelation needs all {p.L} p-values, got {p.count}")
    if p.L != sigma.order:
        raise DataError(f"{p.L} p-values but a correlation matrix of order {sigma.order}")

    y = statistics_from_pvalues(p.values, signs, sided)
    decorrelated = decorrelate_statistics(y, sigma, sided)
    logger.info(f"Decorrelated {p.L} {sided}-sided p-values")
    return PValueVector(values=decorrelated.tolist(), L=p.L)


def ld_matrix_from_haplotypes(h: HaplotypeTable, snp_names: Optional[Sequence[str]] = None) -> CorrelationMatrix:
    """r_ij = D_ij / sqrt(p_i (1 - p_i) p_j (1 - p_j)) with D_ij = P_ij - p_i p_j"""
    patterns = np.array([[int(c) for c in row.pattern] for row in h.rows], dtype=float)
    freq = np.array([row.frequency for row in h.rows], dtype=float)

    p = freq @ patterns
    joint = patterns.T @ (patterns * freq[:, None])
    monomorphic = np.flatnonzero((p <= MONOMORPHIC_TOL) | (p >= 1.0 - MONOMORPHIC_TOL))
    if monomorphic.size:
        j = int(monomorphic[0])
        name = snp_names[j] if snp_names is not None else f"#{j + 1}"
        raise DataError(f"SNP {name} is monomorphic (allele frequency {p[j]:.6g}); LD correlation is undefined")

    d = joint - np.outer(p, p)
    scale = np.sqrt(p * (1.0 - p))
    r = np.clip(d / np.outer(scale, scale), -1.0, 1.0)
    r = (r + r.T) / 2.0
    np.fill_diagonal(r, 1.0)
    logger.info(f"Built {h.n_snps}x{h.n_snps} LD correlation from {len(h.rows)} haplotypes")
    return CorrelationMatrix(r)


def random_correlation(L: int, rho: float, delta: float, seed: int, *key: int) -> CorrelationMatrix:
    """Equicorrelation rho plus a rank-one perturbation u u^T, u ~ U(-delta, delta)

    rho_ij = (rho + u_i u_j) / (sqrt(1 + u_i^2) sqrt(1 + u_j^2)). Extra ``key``
    integers select further independent draws for the same seed, e.g. one
    matrix per study replicate.
    """
    if L < 1:
        raise UsageError(f"L must be positive, got {L}")
    if delta <= 0:
        raise UsageError(f"delta must be positive, got {delta}")
    lower = -1.0 / (L - 1) if L > 1 else -1.0
    if not lower < rho < 1.0:
        raise UsageError(f"rho must lie in ({lower:.4g}, 1) for L = {L}, got {rho}")

    u = stream(seed, TAG_CORRELATION, *key).uniform(-delta, delta, size=L)
    covariance = rho * np.ones((L, L)) + (1.0 - rho) * np.eye(L) + np.outer(u, u)
    return CorrelationMatrix.from_covariance(covariance)
