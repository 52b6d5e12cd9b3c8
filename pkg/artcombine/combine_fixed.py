"""Fixed-truncation and classical combiners.

Fisher, Sidak, Bonferroni and Simes, the exact rank truncated product (RTP)
distribution and the augmented rank truncation (ART) statistic. Products of
p-values are always accumulated as sums of logs.
"""

from typing import Dict, Tuple
import logging

import numpy as np
from scipy import integrate, optimize, special
from scipy.stats import qmc

from artcombine import numkernel
from artcombine.config import settings
from artcombine.exceptions import DomainError, NumericalError, UsageError
from artcombine.schemas import CombinedResult, Method, PValueVector, TruncationSpec
from artcombine.utils.rng import TAG_RTP_NULL, TAG_RTP_QMC, stream

logger = logging.getLogger(__name__)

# Scrambling seed of the RTP quadrature fallback
QMC_SEED = 0


def _diagnostics(p: PValueVector) -> Dict:
    return {"clamped": True} if p.clamped else {}


def _require_full(p: PValueVector, method: str) -> np.ndarray:
    if p.is_head:
        raise UsageError(f"{method} needs all {p.L} p-values, got {p.count}")
    return np.asarray(p.values, dtype=float)


def _head(p: PValueVector, spec: TruncationSpec) -> np.ndarray:
    if spec.L != p.L:
        raise UsageError(f"Truncation L = {spec.L} does not match the {p.L} declared tests")
    if spec.k > p.count:
        raise UsageError(f"k = {spec.k} exceeds the {p.count} supplied p-values")
    return np.asarray(p.head(spec.k), dtype=float)


def fisher(p: PValueVector) -> CombinedResult:
    """T = -2 sum ln p_i against chi-square with 2L degrees of freedom"""
    values = _require_full(p, "Fisher")
    statistic = -2.0 * float(np.sum(np.log(values)))
    p_combined = numkernel.gamma_sf(statistic / 2.0, p.L)
    return CombinedResult(method=Method.FISHER, statistic=statistic, p_combined=p_combined, diagnostics=_diagnostics(p))


def sidak_min(p1: float, L: int) -> float:
    """1 - (1 - p1)^L"""
    if not 0.0 <= p1 <= 1.0:
        raise DomainError(f"Smallest p-value must lie in [0, 1], got {p1}")
    return float(-np.expm1(L * np.log1p(-p1))) if p1 < 1.0 else 1.0


def bonferroni_min(p1: float, L: int) -> float:
    if not 0.0 <= p1 <= 1.0:
        raise DomainError(f"Smallest p-value must lie in [0, 1], got {p1}")
    return min(1.0, L * p1)


def simes(p: PValueVector) -> CombinedResult:
    """min over i of L p_(i) / i"""
    ordered = np.sort(_require_full(p, "Simes"))
    adjusted = p.L * ordered / np.arange(1, p.L + 1)
    i = int(np.argmin(adjusted))
    p_combined = min(1.0, float(adjusted[i]))
    diagnostics = {**_diagnostics(p), "argmin_rank": i + 1}
    return CombinedResult(method=Method.SIMES, statistic=p_combined, p_combined=p_combined, diagnostics=diagnostics)


def _rtp_integrand(u, z: float, exponent: int, shape: int, k: int, L: int):
    x = special.betaincinv(k + 1, L - k, u)
    with np.errstate(divide="ignore"):
        arg = z + exponent * np.log(x)
    return special.gammaincc(shape, np.maximum(arg, 0.0))


def _rtp_lower_mass(z: float, exponent: int, k: int, L: int) -> float:
    """Pr(X <= exp(-z / exponent)) for X ~ Beta(k+1, L-k); the integrand is 1 there"""
    return float(special.betainc(k + 1, L - k, np.exp(-z / exponent)))


def _rtp_qmc(z: float, k: int, L: int, seed: int = QMC_SEED) -> float:
    n = settings.qmc_fallback_points
    u = qmc.Halton(d=1, scramble=True, seed=stream(seed, TAG_RTP_QMC, k, L)).random(n)[:, 0]
    return float(np.mean(_rtp_integrand(u, z, k, k, k, L)))


def rtp_tail(z: float, k: int, L: int, seed: int = QMC_SEED) -> Tuple[float, Dict]:
    """Pr(-ln W_k >= z) for the product W_k of the k smallest of L uniforms

    With P_(k+1) = X ~ Beta(k+1, L-k), -ln W_k = Y - k ln X for an
    independent Y ~ Gamma(k), so the tail is E[Q(k, z + k ln X)]. ``seed`` only
    matters when quadrature fails and the scrambled QMC fallback runs.
    """
    if k == L:
        return numkernel.gamma_sf(z, L), {"path": "gamma"}
    if k == 1:
        return sidak_min(float(np.exp(-z)), L), {"path": "sidak"}
    if z <= 0:
        return 1.0, {"path": "closed"}

    u0 = _rtp_lower_mass(z, k, k, L)
    if u0 >= 1.0:
        return 1.0, {"path": "closed"}

    tol = settings.quad_abs_tol
    result = integrate.quad(
        _rtp_integrand, u0, 1.0, args=(z, k, k, k, L), epsabs=tol, limit=settings.quad_limit, full_output=1
    )
    value, error = result[0], result[1]
    if len(result) > 3 or error > tol:
        logger.info(f"Quadrature for RTP (k={k}, L={L}, z={z:.4g}) unreliable (error {error:.2e}); using QMC")
        p = _rtp_qmc(z, k, L, seed)
        return float(np.clip(p, 0.0, 1.0)), {"path": "qmc", "qmc_points": settings.qmc_fallback_points, "qmc_seed": seed}

    p = float(np.clip(u0 + value, 0.0, 1.0))
    return p, {"path": "quadrature", "quad_error": float(error)}


def rtp_exact(p: PValueVector, spec: TruncationSpec) -> CombinedResult:
    """Exact RTP combined p-value of the k smallest p-values"""
    head = _head(p, spec)
    z = -float(np.sum(np.log(head)))
    p_combined, info = rtp_tail(z, spec.k, spec.L)
    logger.debug(f"RTP k={spec.k}, L={spec.L}: z={z:.6g}, p={p_combined:.6g} via {info['path']}")
    return CombinedResult(method=Method.RTP, statistic=z, p_combined=p_combined, diagnostics={**_diagnostics(p), **info})


def rtp_exact_pair(w: float, spec: TruncationSpec) -> Tuple[float, float]:
    """(Pr(W_k <= w), Pr(W_{k+1} <= w)) from one vector-valued quadrature

    Both products are expressed through X = P_(k+1) ~ Beta(k+1, L-k):
    W_k = X^k G and W_{k+1} = X^(k+1) G with -ln G ~ Gamma(k).
    """
    k, L = spec.k, spec.L
    if k + 1 > L:
        raise UsageError(f"Pair evaluation needs k + 1 <= L, got k = {k}, L = {L}")
    if not 0.0 < w <= 1.0:
        raise DomainError(f"Product value must lie in (0, 1], got {w}")

    z = -float(np.log(w))
    u0 = _rtp_lower_mass(z, k, k, L)
    u1 = _rtp_lower_mass(z, k + 1, k, L)
    if u0 >= 1.0:
        return 1.0, 1.0

    def integrand(u):
        return np.array([_rtp_integrand(u, z, k, k, k, L), _rtp_integrand(u, z, k + 1, k, k, L)])

    points = [u1] if u0 < u1 < 1.0 else None
    value, error = integrate.quad_vec(integrand, u0, 1.0, epsabs=settings.quad_abs_tol, limit=settings.quad_limit, points=points)
    if error > 10 * settings.quad_abs_tol:
        raise NumericalError(f"Paired RTP quadrature did not converge (error {error:.2e})")

    first, second = np.clip(u0 + value, 0.0, 1.0)
    return float(first), float(second)


def rtp_critical_value(alpha: float, spec: TruncationSpec) -> float:
    """z* with Pr(-ln W_k >= z*) = alpha under the null"""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    k, L = spec.k, spec.L
    if k == L:
        return numkernel.gamma_inv_sf(alpha, L)
    if k == 1:
        return float(-np.log(-np.expm1(np.log1p(-alpha) / L)))

    def excess(z):
        return rtp_tail(z, k, L)[0] - alpha

    hi = float(k)
    while excess(hi) > 0:
        hi *= 2.0
        if hi > 1e6:
            raise NumericalError(f"Could not bracket the RTP critical value for alpha = {alpha}")
    try:
        return float(optimize.brentq(excess, 0.0, hi, xtol=1e-10))
    except (ValueError, RuntimeError) as e:
        raise NumericalError(f"RTP critical value root finding failed: {e}")


def rtp_monte_carlo(z: float, spec: TruncationSpec, n: int, seed: int) -> CombinedResult:
    """Plain average of the RTP integrand over n uniforms"""
    if n < 1:
        raise UsageError(f"Monte-Carlo sample size must be positive, got {n}")
    k, L = spec.k, spec.L
    if k == L:
        draws = stream(seed, TAG_RTP_NULL).gamma(L, size=n)
        values = (draws >= z).astype(float)
    else:
        u = 1.0 - stream(seed, TAG_RTP_NULL).random(n)
        values = _rtp_integrand(u, z, k, k, k, L)
    estimate = float(values.mean())
    se = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    return CombinedResult(
        method=Method.RTP, statistic=z, p_combined=estimate, diagnostics={"path": "monte_carlo", "n": n, "se": se}
    )


def art_lambda(k: int, L: int) -> float:
    """Gamma shape (k-1)(psi(L+1) - psi(k)) of the transformed k-th p-value"""
    return (k - 1) * (numkernel.digamma(L + 1) - numkernel.digamma(k))


def art(p: PValueVector, spec: TruncationSpec) -> CombinedResult:
    """Augmented rank truncation: A_k against Gamma(k + lambda - 1)"""
    head = _head(p, spec)
    k, L = spec.k, spec.L
    if k == 1:
        p_combined = sidak_min(float(head[0]), L)
        return CombinedResult(
            method=Method.ART, statistic=float(head[0]), p_combined=p_combined,
            diagnostics={**_diagnostics(p), "path": "sidak"},
        )

    lam = art_lambda(k, L)
    statistic = float(art_statistics(head[None, :], L)[0])
    p_combined = numkernel.gamma_sf(statistic, k + lam - 1)
    return CombinedResult(
        method=Method.ART, statistic=statistic, p_combined=p_combined,
        diagnostics={**_diagnostics(p), "lambda": lam, "shape": k + lam - 1},
    )


def art_statistics(heads: np.ndarray, L: int) -> np.ndarray:
    """A_k for each row of sorted heads (k >= 2)"""
    heads = np.asarray(heads, dtype=float)
    k = heads.shape[1]
    lam = art_lambda(k, L)
    logs = np.log(heads)
    spacing = np.sum(logs[:, -1:] - logs[:, :-1], axis=1)
    tail = np.maximum(special.betainc(k, L - k + 1, heads[:, -1]), np.finfo(float).tiny)
    return spacing + special.gammainccinv(lam, tail)


def art_pvalues(heads: np.ndarray, L: int) -> np.ndarray:
    """ART p-values for a (B, k) array of sorted heads"""
    heads = np.asarray(heads, dtype=float)
    k = heads.shape[1]
    if k == 1:
        return sidak_pvalues(heads[:, 0], L)
    return special.gammaincc(k + art_lambda(k, L) - 1, art_statistics(heads, L))


def rtp_statistics(heads: np.ndarray) -> np.ndarray:
    """-ln W_k per row"""
    return -np.sum(np.log(np.asarray(heads, dtype=float)), axis=1)


def simes_pvalues(sorted_rows: np.ndarray, L: int) -> np.ndarray:
    rows = np.asarray(sorted_rows, dtype=float)
    return np.minimum(1.0, np.min(L * rows / np.arange(1, rows.shape[1] + 1), axis=1))


def fisher_pvalues(rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=float)
    return special.gammaincc(rows.shape[1], -np.sum(np.log(rows), axis=1))


def sidak_pvalues(p1: np.ndarray, L: int) -> np.ndarray:
    p1 = np.asarray(p1, dtype=float)
    with np.errstate(divide="ignore"):
        return -np.expm1(L * np.log1p(-p1))
