"""Special functions and multivariate-normal rectangle probabilities.

The scalar functions are thin, domain-checked wrappers over
``scipy.special``; they accept scalars or arrays and return the same shape.
Upper-tail variants (``*_sf``) are provided wherever a downstream formula
needs ``1 - F`` so that small tail probabilities keep full relative accuracy.
"""

import logging

import numpy as np
from scipy import special
from scipy.stats import qmc

from artcombine.config import settings
from artcombine.exceptions import DomainError
from artcombine.schemas import MvnResult, MvnSpec
from artcombine.utils.rng import TAG_MVN, stream

logger = logging.getLogger(__name__)

_CHOLESKY_JITTER = 1e-10
_FIRST_BATCH_POINTS = 2 ** 10


def _as_output(values: np.ndarray):
    return values.item() if np.ndim(values) == 0 else values


def _require(condition, message: str) -> None:
    if not np.all(condition):
        raise DomainError(message)


def gamma_cdf(x, shape):
    """Regularized lower incomplete gamma P(shape, x)"""
    x, shape = np.asarray(x, dtype=float), np.asarray(shape, dtype=float)
    _require(x >= 0, f"gamma_cdf needs x >= 0, got {x}")
    _require(shape > 0, f"gamma_cdf needs shape > 0, got {shape}")
    return _as_output(special.gammainc(shape, x))


def gamma_sf(x, shape):
    """Regularized upper incomplete gamma Q(shape, x) = 1 - gamma_cdf"""
    x, shape = np.asarray(x, dtype=float), np.asarray(shape, dtype=float)
    _require(x >= 0, f"gamma_sf needs x >= 0, got {x}")
    _require(shape > 0, f"gamma_sf needs shape > 0, got {shape}")
    return _as_output(special.gammaincc(shape, x))


def gamma_inv_cdf(p, shape):
    p, shape = np.asarray(p, dtype=float), np.asarray(shape, dtype=float)
    _require((p >= 0) & (p < 1), f"gamma_inv_cdf needs 0 <= p < 1, got {p}")
    _require(shape > 0, f"gamma_inv_cdf needs shape > 0, got {shape}")
    return _as_output(np.where(p == 0, 0.0, special.gammaincinv(shape, p)))


def gamma_inv_sf(q, shape):
    """x with gamma_sf(x, shape) = q; 0 when q = 1"""
    q, shape = np.asarray(q, dtype=float), np.asarray(shape, dtype=float)
    _require((q > 0) & (q <= 1), f"gamma_inv_sf needs 0 < q <= 1, got {q}")
    _require(shape > 0, f"gamma_inv_sf needs shape > 0, got {shape}")
    return _as_output(np.where(q == 1, 0.0, special.gammainccinv(shape, q)))


def beta_cdf(x, a, b):
    """Regularized incomplete beta I_x(a, b)"""
    x, a, b = (np.asarray(v, dtype=float) for v in (x, a, b))
    _require((x >= 0) & (x <= 1), f"beta_cdf needs 0 <= x <= 1, got {x}")
    _require((a > 0) & (b > 0), f"beta_cdf needs positive shapes, got a={a}, b={b}")
    return _as_output(special.betainc(a, b, x))


def beta_inv_cdf(u, a, b):
    u, a, b = (np.asarray(v, dtype=float) for v in (u, a, b))
    _require((u >= 0) & (u <= 1), f"beta_inv_cdf needs 0 <= u <= 1, got {u}")
    _require((a > 0) & (b > 0), f"beta_inv_cdf needs positive shapes, got a={a}, b={b}")
    return _as_output(special.betaincinv(a, b, u))


def digamma(x):
    x = np.asarray(x, dtype=float)
    _require(x > 0, f"digamma needs x > 0, got {x}")
    return _as_output(special.digamma(x))


def normal_cdf(z):
    return _as_output(special.ndtr(np.asarray(z, dtype=float)))


def normal_sf(z):
    """1 - normal_cdf(z) without cancellation"""
    return _as_output(special.ndtr(-np.asarray(z, dtype=float)))


def normal_inv_cdf(p):
    p = np.asarray(p, dtype=float)
    _require((p > 0) & (p < 1), f"normal_inv_cdf needs 0 < p < 1, got {p}")
    return _as_output(special.ndtri(p))


def normal_inv_sf(q):
    """z with normal_sf(z) = q"""
    q = np.asarray(q, dtype=float)
    _require((q > 0) & (q < 1), f"normal_inv_sf needs 0 < q < 1, got {q}")
    return _as_output(-special.ndtri(q))


def _cholesky(r: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(r)
    except np.linalg.LinAlgError:
        logger.info("Correlation is singular; adding jitter before Cholesky factorization")
        return np.linalg.cholesky(r + _CHOLESKY_JITTER * np.eye(r.shape[0]))


def _separated_integrand(chol: np.ndarray, bounds: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Genz separation-of-variables integrand at points w in [0,1)^(d-1)"""
    n, d = w.shape[0], bounds.shape[0]
    tiny = np.finfo(float).tiny
    y = np.zeros((n, d - 1))

    e_prev = np.full(n, special.ndtr(bounds[0] / chol[0, 0]))
    f = e_prev.copy()
    for i in range(1, d):
        y[:, i - 1] = special.ndtri(np.clip(w[:, i - 1] * e_prev, tiny, 1.0 - 1e-16))
        shift = y[:, :i] @ chol[i, :i]
        e_prev = special.ndtr((bounds[i] - shift) / chol[i, i])
        f *= e_prev
    return f


def mvn_rectangle(spec: MvnSpec, seed: int = 0) -> MvnResult:
    """Pr(T <= b) for T ~ MVN(0, R) by randomized quasi-Monte-Carlo

    Variables are reordered by ascending bound, the Cholesky factor of the
    reordered matrix drives the separation-of-variables transform, and
    independently scrambled Sobol batches give the standard error. The
    point count doubles until the error target or the point budget is met.

    Args:
        spec: dimension, correlation, upper bounds and accuracy targets
        seed: stream seed; equal seeds give bit-identical results

    Returns:
        MvnResult with probability, standard error, points used and whether
        the error target was reached
    """
    bounds = np.asarray(spec.upper_bounds, dtype=float)
    if np.any(np.isnan(bounds)):
        raise DomainError("MVN upper bounds must not be NaN")
    if np.any(bounds == -np.inf):
        return MvnResult(probability=0.0, se_estimate=0.0, n_points=0, converged=True)

    d = spec.dimension
    if d == 1:
        return MvnResult(probability=float(special.ndtr(bounds[0])), se_estimate=0.0, n_points=0, converged=True)

    order = np.argsort(bounds, kind="stable")
    r = spec.correlation.repaired()[np.ix_(order, order)]
    chol = _cholesky(r)
    bounds = bounds[order]

    n_batches = max(2, settings.mvn_batches)
    engines = [qmc.Sobol(d=d - 1, scramble=True, seed=stream(seed, TAG_MVN, b)) for b in range(n_batches)]
    sums = np.zeros(n_batches)
    per_batch, draw = 0, _FIRST_BATCH_POINTS

    while True:
        for b, engine in enumerate(engines):
            sums[b] += _separated_integrand(chol, bounds, engine.random(draw)).sum()
        per_batch += draw

        means = sums / per_batch
        se = float(np.std(means, ddof=1) / np.sqrt(n_batches))
        total = per_batch * n_batches
        if se <= spec.target_se:
            converged = True
            break
        if total * 2 > spec.max_points:
            converged = False
            logger.warning(f"MVN budget of {spec.max_points} points exhausted with se {se:.2e} > {spec.target_se:.1e}")
            break
        draw = per_batch

    probability = float(np.clip(means.mean(), 0.0, 1.0))
    logger.debug(f"MVN d={d}: p={probability:.6g}, se={se:.2e}, points={total}")
    return MvnResult(probability=probability, se_estimate=se, n_points=total, converged=converged)

