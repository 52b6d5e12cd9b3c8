from functools import cached_property
from typing import Tuple
import logging

import numpy as np

from artcombine.config import settings
from artcombine.exceptions import DataError, NumericalError

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12


class CorrelationMatrix:
    """Symmetric unit-diagonal PSD matrix with a write-once eigen cache"""

    def __init__(self, entries, psd_tolerance: float = None):
        matrix = np.array(entries, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] == 0:
            raise DataError(f"Correlation matrix must be square and non-empty, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise DataError("Correlation matrix contains non-finite entries")
        if np.max(np.abs(matrix - matrix.T)) > SYMMETRY_TOL:
            raise DataError("Correlation matrix is not symmetric")
        if np.max(np.abs(np.diag(matrix) - 1.0)) > SYMMETRY_TOL:
            raise DataError("Correlation matrix must have a unit diagonal")

        self._entries = matrix
        self._entries.setflags(write=False)
        self._psd_tolerance = settings.psd_tolerance if psd_tolerance is None else psd_tolerance

        # Forces the PSD check up front
        _ = self.eigen

    @property
    def order(self) -> int:
        return self._entries.shape[0]

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @cached_property
    def eigen(self) -> Tuple[np.ndarray, np.ndarray]:
        """(eigenvalues ascending, eigenvectors); eigenvalues in [-tol, 0] clipped to 0"""
        values, vectors = np.linalg.eigh(self._entries)
        smallest = float(values[0])
        if smallest < -self._psd_tolerance:
            raise NumericalError(
                f"Correlation matrix is not positive semidefinite: smallest eigenvalue {smallest:.3e}"
            )
        if smallest < 0:
            logger.info(f"Clipping eigenvalue {smallest:.3e} to 0")
            values = np.clip(values, 0.0, None)
        values.setflags(write=False)
        vectors.setflags(write=False)
        return values, vectors

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigen[0][0])

    def repaired(self) -> np.ndarray:
        """Entries rebuilt from the clipped eigendecomposition"""
        values, vectors = self.eigen
        return (vectors * values) @ vectors.T

    def with_ridge(self, eps: float) -> "CorrelationMatrix":
        """(S + eps I) / (1 + eps), renormalized to unit diagonal"""
        if eps < 0:
            raise DataError(f"Ridge must be non-negative, got {eps}")
        ridged = (self._entries + eps * np.eye(self.order)) / (1.0 + eps)
        np.fill_diagonal(ridged, 1.0)
        logger.info(f"Applied ridge {eps} to {self.order}x{self.order} correlation matrix")
        return CorrelationMatrix(ridged, self._psd_tolerance)

    def submatrix(self, index) -> "CorrelationMatrix":
        idx = np.asarray(index, dtype=int)
        return CorrelationMatrix(self._entries[np.ix_(idx, idx)], self._psd_tolerance)

    @classmethod
    def identity(cls, order: int) -> "CorrelationMatrix":
        return cls(np.eye(order))

    @classmethod
    def from_covariance(cls, covariance) -> "CorrelationMatrix":
        """R_ij = S_ij / sqrt(S_ii S_jj)"""
        cov = np.asarray(covariance, dtype=float)
        scale = np.sqrt(np.diag(cov))
        if np.any(scale <= 0):
            raise NumericalError("Covariance matrix has a non-positive variance")
        corr = cov / np.outer(scale, scale)
        corr = (corr + corr.T) / 2.0
        np.fill_diagonal(corr, 1.0)
        return cls(corr)

    def __repr__(self) -> str:
        return f"CorrelationMatrix(order={self.order})"
