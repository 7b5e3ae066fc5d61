import logging
import warnings
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict

from mfmusic.config import Config
from mfmusic.exceptions import DimensionMismatch, RankDeficientWarning
from mfmusic.models import AcquisitionGeometry, FrequencyGrid, ScattererEnsemble
from mfmusic.services.forward_service import RescaleVariant
from mfmusic.tools import linalg
from mfmusic.tools.parallel import parallel_map

logger = logging.getLogger(__name__)

_arrays = ConfigDict(frozen=True, arbitrary_types_allowed=True)


class HankelMatrix(BaseModel):
    model_config = _arrays

    entries: np.ndarray
    direction_index: int = 0
    variant: RescaleVariant = RescaleVariant.EXTENDED

    @property
    def shape(self) -> Tuple[int, int]:
        return self.entries.shape


class SubspaceProjector(BaseModel):
    """Orthogonal projection onto the span of the leading left singular vectors"""
    model_config = _arrays

    basis: np.ndarray
    singular_values: np.ndarray
    m_tilde: int

    @property
    def length(self) -> int:
        return self.basis.shape[0]

    def matrix(self) -> np.ndarray:
        return self.basis @ self.basis.conj().T

    def project(self, vectors: np.ndarray) -> np.ndarray:
        """P v for a vector (n,) or a stack of column vectors (n, k)"""
        return self.basis @ (self.basis.conj().T @ vectors)


class SpectralDecomposition(BaseModel):
    """SVD of one direction's Hankel matrix, reusable for any retained dimension"""
    model_config = _arrays

    direction_index: int
    left: np.ndarray
    singular_values: np.ndarray
    right_h: np.ndarray

    def projector(self, m_tilde: int, warn: bool = True) -> SubspaceProjector:
        sigma = self.singular_values
        if not 1 <= m_tilde <= min(self.left.shape[0], self.right_h.shape[1]):
            raise ValueError(f"retained dimension {m_tilde} outside [1, {sigma.size}]")
        if warn and (sigma[0] == 0 or sigma[m_tilde - 1] < Config.RANK_DEFICIENT_TOL * sigma[0]):
            message = (f"direction {self.direction_index + 1}: sigma_{m_tilde} = {sigma[m_tilde - 1]:.3e} "
                       f"is negligible against sigma_1 = {sigma[0]:.3e}")
            logger.warning(message)
            warnings.warn(message, RankDeficientWarning, stacklevel=3)
        return SubspaceProjector(basis=self.left[:, :m_tilde].copy(), singular_values=sigma.copy(),
                                 m_tilde=m_tilde)


class RankStrategy(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["gap", "threshold", "fixed"]
    value: float

    @classmethod
    def gap(cls, ratio_threshold: float = Config.GAP_RATIO) -> "RankStrategy":
        return cls(kind="gap", value=ratio_threshold)

    @classmethod
    def threshold(cls, rel_tol: float) -> "RankStrategy":
        return cls(kind="threshold", value=rel_tol)

    @classmethod
    def fixed(cls, m_tilde: int) -> "RankStrategy":
        return cls(kind="fixed", value=m_tilde)


class CollapsedExponent(BaseModel):
    model_config = ConfigDict(frozen=True)

    exponent: float   # e_j . z_m
    q1: float
    q2: float

    @property
    def confluent(self) -> bool:
        return self.q1 != 0.0


class Factorization(BaseModel):
    """H = V_left D V_right^T with confluent Vandermonde factors"""
    model_config = _arrays

    V_left: np.ndarray
    D_block: np.ndarray
    V_right: np.ndarray
    exponents: Tuple[CollapsedExponent, ...]
    variant: RescaleVariant = RescaleVariant.EXTENDED

    @property
    def M_j(self) -> int:
        return len(self.exponents)

    @property
    def M_j_prime(self) -> int:
        return self.D_block.shape[0]

    def product(self) -> np.ndarray:
        return self.V_left @ self.D_block @ self.V_right.T


def _vandermonde_columns(zeta: complex, rows: int, confluent: bool) -> np.ndarray:
    p = np.arange(rows)
    powers = zeta ** p
    if not confluent:
        return powers[:, None]
    derivative = np.zeros(rows, dtype=complex)
    derivative[1:] = p[1:] * zeta ** (p[1:] - 1)
    return np.stack([powers, derivative], axis=1)


class SpectralService:
    def __init__(self):
        self.collapse_tol = Config.COLLAPSE_TOL
        self.cancel_tol = Config.CANCEL_TOL

    def assemble_hankel(self, rescaled_row: Sequence[complex], L: int, N: Optional[int] = None,
                        direction_index: int = 0,
                        variant: RescaleVariant = RescaleVariant.EXTENDED) -> HankelMatrix:
        """(2N-L) x (L+1) Hankel matrix with entry (p, q) = row[p + q] (0-based)"""
        row = np.asarray(rescaled_row, dtype=complex).ravel()
        if N is not None and row.size != 2 * N:
            raise DimensionMismatch(f"row has length {row.size}, expected 2N = {2 * N}")
        if row.size % 2:
            raise DimensionMismatch(f"row length {row.size} is not even")
        if row.size <= L + 1:
            raise DimensionMismatch(f"2N = {row.size} must exceed L + 1 = {L + 1}")
        rows = row.size - L
        if rows < L + 2:
            logger.warning(f"Hankel matrix {rows} x {L + 1} is not taller than wide (N <= L)")
        entries = scipy.linalg.hankel(c=row[:rows], r=row[rows - 1:])
        return HankelMatrix(entries=entries, direction_index=direction_index, variant=variant)

    def svd(self, matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return linalg.svd(matrix)

    def collapse_exponents(self, ensemble: ScattererEnsemble, e_j: np.ndarray) -> List[CollapsedExponent]:
        """Merge coinciding projections e_j . z_m and drop cancelled terms"""
        projections = ensemble.positions @ np.asarray(e_j, dtype=float)
        order = np.argsort(projections, kind="stable")
        groups: List[List[int]] = []
        for m in order:
            if groups and projections[m] - projections[groups[-1][-1]] <= self.collapse_tol:
                groups[-1].append(m)
            else:
                groups.append([m])

        collapsed = []
        for group in groups:
            q1 = float(np.sum(ensemble.moments_q1[group]))
            q2 = float(np.sum(ensemble.moments_q2[group]))
            q1 = 0.0 if abs(q1) < self.cancel_tol else q1
            q2 = 0.0 if abs(q2) < self.cancel_tol else q2
            if q1 == 0.0 and q2 == 0.0:
                continue
            collapsed.append(CollapsedExponent(exponent=float(np.mean(projections[group])), q1=q1, q2=q2))
        return collapsed

    def exact_factorization(self, ensemble: ScattererEnsemble, direction_index: int,
                            geometry: AcquisitionGeometry, grid: FrequencyGrid,
                            variant: RescaleVariant = RescaleVariant.EXTENDED) -> Factorization:
        e_j = geometry.effective_directions()[direction_index]
        rows, cols = grid.hankel_shape
        k_min = grid.k_min
        exponents = self.collapse_exponents(ensemble, e_j)

        left, right, blocks = [], [], []
        for term in exponents:
            zeta = np.exp(1j * k_min * term.exponent)
            if variant == RescaleVariant.REAL_ONLY:
                if term.q2 != 0.0:
                    raise ValueError("the RealOnly factorization requires vanishing moment_q2")
                confluent = False
                block = np.array([[term.q1 * zeta]])
            elif term.confluent:
                confluent = True
                block = np.array([[(k_min * term.q1 + 1j * term.q2) * zeta, k_min * term.q1 * zeta ** 2],
                                  [k_min * term.q1 * zeta ** 2, 0.0]])
            else:
                confluent = False
                block = np.array([[1j * term.q2 * zeta]])
            left.append(_vandermonde_columns(zeta, rows, confluent))
            right.append(_vandermonde_columns(zeta, cols, confluent))
            blocks.append(block)

        if not blocks:
            empty = np.zeros((0, 0), dtype=complex)
            return Factorization(V_left=np.zeros((rows, 0), dtype=complex), D_block=empty,
                                 V_right=np.zeros((cols, 0), dtype=complex), exponents=(), variant=variant)
        return Factorization(V_left=np.hstack(left), D_block=scipy.linalg.block_diag(*blocks).astype(complex),
                             V_right=np.hstack(right), exponents=tuple(exponents), variant=variant)

    def essential_rank(self, singular_values: Sequence[float], strategy: RankStrategy) -> int:
        sigma = np.asarray(singular_values, dtype=float)
        if strategy.kind == "fixed":
            return int(min(max(int(strategy.value), 1), sigma.size))
        if sigma.size == 0 or sigma[0] <= 0:
            return 0
        if strategy.kind == "threshold":
            return int(np.count_nonzero(sigma > strategy.value * sigma[0]))
        for r in range(1, sigma.size):
            if sigma[r] < strategy.value * sigma[r - 1]:
                return r
        return int(sigma.size)

    def decompose(self, matrix: np.ndarray, direction_index: int = 0) -> SpectralDecomposition:
        left, sigma, right_h = self.svd(matrix)
        return SpectralDecomposition(direction_index=direction_index, left=left, singular_values=sigma,
                                     right_h=right_h)

    def projector_from(self, matrix: np.ndarray, m_tilde: int) -> SubspaceProjector:
        return self.decompose(matrix).projector(m_tilde)

    def decompose_data(self, rescaled: np.ndarray, grid: FrequencyGrid,
                       variant: RescaleVariant = RescaleVariant.EXTENDED) -> List[SpectralDecomposition]:
        """Hankel + SVD of every direction's rescaled row"""
        def one(j: int) -> SpectralDecomposition:
            hankel = self.assemble_hankel(rescaled[j], grid.L, N=grid.N, direction_index=j, variant=variant)
            return self.decompose(hankel.entries, direction_index=j)

        decompositions = parallel_map(one, range(rescaled.shape[0]))
        logger.info(f"Decomposed {len(decompositions)} Hankel matrices of shape {grid.hankel_shape}")
        return decompositions

    def projectors(self, decompositions: List[SpectralDecomposition], strategy: RankStrategy,
                   warn: bool = True) -> List[SubspaceProjector]:
        projectors = []
        for decomposition in decompositions:
            m_tilde = max(1, self.essential_rank(decomposition.singular_values, strategy))
            projectors.append(decomposition.projector(m_tilde, warn=warn))
        logger.debug(f"Retained dimensions: {[p.m_tilde for p in projectors]}")
        return projectors


# Singleton instance
_spectral_service = None

def get_spectral_service() -> SpectralService:
    """Get or create spectral service instance"""
    global _spectral_service
    if _spectral_service is None:
        _spectral_service = SpectralService()
    return _spectral_service
