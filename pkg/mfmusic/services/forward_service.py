import logging
import math
from enum import Enum
from typing import Optional

import numpy as np

from mfmusic.config import Config
from mfmusic.exceptions import DimensionMismatch, MissingShape
from mfmusic.models import (
    AcquisitionGeometry,
    FarFieldTensor,
    FrequencyGrid,
    NoiseMode,
    NoiseSpec,
    ScattererEnsemble,
    geometry_fingerprint,
)
from mfmusic.tools.parallel import parallel_map
from mfmusic.tools.quadrature import ellipsoid_rule

logger = logging.getLogger(__name__)


class RescaleVariant(str, Enum):
    EXTENDED = "extended"
    REAL_ONLY = "realonly"


class ForwardService:
    def __init__(self):
        self.quad_order = Config.QUAD_ORDER
        self.rng_algorithm = Config.RNG_ALGORITHM

    def leading_order_farfield(self, ensemble: ScattererEnsemble, geometry: AcquisitionGeometry,
                               grid: FrequencyGrid) -> FarFieldTensor:
        """u(j, n) = k_n^2 sum_m (mu1_m + i mu2_m / k_n) exp(i k_n e_j . z_m)"""
        k = grid.wavenumbers
        e = geometry.effective_directions()
        projections = e @ ensemble.positions.T                       # (J, M)
        phases = np.exp(1j * projections[:, :, None] * k[None, None, :])   # (J, M, 2N)
        weights = (k[None, :] ** 2 * ensemble.moments_q1[:, None]
                   + 1j * k[None, :] * ensemble.moments_q2[:, None])   # (M, 2N)
        values = np.sum(weights[None, :, :] * phases, axis=1)
        logger.info(f"Leading-order far field: {values.shape[0]} directions x {values.shape[1]} wavenumbers")
        return FarFieldTensor(values=values, geometry_fingerprint=geometry_fingerprint(geometry, grid),
                              model="leading")

    def _born_rows(self, ensemble: ScattererEnsemble, e: np.ndarray, k: np.ndarray, order: int) -> np.ndarray:
        rules = []
        for s in ensemble.scatterers:
            nodes, weights = ellipsoid_rule(s.position, s.shape.semiaxes, order)
            contrast = s.shape.q1 + 1j * s.shape.q2 / k                # (2N,)
            rules.append((nodes, weights, contrast))

        def row(e_j: np.ndarray) -> np.ndarray:
            total = np.zeros(k.shape, dtype=complex)
            for nodes, weights, contrast in rules:
                phase = np.exp(1j * k[:, None] * (nodes @ e_j)[None, :])
                total += contrast * (phase @ weights)
            return k ** 2 * total

        return np.array(parallel_map(row, list(e)))

    def born_farfield(self, ensemble: ScattererEnsemble, geometry: AcquisitionGeometry,
                      grid: FrequencyGrid, quad_order: Optional[int] = None) -> FarFieldTensor:
        """Born integral k^2 int_D (n - 1) exp(i k e_j . y) dy by unit-ball quadrature on each ellipsoid.

        The reported quadrature_error compares against the rule of half the order,
        plus a round-off allowance.
        """
        order = quad_order or self.quad_order
        if order < 2:
            raise ValueError(f"quad_order must be at least 2, got {order}")
        missing = [m + 1 for m, s in enumerate(ensemble.scatterers) if s.shape is None]
        if missing:
            raise MissingShape(f"scatterers {missing} have no ellipsoid shape; the Born model needs one")

        k = grid.wavenumbers
        e = geometry.effective_directions()
        values = self._born_rows(ensemble, e, k, order)
        coarse = self._born_rows(ensemble, e, k, max(2, math.ceil(order / 2)))

        scale = np.max(k ** 2 * sum(abs(s.shape.q1 + 1j * s.shape.q2 / k) * s.shape.volume
                                    for s in ensemble.scatterers)) if ensemble.scatterers else 0.0
        n_nodes = order ** geometry.dimension * 2
        roundoff = 64.0 * np.finfo(float).eps * math.sqrt(n_nodes) * scale
        error = float(np.max(np.abs(values - coarse))) + roundoff if values.size else 0.0
        logger.info(f"Born far field at quad_order={order}: error estimate {error:.3e}")
        return FarFieldTensor(values=values, geometry_fingerprint=geometry_fingerprint(geometry, grid),
                              model="born", quad_order=order, quadrature_error=error)

    def add_noise(self, tensor: FarFieldTensor, noise: NoiseSpec) -> FarFieldTensor:
        """Additive uniform complex noise, calibrated globally (Frobenius) or per entry"""
        metadata = dict(noise_level=noise.level, noise_mode=noise.mode.value, seed=noise.seed,
                        rng_algorithm=self.rng_algorithm)
        if noise.level == 0:
            return tensor.with_values(tensor.values, **metadata)

        rng = np.random.Generator(np.random.PCG64(noise.seed))
        shape = tensor.values.shape
        real = rng.uniform(-1.0, 1.0, shape)
        imag = rng.uniform(-1.0, 1.0, shape)
        perturbation = real + 1j * imag

        values = tensor.values
        if noise.mode == NoiseMode.ENTRYWISE:
            noisy = values * (1.0 + noise.level * perturbation)
        else:
            signal_norm = np.linalg.norm(values)
            noise_norm = np.linalg.norm(perturbation)
            noisy = values + perturbation * (noise.level * signal_norm / noise_norm)
        logger.info(f"Added {noise.mode.value} noise at level {noise.level} (seed {noise.seed})")
        return tensor.with_values(noisy, **metadata)

    def rescale_data(self, tensor: FarFieldTensor, grid: FrequencyGrid,
                     variant: RescaleVariant = RescaleVariant.EXTENDED) -> np.ndarray:
        """Divide column n by k_n (Extended) or k_n^2 (RealOnly)"""
        k = grid.wavenumbers
        if tensor.values.shape[1] != k.size:
            raise DimensionMismatch(f"tensor has {tensor.values.shape[1]} columns, grid has {k.size} wavenumbers")
        power = 1 if RescaleVariant(variant) == RescaleVariant.EXTENDED else 2
        return tensor.values / k[None, :] ** power


# Singleton instance
_forward_service = None

def get_forward_service() -> ForwardService:
    """Get or create forward service instance"""
    global _forward_service
    if _forward_service is None:
        _forward_service = ForwardService()
    return _forward_service
