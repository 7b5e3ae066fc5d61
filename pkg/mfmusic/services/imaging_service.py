import logging
import math
import warnings
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.ndimage import find_objects, label, maximum_filter

from mfmusic.config import Config
from mfmusic.exceptions import DimensionMismatch, DirectionCountWarning, InsufficientDirections
from mfmusic.models import AcquisitionGeometry, FrequencyGrid, ImagingGrid, Vector
from mfmusic.services.forward_service import RescaleVariant
from mfmusic.services.spectral_service import SpectralDecomposition, SubspaceProjector, get_spectral_service
from mfmusic.tools.parallel import parallel_map

logger = logging.getLogger(__name__)

NODE_CHUNK = 4096


class Functional(str, Enum):
    I1 = "i1"
    I2 = "i2"


class IndicatorField(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: ImagingGrid
    values: np.ndarray
    functional: Functional
    m_tilde_used: int
    m_used: Optional[int] = None

    @field_validator("values")
    @classmethod
    def _check_values(cls, value: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(value)) or np.any(value <= 0):
            raise ValueError("indicator values must be finite and positive")
        value = np.array(value, dtype=float)
        value.flags.writeable = False
        return value

    def position_of(self, index: Sequence[int]) -> Vector:
        return tuple(float(axis[i]) for axis, i in zip(self.grid.axes(), index))


class Peak(BaseModel):
    model_config = ConfigDict(frozen=True)

    position: Vector
    value: float


class PeakSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    peaks: Tuple[Peak, ...]
    threshold_fraction: float = Field(gt=0.0, lt=1.0)
    min_separation: float = Field(gt=0.0)

    @property
    def count(self) -> int:
        return len(self.peaks)

    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.peaks], dtype=float)


class ModelOrderEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    m_estimate: int
    l_tilde: int
    stationary: bool
    trajectory: Tuple[int, ...]
    i2_peak_count: Optional[int] = None


class ImagingService:
    def __init__(self):
        self.floor_factor = Config.RESIDUAL_FLOOR

    def test_vector(self, z: Sequence[float], e_j: Sequence[float], k_min: float, length: int) -> np.ndarray:
        """[1, zeta, ..., zeta^(length-1)] with zeta = exp(i k_min e_j . z)"""
        phase = k_min * float(np.dot(e_j, z))
        return np.exp(1j * phase * np.arange(length))

    def residual(self, projector: SubspaceProjector, phi: np.ndarray) -> float:
        phi = np.asarray(phi, dtype=complex)
        if phi.shape[0] != projector.length:
            raise DimensionMismatch(f"test vector length {phi.shape[0]} differs from projector size {projector.length}")
        return float(np.linalg.norm(phi - projector.project(phi)))

    def residual_floor(self, length: int, directions: int) -> float:
        return self.floor_factor * math.sqrt(length) * directions

    def residuals(self, grid: ImagingGrid, projectors: List[SubspaceProjector],
                  effective_directions: np.ndarray, k_min: float) -> np.ndarray:
        """Residuals ||(I - P_j) phi_z^(j)|| for every node z (rows) and direction j (columns)"""
        if not projectors:
            raise InsufficientDirections("at least one direction is required")
        lengths = {p.length for p in projectors}
        if len(lengths) != 1:
            raise DimensionMismatch(f"projectors have differing lengths {sorted(lengths)}")
        if len(projectors) != len(effective_directions):
            raise DimensionMismatch(f"{len(projectors)} projectors for {len(effective_directions)} directions")
        length = lengths.pop()
        powers = np.arange(length)[:, None]
        nodes = grid.nodes()

        def chunk(start: int) -> np.ndarray:
            block = nodes[start:start + NODE_CHUNK]
            out = np.empty((block.shape[0], len(projectors)))
            for j, (projector, e_j) in enumerate(zip(projectors, effective_directions)):
                phases = k_min * (block @ e_j)
                phi = np.exp(1j * powers * phases[None, :])
                out[:, j] = np.linalg.norm(phi - projector.project(phi), axis=0)
            return out

        blocks = parallel_map(chunk, range(0, nodes.shape[0], NODE_CHUNK))
        return np.vstack(blocks)

    def _field(self, grid: ImagingGrid, sums: np.ndarray, floor: float, functional: Functional,
               projectors: List[SubspaceProjector], m_used: Optional[int] = None) -> IndicatorField:
        values = 1.0 / np.maximum(sums, floor)
        return IndicatorField(grid=grid, values=values.reshape(grid.shape), functional=functional,
                              m_tilde_used=max(p.m_tilde for p in projectors), m_used=m_used)

    def indicator_I1(self, grid: ImagingGrid, projectors: List[SubspaceProjector],
                     effective_directions: np.ndarray, k_min: float) -> IndicatorField:
        residuals = self.residuals(grid, projectors, effective_directions, k_min)
        floor = self.residual_floor(projectors[0].length, len(projectors))
        return self._field(grid, residuals.sum(axis=1), floor, Functional.I1, projectors)

    def indicator_I2(self, grid: ImagingGrid, projectors: List[SubspaceProjector],
                     effective_directions: np.ndarray, k_min: float, M: int,
                     dimension: int) -> IndicatorField:
        """Sum only the (d-1)M+1 smallest residuals at each node"""
        if M < 1:
            raise ValueError(f"M must be positive, got {M}")
        J = len(projectors)
        selected = (dimension - 1) * M + 1
        if selected > J:
            raise InsufficientDirections(f"I2 with M={M}, d={dimension} needs {selected} directions, got {J}")
        if J <= (dimension - 1) * (2 * M - 1):
            message = f"J={J} does not exceed (d-1)(2M-1)={(dimension - 1) * (2 * M - 1)}; I2 peaks may be spurious"
            logger.warning(message)
            warnings.warn(message, DirectionCountWarning, stacklevel=2)
        residuals = self.residuals(grid, projectors, effective_directions, k_min)
        smallest = np.sort(residuals, axis=1, kind="stable")[:, :selected]
        floor = self.residual_floor(projectors[0].length, J)
        return self._field(grid, smallest.sum(axis=1), floor, Functional.I2, projectors, m_used=M)

    def extract_peaks(self, field: IndicatorField, threshold_fraction: float = Config.PEAK_THRESHOLD,
                      min_separation: float = Config.PEAK_SEPARATION) -> PeakSet:
        """Moore-neighbourhood local maxima above threshold_fraction * max, thinned greedily.

        A plateau of equal maxima counts once, at its lexicographically smallest node.
        """
        if not 0 < threshold_fraction < 1:
            raise ValueError(f"threshold_fraction must lie in (0, 1), got {threshold_fraction}")
        values = field.values
        footprint = np.ones((3,) * values.ndim, dtype=bool)
        candidates = values >= maximum_filter(values, footprint=footprint, mode="nearest")
        labels, _ = label(candidates, structure=footprint)
        level = threshold_fraction * float(values.max())

        found = []
        for index, window in enumerate(find_objects(labels), start=1):
            if window is None:
                continue
            first = np.argwhere(labels[window] == index)[0]
            node = tuple(int(i + s.start) for i, s in zip(first, window))
            value = float(values[node])
            if value >= level:
                found.append((value, np.ravel_multi_index(node, values.shape), node))
        found.sort(key=lambda item: (-item[0], item[1]))

        kept: List[Peak] = []
        for value, _, node in found:
            position = np.array(field.position_of(node))
            if all(np.linalg.norm(position - np.array(p.position)) >= min_separation for p in kept):
                kept.append(Peak(position=tuple(position.tolist()), value=value))
        return PeakSet(peaks=tuple(kept), threshold_fraction=threshold_fraction, min_separation=min_separation)

    def estimate_model_order(self, rescaled: np.ndarray, frequency_grid: FrequencyGrid,
                             imaging_grid: ImagingGrid, geometry: AcquisitionGeometry,
                             m_tilde_max: Optional[int] = None,
                             stationarity_window: int = Config.STATIONARITY_WINDOW,
                             threshold_fraction: float = Config.PEAK_THRESHOLD,
                             min_separation: float = Config.PEAK_SEPARATION,
                             variant: RescaleVariant = RescaleVariant.EXTENDED,
                             confirm_with_i2: bool = False,
                             decompositions: Optional[List[SpectralDecomposition]] = None) -> ModelOrderEstimate:
        """Grow the retained dimension until the I1 peak count is stationary"""
        rows, cols = frequency_grid.hankel_shape
        m_tilde_max = m_tilde_max or min(rows, cols)
        if m_tilde_max > frequency_grid.L + 1:
            raise ValueError(f"m_tilde_max={m_tilde_max} exceeds L+1={frequency_grid.L + 1}")
        if stationarity_window < 1:
            raise ValueError("stationarity_window must be positive")

        if decompositions is None:
            decompositions = get_spectral_service().decompose_data(rescaled, frequency_grid, variant)
        e = geometry.effective_directions()

        counts: List[int] = []
        stationary = False
        for m_tilde in range(1, m_tilde_max + 1):
            projectors = [d.projector(min(m_tilde, rows), warn=False) for d in decompositions]
            field = self.indicator_I1(imaging_grid, projectors, e, frequency_grid.k_min)
            counts.append(self.extract_peaks(field, threshold_fraction, min_separation).count)
            logger.info(f"M~={m_tilde}: {counts[-1]} peaks")
            if len(counts) >= stationarity_window and len(set(counts[-stationarity_window:])) == 1:
                stationary = True
                break

        estimate = counts[-1]
        l_tilde = len(counts)
        while l_tilde > 1 and counts[l_tilde - 2] == estimate:
            l_tilde -= 1
        if not stationary:
            logger.warning(f"Peak count did not become stationary up to M~={m_tilde_max}; "
                           f"best effort M={estimate}, L~={l_tilde}")

        i2_count = None
        if confirm_with_i2:
            if estimate == 0:
                logger.warning("Skipping I2 confirmation: no peaks to confirm")
            elif (geometry.dimension - 1) * estimate + 1 <= geometry.J:
                projectors = [d.projector(l_tilde, warn=False) for d in decompositions]
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", DirectionCountWarning)
                    field = self.indicator_I2(imaging_grid, projectors, e, frequency_grid.k_min,
                                              estimate, geometry.dimension)
                i2_count = self.extract_peaks(field, threshold_fraction, min_separation).count
                logger.info(f"I2 confirmation with M={estimate}, M~={l_tilde}: {i2_count} peaks")
            else:
                logger.warning(f"Skipping I2 confirmation: M={estimate} needs more than {geometry.J} directions")

        return ModelOrderEstimate(m_estimate=estimate, l_tilde=l_tilde, stationary=stationary,
                                  trajectory=tuple(counts), i2_peak_count=i2_count)


# Singleton instance
_imaging_service = None

def get_imaging_service() -> ImagingService:
    """Get or create imaging service instance"""
    global _imaging_service
    if _imaging_service is None:
        _imaging_service = ImagingService()
    return _imaging_service
