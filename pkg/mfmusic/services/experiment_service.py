import logging
import math
from itertools import combinations
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from mfmusic.config import Config
from mfmusic.exceptions import ConfigValidationError
from mfmusic.models import (
    AcquisitionGeometry,
    ExperimentConfig,
    FrequencyGrid,
    ImagingGrid,
    NoiseSpec,
    ScattererEnsemble,
    ValidationReport,
    Violation,
    ellipsoid_moments,
)

logger = logging.getLogger(__name__)


class Experiment(BaseModel):
    """Everything an experiment configuration file describes, as domain objects"""
    model_config = ConfigDict(frozen=True)

    config: ExperimentConfig
    ensemble: ScattererEnsemble
    geometry: AcquisitionGeometry
    grid: FrequencyGrid
    noise: NoiseSpec
    imaging_grid: ImagingGrid


class ExperimentService:
    def __init__(self):
        self.independence_tol = Config.INDEPENDENCE_TOL
        self.unit_tol = Config.UNIT_NORM_TOL

    def effective_directions(self, geometry: AcquisitionGeometry) -> np.ndarray:
        """e_j such that every phase reads exp(i k e_j . z)"""
        return geometry.effective_directions()

    def ellipsoid_moments(self, semiaxes: Sequence[float], q1: float, q2: float) -> Tuple[float, float]:
        return ellipsoid_moments(semiaxes, q1, q2)

    def model_order(self, ensemble: ScattererEnsemble) -> int:
        """M' = M + number of scatterers with a nonvanishing real contrast moment"""
        return ensemble.count + int(np.count_nonzero(ensemble.moments_q1))

    def dependent_tuples(self, geometry: AcquisitionGeometry) -> List[Tuple[int, ...]]:
        """All d-tuples of unit-normalized effective directions with |det| <= tolerance"""
        e = self.effective_directions(geometry)
        d = geometry.dimension
        if geometry.J < d:
            return []
        norms = np.linalg.norm(e, axis=1)
        safe = np.where(norms > self.unit_tol, norms, 1.0)
        unit = np.where((norms > self.unit_tol)[:, None], e / safe[:, None], 0.0)
        tuples = list(combinations(range(geometry.J), d))
        dets = np.abs(np.linalg.det(unit[np.array(tuples)]))
        return [t for t, det in zip(tuples, dets) if not det > self.independence_tol]

    def validate_experiment(self, ensemble: ScattererEnsemble, geometry: AcquisitionGeometry,
                            grid: FrequencyGrid,
                            imaging_grid: Optional[ImagingGrid] = None,
                            require_scatterers: bool = True) -> ValidationReport:
        """Collect every violated admissibility condition (empty report = valid)"""
        violations: List[Violation] = []
        warnings: List[str] = []

        def violate(code: str, message: str):
            violations.append(Violation(code=code, message=message))

        R = ensemble.radius_R
        d = geometry.dimension

        # Frequencies
        k_bound = math.pi / (2.0 * R)
        if grid.k_min > k_bound * (1.0 + 1e-12):
            violate("k_min_too_large", f"k_min={grid.k_min:.6g} exceeds pi/(2R)={k_bound:.6g}")
        if grid.N <= grid.L:
            violate("too_few_frequencies", f"N={grid.N} must exceed L={grid.L}")

        # Directions
        receivers = geometry.receivers
        for label, vector in [("incident direction", np.asarray(geometry.incident_direction, dtype=float))] + \
                [(f"receiver direction {j + 1}", r) for j, r in enumerate(receivers)]:
            norm = float(np.linalg.norm(vector))
            if abs(norm - 1.0) > self.unit_tol:
                violate("non_unit_direction", f"{label} has norm {norm:.15g}")
        for a, b in combinations(range(geometry.J), 2):
            if np.linalg.norm(receivers[a] - receivers[b]) <= Config.DISTINCT_TOL:
                violate("duplicate_receivers", f"receiver directions {a + 1} and {b + 1} coincide")

        e = self.effective_directions(geometry)
        for j in np.flatnonzero(np.linalg.norm(e, axis=1) <= self.unit_tol):
            warnings.append(f"receiver direction {j + 1} equals the incident direction; "
                            f"its data carry no position information")
        if geometry.J < d:
            warnings.append(f"only {geometry.J} directions for dimension {d}; independence cannot be checked")
        for t in self.dependent_tuples(geometry):
            violate("dependent_tuple",
                    "effective directions " + ", ".join(str(j + 1) for j in t) + " are linearly dependent")

        # Scatterers
        M = ensemble.count
        if M == 0:
            if require_scatterers:
                violate("no_scatterers", "the ensemble must contain at least one scatterer")
        elif ensemble.dimension != d:
            violate("dimension_mismatch", f"scatterers are {ensemble.dimension}-D but geometry is {d}-D")
        else:
            positions = ensemble.positions
            for m, z in enumerate(positions):
                if np.linalg.norm(z) >= R:
                    violate("outside_ball", f"scatterer {m + 1} at {tuple(z)} is not inside B_R with R={R}")
            for a, b in combinations(range(M), 2):
                if np.linalg.norm(positions[a] - positions[b]) <= Config.DISTINCT_TOL * R:
                    violate("duplicate_positions", f"scatterers {a + 1} and {b + 1} share a position")
            for m, s in enumerate(ensemble.scatterers):
                if s.moment_q2 < 0:
                    violate("invalid_moment", f"scatterer {m + 1} has negative moment_q2={s.moment_q2}")
                if s.moment_q1 == 0 and s.moment_q2 == 0:
                    violate("invalid_moment", f"scatterer {m + 1} has vanishing moments")

            q1 = ensemble.moments_q1
            if np.any(q1 > 0) and np.any(q1 < 0):
                warnings.append("moment_q1 changes sign across scatterers; projections may cancel, "
                                "prefer the I2 functional")
            m_prime = self.model_order(ensemble)
            if grid.L < m_prime:
                warnings.append(f"L={grid.L} is below the model order M'={m_prime}")
            if geometry.J <= (d - 1) * M:
                warnings.append(f"J={geometry.J} directions do not exceed (d-1)M={(d - 1) * M}")
            elif geometry.J <= (d - 1) * (2 * M - 1):
                warnings.append(f"J={geometry.J} directions do not exceed (d-1)(2M-1)={(d - 1) * (2 * M - 1)}; "
                                f"I2 localization is not guaranteed")

        # Imaging grid
        if imaging_grid is not None:
            if imaging_grid.dimension != d:
                violate("dimension_mismatch", f"imaging grid is {imaging_grid.dimension}-D but geometry is {d}-D")
            elif min(imaging_grid.lower) < -R * (1 + 1e-12) or max(imaging_grid.upper) > R * (1 + 1e-12):
                violate("grid_outside_box", f"imaging grid leaves the box [-{R}, {R}]^{d}")

        for message in warnings:
            logger.warning(message)
        return ValidationReport(violations=violations, warnings=warnings)

    def ensure_valid(self, ensemble: ScattererEnsemble, geometry: AcquisitionGeometry,
                     grid: FrequencyGrid, imaging_grid: Optional[ImagingGrid] = None,
                     require_scatterers: bool = True) -> ValidationReport:
        report = self.validate_experiment(ensemble, geometry, grid, imaging_grid, require_scatterers)
        if not report.is_valid:
            for message in report.messages():
                logger.error(message)
            raise ConfigValidationError(report.messages())
        return report

    def load_config(self, path: Union[str, Path]) -> ExperimentConfig:
        text = Path(path).read_text(encoding="utf-8")
        return ExperimentConfig.model_validate_json(text)

    def build_experiment(self, config: ExperimentConfig) -> Experiment:
        experiment = Experiment(
            config=config,
            ensemble=config.ensemble(),
            geometry=config.geometry(),
            grid=config.frequency_grid(),
            noise=config.noise(),
            imaging_grid=config.imaging_grid(),
        )
        lam_min, lam_max = experiment.grid.wavelengths()
        logger.info(f"Experiment: M={experiment.ensemble.count}, J={experiment.geometry.J}, "
                    f"2N={2 * experiment.grid.N}, wavelengths {lam_min:.4g}..{lam_max:.4g}")
        return experiment


# Singleton instance
_experiment_service = None

def get_experiment_service() -> ExperimentService:
    """Get or create experiment service instance"""
    global _experiment_service
    if _experiment_service is None:
        _experiment_service = ExperimentService()
    return _experiment_service
