"""Domain types shared by every mfmusic service.

All models are frozen pydantic models. Structural conditions (vector lengths,
signs of contrasts, finiteness) are enforced on construction; conditions that
involve the whole experiment (admissible k_min, distinct positions, independent
receiver tuples, ...) are reported by ``ExperimentService.validate_experiment``.
"""
import hashlib
import json
import math
from enum import Enum
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from mfmusic.config import Config

Vector = Tuple[float, ...]


def ellipsoid_volume(semiaxes: Sequence[float]) -> float:
    """Area (d=2) or volume (d=3) of an axis-aligned ellipsoid"""
    axes = [float(a) for a in semiaxes]
    if len(axes) == 2:
        return math.pi * axes[0] * axes[1]
    if len(axes) == 3:
        return 4.0 * math.pi / 3.0 * axes[0] * axes[1] * axes[2]
    raise ValueError(f"Ellipsoids need 2 or 3 semiaxes, got {len(axes)}")


def ellipsoid_moments(semiaxes: Sequence[float], q1: float, q2: float) -> Tuple[float, float]:
    """Contrast moments (q1 * V, q2 * V) of a constant-contrast ellipsoid"""
    if any(a <= 0 for a in semiaxes):
        raise ValueError(f"Semiaxes must be positive: {tuple(semiaxes)}")
    volume = ellipsoid_volume(semiaxes)
    return q1 * volume, q2 * volume


class Ellipsoid(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    semiaxes: Vector
    q1: float = Field(gt=-1.0)
    q2: float = Field(default=0.0, ge=0.0)

    @field_validator("semiaxes")
    @classmethod
    def _check_semiaxes(cls, value: Vector) -> Vector:
        if len(value) not in (2, 3):
            raise ValueError("semiaxes must have length 2 or 3")
        if any(a <= 0 for a in value):
            raise ValueError("semiaxes must be positive")
        return value

    @property
    def volume(self) -> float:
        return ellipsoid_volume(self.semiaxes)


class Scatterer(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    position: Vector
    moment_q1: float
    moment_q2: float = 0.0
    shape: Optional[Ellipsoid] = None

    @field_validator("position")
    @classmethod
    def _check_position(cls, value: Vector) -> Vector:
        if len(value) not in (2, 3):
            raise ValueError("position must have length 2 or 3")
        return value

    @model_validator(mode="after")
    def _check_shape(self) -> "Scatterer":
        if self.shape is None:
            return self
        if len(self.shape.semiaxes) != len(self.position):
            raise ValueError("shape and position dimensions differ")
        expected_q1, expected_q2 = ellipsoid_moments(self.shape.semiaxes, self.shape.q1, self.shape.q2)
        for name, stored, expected in (("moment_q1", self.moment_q1, expected_q1),
                                       ("moment_q2", self.moment_q2, expected_q2)):
            if not math.isclose(stored, expected, rel_tol=Config.MOMENT_RTOL, abs_tol=0.0):
                raise ValueError(f"{name}={stored} does not match the ellipsoid moment {expected}")
        return self

    @classmethod
    def from_ellipsoid(cls, position: Sequence[float], semiaxes: Sequence[float],
                       q1: float, q2: float = 0.0) -> "Scatterer":
        shape = Ellipsoid(semiaxes=tuple(semiaxes), q1=q1, q2=q2)
        moment_q1, moment_q2 = ellipsoid_moments(shape.semiaxes, q1, q2)
        return cls(position=tuple(position), moment_q1=moment_q1, moment_q2=moment_q2, shape=shape)

    @property
    def dimension(self) -> int:
        return len(self.position)


class ScattererEnsemble(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    scatterers: Tuple[Scatterer, ...]
    radius_R: float = Field(gt=0.0)

    @field_validator("scatterers")
    @classmethod
    def _check_dimensions(cls, value: Tuple[Scatterer, ...]) -> Tuple[Scatterer, ...]:
        if len({s.dimension for s in value}) > 1:
            raise ValueError("all scatterers must share one dimension")
        return value

    @property
    def count(self) -> int:
        return len(self.scatterers)

    @property
    def dimension(self) -> Optional[int]:
        return self.scatterers[0].dimension if self.scatterers else None

    @property
    def positions(self) -> np.ndarray:
        if not self.scatterers:
            return np.zeros((0, 0))
        return np.array([s.position for s in self.scatterers], dtype=float)

    @property
    def moments_q1(self) -> np.ndarray:
        return np.array([s.moment_q1 for s in self.scatterers], dtype=float)

    @property
    def moments_q2(self) -> np.ndarray:
        return np.array([s.moment_q2 for s in self.scatterers], dtype=float)

    @property
    def has_shapes(self) -> bool:
        return all(s.shape is not None for s in self.scatterers)

    def translated(self, shift: Sequence[float]) -> "ScattererEnsemble":
        moved = [s.model_copy(update={"position": tuple(float(p + t) for p, t in zip(s.position, shift))})
                 for s in self.scatterers]
        return ScattererEnsemble(scatterers=tuple(moved), radius_R=self.radius_R)


class AcquisitionMode(str, Enum):
    FIXED_INCIDENCE = "fixed"
    BACKSCATTERING = "backscatter"


class AcquisitionGeometry(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    dimension: Literal[2, 3]
    incident_direction: Vector
    receiver_directions: Tuple[Vector, ...]
    mode: AcquisitionMode = AcquisitionMode.FIXED_INCIDENCE

    @model_validator(mode="after")
    def _check_lengths(self) -> "AcquisitionGeometry":
        if len(self.incident_direction) != self.dimension:
            raise ValueError("incident_direction length differs from dimension")
        if not self.receiver_directions:
            raise ValueError("at least one receiver direction is required")
        for index, direction in enumerate(self.receiver_directions):
            if len(direction) != self.dimension:
                raise ValueError(f"receiver direction {index} length differs from dimension")
        return self

    @property
    def J(self) -> int:
        return len(self.receiver_directions)

    @property
    def receivers(self) -> np.ndarray:
        return np.array(self.receiver_directions, dtype=float)

    def effective_directions(self) -> np.ndarray:
        """Phase vectors e_j: theta - x_j (fixed incidence) or 2 x_j (backscattering)"""
        receivers = self.receivers
        if self.mode == AcquisitionMode.BACKSCATTERING:
            return 2.0 * receivers
        return np.asarray(self.incident_direction, dtype=float)[None, :] - receivers

    def with_mode(self, mode: AcquisitionMode) -> "AcquisitionGeometry":
        return self.model_copy(update={"mode": mode})


class FrequencyGrid(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    k_min: float = Field(gt=0.0)
    N: int = Field(ge=1)
    L: int = Field(ge=1)

    @property
    def wavenumbers(self) -> np.ndarray:
        return self.k_min * np.arange(1, 2 * self.N + 1, dtype=float)

    @property
    def hankel_shape(self) -> Tuple[int, int]:
        return 2 * self.N - self.L, self.L + 1

    def wavelengths(self) -> Tuple[float, float]:
        """(lambda_min, lambda_max) of the sampled band"""
        k = self.wavenumbers
        return 2.0 * math.pi / k[-1], 2.0 * math.pi / k[0]


class ImagingGrid(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    lower: Vector
    upper: Vector
    points: Tuple[int, ...]

    @model_validator(mode="after")
    def _check_box(self) -> "ImagingGrid":
        if not (len(self.lower) == len(self.upper) == len(self.points)):
            raise ValueError("lower, upper and points must have equal length")
        if len(self.lower) not in (2, 3):
            raise ValueError("imaging grids are 2-D or 3-D")
        if any(lo >= up for lo, up in zip(self.lower, self.upper)):
            raise ValueError("lower corner must be below upper corner componentwise")
        if any(n < 1 for n in self.points):
            raise ValueError("points per axis must be positive")
        return self

    @classmethod
    def centered_box(cls, half_width: float, dimension: int, points: int) -> "ImagingGrid":
        return cls(lower=(-half_width,) * dimension, upper=(half_width,) * dimension,
                   points=(points,) * dimension)

    @property
    def dimension(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.points)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.points))

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple((up - lo) / (n - 1) if n > 1 else up - lo
                     for lo, up, n in zip(self.lower, self.upper, self.points))

    def axes(self) -> List[np.ndarray]:
        return [np.linspace(lo, up, n) for lo, up, n in zip(self.lower, self.upper, self.points)]

    def nodes(self) -> np.ndarray:
        """All nodes, shape (node_count, d), first axis slowest (C order)"""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def with_points(self, points: Sequence[int]) -> "ImagingGrid":
        return self.model_copy(update={"points": tuple(int(n) for n in points)})

    def translated(self, shift: Sequence[float]) -> "ImagingGrid":
        return self.model_copy(update={
            "lower": tuple(lo + t for lo, t in zip(self.lower, shift)),
            "upper": tuple(up + t for up, t in zip(self.upper, shift)),
        })


def geometry_fingerprint(geometry: AcquisitionGeometry, grid: FrequencyGrid) -> str:
    payload = json.dumps({"geometry": geometry.model_dump(mode="json"),
                          "grid": grid.model_dump(mode="json")}, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _frozen_array(values, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.flags.writeable = False
    return array


class FarFieldTensor(BaseModel):
    """Far field observations, rows = receiver directions, columns = wavenumbers"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray
    geometry_fingerprint: str
    model: Literal["leading", "born"] = "leading"
    quad_order: Optional[int] = None
    quadrature_error: Optional[float] = None
    noise_level: float = 0.0
    noise_mode: str = "global"
    seed: Optional[int] = None
    rng_algorithm: Optional[str] = None

    @field_validator("values", mode="before")
    @classmethod
    def _check_values(cls, value) -> np.ndarray:
        array = _frozen_array(value, complex)
        if array.ndim != 2:
            raise ValueError(f"far field tensor must be 2-D, got shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValueError("far field tensor contains non-finite entries")
        return array

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def matches(self, geometry: AcquisitionGeometry, grid: FrequencyGrid) -> bool:
        return self.values.shape == (geometry.J, 2 * grid.N)

    def with_values(self, values: np.ndarray, **updates) -> "FarFieldTensor":
        data = self.model_dump()
        data.update(updates)
        data["values"] = values
        return FarFieldTensor(**data)


class Violation(BaseModel):
    model_config = ConfigDict(frozen=True)

    code: str
    message: str


class ValidationReport(BaseModel):
    violations: List[Violation] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)

    @property
    def is_valid(self) -> bool:
        return not self.violations

    def codes(self) -> List[str]:
        return [v.code for v in self.violations]

    def messages(self) -> List[str]:
        return [f"[{v.code}] {v.message}" for v in self.violations]


class NoiseMode(str, Enum):
    GLOBAL = "global"
    ENTRYWISE = "entrywise"


class NoiseSpec(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    level: float = Field(default=0.0, ge=0.0, lt=1.0)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    mode: NoiseMode = NoiseMode.GLOBAL


# Experiment configuration file schema

class ScattererSpec(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False, extra="forbid")

    position: Vector
    moment_q1: Optional[float] = None
    moment_q2: Optional[float] = None
    semiaxes: Optional[Vector] = None
    q1: Optional[float] = None
    q2: Optional[float] = None

    @model_validator(mode="after")
    def _check_variant(self) -> "ScattererSpec":
        has_moments = self.moment_q1 is not None or self.moment_q2 is not None
        has_shape = self.semiaxes is not None
        if has_moments == has_shape:
            raise ValueError("give either moment_q1/moment_q2 or semiaxes/q1/q2 for each scatterer")
        if has_shape and self.q1 is None:
            raise ValueError("shaped scatterers need q1")
        return self

    def to_scatterer(self) -> Scatterer:
        if self.semiaxes is not None:
            return Scatterer.from_ellipsoid(self.position, self.semiaxes, self.q1, self.q2 or 0.0)
        return Scatterer(position=self.position, moment_q1=self.moment_q1 or 0.0,
                         moment_q2=self.moment_q2 or 0.0)


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    lower: Vector
    upper: Vector
    points: Tuple[int, ...]


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    dimension: Literal[2, 3]
    radius_R: float = Field(gt=0.0)
    incident_direction: Vector
    receiver_directions: Tuple[Vector, ...]
    mode: AcquisitionMode = AcquisitionMode.FIXED_INCIDENCE
    k_min: float = Field(gt=0.0)
    N: int = Field(ge=1)
    L: int = Field(ge=1)
    scatterers: Tuple[ScattererSpec, ...] = ()
    noise_level: float = Field(default=0.0, ge=0.0, lt=1.0)
    noise_mode: NoiseMode = NoiseMode.GLOBAL
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    grid: Optional[GridSpec] = None
    model: Literal["leading", "born"] = "leading"
    quad_order: int = Field(default=Config.QUAD_ORDER, ge=2)

    def ensemble(self) -> ScattererEnsemble:
        return ScattererEnsemble(scatterers=tuple(s.to_scatterer() for s in self.scatterers),
                                 radius_R=self.radius_R)

    def geometry(self) -> AcquisitionGeometry:
        return AcquisitionGeometry(dimension=self.dimension, incident_direction=self.incident_direction,
                                   receiver_directions=self.receiver_directions, mode=self.mode)

    def frequency_grid(self) -> FrequencyGrid:
        return FrequencyGrid(k_min=self.k_min, N=self.N, L=self.L)

    def noise(self) -> NoiseSpec:
        return NoiseSpec(level=self.noise_level, seed=self.seed, mode=self.noise_mode)

    def imaging_grid(self) -> ImagingGrid:
        if self.grid is None:
            return ImagingGrid.centered_box(self.radius_R, self.dimension, Config.GRID_POINTS)
        return ImagingGrid(lower=self.grid.lower, upper=self.grid.upper, points=self.grid.points)

    def config_hash(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()
