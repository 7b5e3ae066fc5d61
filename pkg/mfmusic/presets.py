"""Ready-made experiment configurations.

``example_config`` reproduces the three-ellipsoid benchmark: radius 5, k_n = n pi/10
for n = 1..32, L = 15 and twelve receiver directions.
"""
import math
from functools import lru_cache
from itertools import combinations
from typing import Optional, Tuple

import numpy as np

from mfmusic.config import Config
from mfmusic.models import AcquisitionMode, ExperimentConfig, GridSpec, NoiseMode, ScattererSpec, Vector

EXAMPLE_RADIUS = 5.0
EXAMPLE_INCIDENT: Vector = (1.0, 0.0, 0.0)
EXAMPLE_SCATTERERS = (
    ((2.0, 2.0, 2.0), (0.2, 0.2, 0.1), -0.5, 0.5),
    ((-1.0, -3.0, -1.0), (0.1, 0.1, 0.2), 1.0, 0.0),
    ((-3.0, 1.0, 2.0), (0.1, 0.1, 0.1), 2.0, 1.0),
)
DIRECTION_SEED = 2024
MIN_DETERMINANT = 0.02
MIN_OFFSET = 0.5


def _unit(vectors: np.ndarray) -> np.ndarray:
    return vectors / np.linalg.norm(vectors, axis=-1, keepdims=True)


@lru_cache(maxsize=None)
def example_directions(count: int = 12, seed: int = DIRECTION_SEED,
                       incident: Vector = EXAMPLE_INCIDENT) -> Tuple[Vector, ...]:
    """Random receiver directions whose effective-direction triples are independent in both modes"""
    rng = np.random.Generator(np.random.PCG64(seed))
    theta = np.asarray(incident, dtype=float)
    accepted = []
    while len(accepted) < count:
        x = _unit(rng.standard_normal(3))
        if np.linalg.norm(theta - x) < MIN_OFFSET:
            continue
        candidate = accepted + [x]
        fixed = _unit(theta[None, :] - np.array(candidate))
        back = np.array(candidate)
        last = len(candidate) - 1
        if all(abs(np.linalg.det(e[[a, b, last]])) >= MIN_DETERMINANT
               for e in (fixed, back) for a, b in combinations(range(last), 2)):
            accepted.append(x)
    return tuple(tuple(float(c) for c in x) for x in accepted)


def example_scatterers() -> Tuple[ScattererSpec, ...]:
    return tuple(ScattererSpec(position=position, semiaxes=semiaxes, q1=q1, q2=q2)
                 for position, semiaxes, q1, q2 in EXAMPLE_SCATTERERS)


def example_config(mode: AcquisitionMode = AcquisitionMode.FIXED_INCIDENCE, noise_level: float = 0.1,
                   noise_mode: NoiseMode = NoiseMode.ENTRYWISE, seed: int = 7,
                   grid_points: Optional[int] = None) -> ExperimentConfig:
    points = grid_points or Config.GRID_POINTS
    return ExperimentConfig(
        dimension=3,
        radius_R=EXAMPLE_RADIUS,
        incident_direction=EXAMPLE_INCIDENT,
        receiver_directions=example_directions(),
        mode=mode,
        k_min=math.pi / (2.0 * EXAMPLE_RADIUS),
        N=16,
        L=15,
        scatterers=example_scatterers(),
        noise_level=noise_level,
        noise_mode=noise_mode,
        seed=seed,
        grid=GridSpec(lower=(-EXAMPLE_RADIUS,) * 3, upper=(EXAMPLE_RADIUS,) * 3, points=(points,) * 3),
    )


def example_positions() -> np.ndarray:
    return np.array([position for position, _, _, _ in EXAMPLE_SCATTERERS])
