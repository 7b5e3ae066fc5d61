import math

import numpy as np

from mfmusic.models import (
    AcquisitionGeometry,
    AcquisitionMode,
    FrequencyGrid,
    ImagingGrid,
    Scatterer,
    ScattererEnsemble,
)

PLANE_ANGLES = (36.0, 108.0, 180.0, 252.0, 324.0)


def plane_receivers():
    return tuple((math.cos(math.radians(a)), math.sin(math.radians(a))) for a in PLANE_ANGLES)


def plane_config_dict(**overrides):
    """Three point scatterers in the plane, on the 0.25-spaced default grid"""
    data = {
        "dimension": 2,
        "radius_R": 5.0,
        "incident_direction": [1.0, 0.0],
        "receiver_directions": [list(x) for x in plane_receivers()],
        "mode": "fixed",
        "k_min": math.pi / 10.0,
        "N": 8,
        "L": 5,
        "scatterers": [
            {"position": [1.0, 1.0], "moment_q1": 0.3, "moment_q2": 0.1},
            {"position": [-2.0, 0.5], "moment_q1": 0.2},
            {"position": [0.5, -2.5], "moment_q2": 0.2},
        ],
        "noise_level": 0.0,
        "seed": 3,
        "grid": {"lower": [-5.0, -5.0], "upper": [5.0, 5.0], "points": [41, 41]},
    }
    data.update(overrides)
    return data


def single_scatterer(position=(1.0, 1.0), q1=0.3, q2=0.1, radius_R=5.0):
    return ScattererEnsemble(scatterers=(Scatterer(position=position, moment_q1=q1, moment_q2=q2),),
                             radius_R=radius_R)


def plane_geometry(mode=AcquisitionMode.FIXED_INCIDENCE):
    return AcquisitionGeometry(dimension=2, incident_direction=(1.0, 0.0),
                               receiver_directions=plane_receivers(), mode=mode)


def point_grid(z):
    """Imaging grid holding the single node z"""
    return ImagingGrid(lower=tuple(z), upper=tuple(c + 1.0 for c in z), points=(1,) * len(z))


def _unit(v):
    return v / np.linalg.norm(v)


def random_configuration(rng, dimension, M, N, min_phase_gap=0.5):
    """Random well-separated ensemble in the unit ball with k_min = pi / 2.

    Returns (ensemble, geometry, grid) with L = 2M. Configurations in which two
    projected phases come closer than min_phase_gap (mod 2 pi) are redrawn.
    """
    k_min = math.pi / 2.0
    grid = FrequencyGrid(k_min=k_min, N=N, L=2 * M)
    theta = np.eye(dimension)[0]
    while True:
        receivers = [_unit(rng.standard_normal(dimension)) for _ in range(dimension + 1)]
        geometry = AcquisitionGeometry(dimension=dimension, incident_direction=tuple(theta),
                                       receiver_directions=tuple(tuple(x) for x in receivers))
        positions = []
        while len(positions) < M:
            z = rng.uniform(-0.9, 0.9, dimension)
            if np.linalg.norm(z) < 0.9:
                positions.append(z)
        scatterers = []
        for z in positions:
            q1 = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0)
            q2 = rng.uniform(0.5, 1.0) if rng.random() < 0.5 else 0.0
            scatterers.append(Scatterer(position=tuple(z), moment_q1=q1, moment_q2=q2))
        ensemble = ScattererEnsemble(scatterers=tuple(scatterers), radius_R=1.0)

        phases = k_min * geometry.effective_directions() @ np.array(positions).T
        gaps = [abs(math.remainder(a - b, 2.0 * math.pi))
                for row in phases for i, a in enumerate(row) for b in row[i + 1:]]
        if not gaps or min(gaps) >= min_phase_gap:
            return ensemble, geometry, grid
