"""Quadrature rules on the unit ball, mapped affinely onto ellipsoids.

Radial and polar coordinates use Gauss-Legendre nodes, the periodic azimuth
uses the trapezoidal rule with twice as many nodes.
"""
from functools import lru_cache
from typing import Sequence, Tuple

import numpy as np
from scipy.special import roots_legendre


def _legendre_on(a: float, b: float, order: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = roots_legendre(order)
    half = 0.5 * (b - a)
    return half * x + 0.5 * (a + b), half * w


def _periodic(order: int) -> Tuple[np.ndarray, np.ndarray]:
    count = 2 * order
    phi = 2.0 * np.pi * np.arange(count) / count
    return phi, np.full(count, 2.0 * np.pi / count)


@lru_cache(maxsize=32)
def unit_ball_rule(dimension: int, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes (n, d) and weights (n,) integrating over the unit ball in R^d"""
    if order < 2:
        raise ValueError(f"quadrature order must be at least 2, got {order}")
    r, wr = _legendre_on(0.0, 1.0, order)
    phi, wphi = _periodic(order)

    if dimension == 2:
        rr, pp = np.meshgrid(r, phi, indexing="ij")
        weights = np.outer(wr * r, wphi)
        nodes = np.stack([rr * np.cos(pp), rr * np.sin(pp)], axis=-1)
    elif dimension == 3:
        t, wt = _legendre_on(-1.0, 1.0, order)
        rr, tt, pp = np.meshgrid(r, t, phi, indexing="ij")
        weights = (wr * r ** 2)[:, None, None] * wt[None, :, None] * wphi[None, None, :]
        sin_polar = np.sqrt(1.0 - tt ** 2)
        nodes = np.stack([rr * sin_polar * np.cos(pp), rr * sin_polar * np.sin(pp), rr * tt], axis=-1)
    else:
        raise ValueError(f"unsupported dimension {dimension}")

    nodes = nodes.reshape(-1, dimension)
    weights = weights.ravel()
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def ellipsoid_rule(center: Sequence[float], semiaxes: Sequence[float],
                   order: int) -> Tuple[np.ndarray, np.ndarray]:
    axes = np.asarray(semiaxes, dtype=float)
    nodes, weights = unit_ball_rule(len(axes), order)
    return np.asarray(center, dtype=float) + nodes * axes, weights * np.prod(axes)
