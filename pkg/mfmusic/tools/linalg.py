import logging
from typing import Tuple

import numpy as np
import scipy.linalg

from mfmusic.exceptions import ConvergenceFailure

logger = logging.getLogger(__name__)


def svd(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD (U, sigma, Vh) with a gesvd retry when gesdd fails to converge.

    Non-convergence of both drivers is surfaced as ConvergenceFailure.
    """
    a = np.asarray(matrix)
    if not np.all(np.isfinite(a)):
        raise ValueError("svd input contains non-finite entries")
    try:
        return scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        logger.warning(f"gesdd failed on a {a.shape} matrix, retrying with gesvd")
    try:
        return scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")
    except np.linalg.LinAlgError as e:
        raise ConvergenceFailure(f"SVD did not converge for a {a.shape} matrix: {e}") from e
