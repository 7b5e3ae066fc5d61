from typing import List


class MfMusicError(Exception):
    """Base class for all errors raised by mfmusic"""


class ConfigValidationError(MfMusicError):
    """Raised when an experiment violates one or more admissibility conditions"""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("Invalid experiment: " + "; ".join(self.violations))


class MissingShape(MfMusicError):
    """The Born oracle needs ellipsoid data for every scatterer"""


class DimensionMismatch(MfMusicError):
    pass


class ConvergenceFailure(MfMusicError):
    """LAPACK did not converge with any available driver"""


class InsufficientDirections(MfMusicError):
    pass


class MissingModelOrder(MfMusicError):
    """I2 was requested without a number of scatterers M"""


class RankDeficientWarning(UserWarning):
    pass


class DirectionCountWarning(UserWarning):
    pass
