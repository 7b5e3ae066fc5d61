import os
from dotenv import load_dotenv

load_dotenv(override=True)

class Config:
    THREADS = int(os.getenv("MFMUSIC_THREADS", "0"))
    LOG_LEVEL = os.getenv("MFMUSIC_LOG_LEVEL", "INFO").upper()

    # Reconstruction defaults - overridable per run
    GAP_RATIO = float(os.getenv("MFMUSIC_GAP_RATIO", "1e-2"))
    QUAD_ORDER = int(os.getenv("MFMUSIC_QUAD_ORDER", "12"))
    PEAK_THRESHOLD = float(os.getenv("MFMUSIC_PEAK_THRESHOLD", "0.5"))
    PEAK_SEPARATION = float(os.getenv("MFMUSIC_PEAK_SEPARATION", "1.0"))
    GRID_POINTS = int(os.getenv("MFMUSIC_GRID_POINTS", "41"))
    STATIONARITY_WINDOW = 2

    # Numerical tolerances
    COLLAPSE_TOL = 1e-12
    CANCEL_TOL = 1e-14
    INDEPENDENCE_TOL = 1e-9
    DISTINCT_TOL = 1e-9
    UNIT_NORM_TOL = 1e-12
    MOMENT_RTOL = 1e-12
    RESIDUAL_FLOOR = 1e-12
    RANK_DEFICIENT_TOL = 1e-14

    # Output settings
    SIGNIFICANT_DIGITS = 12
    RNG_ALGORITHM = "PCG64"

    @classmethod
    def worker_count(cls) -> int:
        """Resolve MFMUSIC_THREADS (0 = one worker per cpu)"""
        if cls.THREADS > 0:
            return cls.THREADS
        return os.cpu_count() or 1
