"""Random-matrix corrected tests of independence between two blocks of a
high-dimensional Gaussian vector."""

from .calibration import NullCalibration, calibrate, calibration_for, solve_wd
from .core import STATISTICS, DimensionError, Dims, MeanMode, PartitionedCov, RatioSet, TestOutcome, ratios, validate
from .rng import McConfig
from .spectral import FisherLSD, esd_from_eigs, fisher_lsd, integrate, ks_distance
from .statistics import decide, decide_mc, fisher_pair, raw_statistic, sample_cov

__version__ = "0.1.0"

__all__ = [
    "STATISTICS",
    "DimensionError",
    "Dims",
    "MeanMode",
    "PartitionedCov",
    "RatioSet",
    "TestOutcome",
    "ratios",
    "validate",
    "NullCalibration",
    "calibrate",
    "calibration_for",
    "solve_wd",
    "McConfig",
    "FisherLSD",
    "fisher_lsd",
    "integrate",
    "esd_from_eigs",
    "ks_distance",
    "decide",
    "decide_mc",
    "fisher_pair",
    "raw_statistic",
    "sample_cov",
]
