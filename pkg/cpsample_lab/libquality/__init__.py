from cpsample_lab.libquality.frechet import (
    FrechetReport,
    GaussianMoments,
    extract_features,
    fit_gaussian,
    frechet_distance,
    frechet_report,
)
from cpsample_lab.libquality.sweep import SweepReport, guidance_sweep, tune

__all__ = [
    "FrechetReport",
    "GaussianMoments",
    "SweepReport",
    "extract_features",
    "fit_gaussian",
    "frechet_distance",
    "frechet_report",
    "guidance_sweep",
    "tune",
]
