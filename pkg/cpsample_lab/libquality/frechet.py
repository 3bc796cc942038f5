"""Fréchet distance between Gaussian fits of two feature sets.

d^2 = ||mu_a - mu_b||^2 + tr(S_a) + tr(S_b) - 2 tr((S_a^1/2 S_b S_a^1/2)^1/2)

The symmetric form keeps every intermediate symmetric PSD, so only symmetric eigendecompositions
are needed. Roundoff can still produce slightly negative eigenvalues; they are clamped to 0.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from cpsample_lab.common import QualityException, ShapeMismatchException
from cpsample_lab.libaudit.report import Report
from cpsample_lab.libtensor import Tensor, as_array

log = logging.getLogger(__name__)

REGULARIZER = 1e-6
SYMMETRY_TOL = 1e-10
CLAMP_WARN = 1e-8
FEATURE_MODES = ("identity", "classifier")


@dataclass
class GaussianMoments:
    mean: np.ndarray
    cov: np.ndarray
    n: int = 0
    regularized: bool = False

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        k = len(self.mean)
        if self.cov.shape != (k, k):
            raise ShapeMismatchException(f"covariance {self.cov.shape} for a {k}-dim mean")
        if not np.allclose(self.cov, self.cov.T, rtol=0, atol=SYMMETRY_TOL):
            raise QualityException("covariance is not symmetric")

    @property
    def dim(self):
        return len(self.mean)


def extract_features(classifier, xs, mode="classifier"):
    """Rows in the space the quality metric works in.

    'identity' passes the data through (fine for 2-D data); 'classifier' takes the penultimate
    trunk activations of the classifier at t=0.
    """
    if mode not in FEATURE_MODES:
        raise QualityException(f"unknown feature mode '{mode}' (use one of {FEATURE_MODES})")
    x = as_array(xs)
    if mode == "identity":
        return Tensor(x)
    if classifier is None:
        raise QualityException("feature mode 'classifier' needs a classifier")
    return Tensor(classifier.features(x))


def fit_gaussian(features):
    """Sample mean and unbiased covariance. With fewer than k+1 rows a 1e-6 ridge is added."""
    f = np.asarray(as_array(features), dtype=np.float64)
    f = f.reshape(f.shape[0], -1)
    n, k = f.shape
    if n < 2:
        raise QualityException(f"need at least 2 rows to fit a Gaussian, got {n}")
    cov = np.atleast_2d(np.cov(f, rowvar=False, ddof=1))
    regularized = n < k + 1
    if regularized:
        log.warning("fit_gaussian: %d rows for %d features, adding %g ridge", n, k, REGULARIZER)
        cov = cov + REGULARIZER * np.eye(k)
    return GaussianMoments(f.mean(axis=0), cov, n, regularized)


def _psd_eigvals(m, what):
    try:
        w, v = linalg.eigh((m + m.T) / 2.0)
    except linalg.LinAlgError as e:
        raise QualityException(f"eigendecomposition of {what} failed: {e}") from e
    low = w.min()
    if low < -CLAMP_WARN:
        log.warning("%s: clamped negative eigenvalue %.3g", what, low)
    elif low < 0:
        log.debug("%s: clamped negative eigenvalue %.3g", what, low)
    return np.clip(w, 0.0, None), v


def frechet_distance(a, b):
    if a.dim != b.dim:
        raise ShapeMismatchException(f"frechet_distance: dims {a.dim} vs {b.dim}")
    w, v = _psd_eigvals(a.cov, "cov_a")
    root_a = (v * np.sqrt(w)) @ v.T
    inner, _ = _psd_eigvals(root_a @ b.cov @ root_a, "cov_a^1/2 cov_b cov_a^1/2")
    diff = a.mean - b.mean
    d = diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.sum(np.sqrt(inner))
    return float(max(d, 0.0))


@dataclass
class FrechetReport(Report):
    REPORT_NAME = "frechet_report"

    frechet_distance: float
    feature_mode: str
    n_samples: int
    n_reference: int
    regularized: bool = False
    notes: list = field(default_factory=list)


def frechet_report(samples, reference, classifier=None, mode="identity"):
    a = fit_gaussian(extract_features(classifier, samples, mode))
    b = fit_gaussian(extract_features(classifier, reference, mode))
    report = FrechetReport(
        frechet_distance=frechet_distance(a, b),
        feature_mode=mode,
        n_samples=a.n,
        n_reference=b.n,
        regularized=a.regularized or b.regularized,
    )
    if report.regularized:
        report.notes.append(f"covariance ridge {REGULARIZER:g} added (too few rows)")
    log.info("frechet distance %.5g (%s features)", report.frechet_distance, mode)
    return report
