"""Nearest-neighbour similarity between generated samples and training data.

All searches are exact brute force over a feature space given by `feature_fn` (identity when
None). Cosine scores are clipped to [-1, 1]; ties go to the lowest training index.
"""

import logging
from dataclasses import dataclass

import numpy as np
import petl as etl
from scipy.spatial.distance import cdist
from scipy.stats import norm

from cpsample_lab.common import AuditException, ShapeMismatchException
from cpsample_lab.libaudit.report import Report
from cpsample_lab.libtensor import as_array

log = logging.getLogger(__name__)

HISTOGRAM_BINS = 50


def lifted_features(lift=1.0):
    """feature_fn that appends the constant coordinate `lift` to every row.

    Plain 2-D cosine similarity only sees direction, so points on one ray look identical. After
    lifting, similarity 1 means the same point, and L2 distances are unchanged.
    """
    if lift <= 0:
        raise AuditException(f"lift must be positive, got {lift}")

    def lifted(x):
        x = np.asarray(as_array(x), dtype=np.float64)
        x = x.reshape(x.shape[0], -1)
        return np.concatenate([x, np.full((x.shape[0], 1), float(lift))], axis=1)

    return lifted


def feature_rows(x, feature_fn):
    x = np.asarray(as_array(x), dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    f = x if feature_fn is None else np.asarray(feature_fn(x), dtype=np.float64)
    return f.reshape(f.shape[0], -1)


def _unit_rows(f, what):
    norms = np.linalg.norm(f, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise AuditException(f"zero vector in {what}: cosine similarity is undefined")
    return f / norms


def cosine_similarity(a, b):
    a = np.asarray(as_array(a)).reshape(-1)
    b = np.asarray(as_array(b)).reshape(-1)
    if a.shape != b.shape:
        raise ShapeMismatchException(f"cosine_similarity: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise AuditException("zero vector: cosine similarity is undefined")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_matrix(a, b, feature_fn=None):
    """[len(a), len(b)] cosine similarities between rows."""
    fa = _unit_rows(feature_rows(a, feature_fn), "queries")
    fb = _unit_rows(feature_rows(b, feature_fn), "dataset")
    if fa.shape[1] != fb.shape[1]:
        raise ShapeMismatchException(f"feature widths differ: {fa.shape[1]} vs {fb.shape[1]}")
    return np.clip(fa @ fb.T, -1.0, 1.0)


def nearest_neighbors(queries, dataset, feature_fn=None):
    """(indices, scores) of the most cosine-similar dataset row for every query."""
    if len(as_array(dataset)) == 0:
        raise AuditException("nearest neighbour search over an empty dataset")
    sims = cosine_matrix(queries, dataset, feature_fn)
    idx = np.argmax(sims, axis=1)
    return idx, sims[np.arange(len(idx)), idx]


def nearest_neighbor(x, dataset, feature_fn=None):
    idx, scores = nearest_neighbors(np.asarray(as_array(x))[None, ...], dataset, feature_fn)
    return int(idx[0]), float(scores[0])


def nearest_distance(samples, train, metric="l2", feature_fn=None):
    """Distance from every sample to its closest training point.

    metric 'l2' is Euclidean distance; 'cosine' is 1 - cosine similarity in feature space.
    """
    if len(as_array(train)) == 0:
        raise AuditException("nearest neighbour search over an empty dataset")
    if metric == "l2":
        dist = cdist(feature_rows(samples, feature_fn), feature_rows(train, feature_fn))
        return dist.min(axis=1)
    if metric == "cosine":
        return 1.0 - cosine_matrix(samples, train, feature_fn).max(axis=1)
    raise AuditException(f"unknown metric '{metric}' (use 'l2' or 'cosine')")


def exceedance_test(frac_base, n_base, frac_cp, n_cp):
    """One-sided two-proportion z-test of H0: CPSample's exceedance fraction >= the baseline's.

    Returns (p_value, degenerate). A pooled proportion of exactly 0 or 1 gives (1.0, True).
    """
    if n_base < 1 or n_cp < 1:
        raise AuditException("exceedance_test needs at least one sample on each side")
    pooled = (frac_base * n_base + frac_cp * n_cp) / (n_base + n_cp)
    if pooled <= 0 or pooled >= 1:
        return 1.0, True
    se = np.sqrt(pooled * (1 - pooled) * (1 / n_base + 1 / n_cp))
    return float(norm.sf((frac_base - frac_cp) / se)), False


@dataclass
class SimilarityReport(Report):
    REPORT_NAME = "similarity_report"

    nearest_index: np.ndarray
    scores: np.ndarray
    threshold: float
    fraction_above: float
    histogram: np.ndarray
    bin_edges: np.ndarray
    n_samples: int
    p_value: float = None
    test_degenerate: bool = False

    def histogram_table(self):
        rows = zip(self.bin_edges[:-1], self.bin_edges[1:], self.histogram)
        body = [(float(lo), float(hi), int(c)) for lo, hi, c in rows]
        return etl.wrap([("bin_lo", "bin_hi", "count"), *body])

    def write_histogram(self, path):
        etl.tocsv(self.histogram_table(), path)


def similarity_report(samples, train, feature_fn=None, threshold=0.97, baseline=None):
    """Nearest-neighbour cosine scores, the fraction above `threshold` and a 50-bin histogram.

    Scores below 0 are counted in the first histogram bin so the bins always sum to the
    number of samples. With a `baseline` report (eg: unguided samples), p_value tests whether
    this run exceeds the threshold less often.
    """
    if len(as_array(samples)) == 0:
        raise AuditException("similarity_report needs at least one sample")
    idx, scores = nearest_neighbors(samples, train, feature_fn)
    counts, edges = np.histogram(np.clip(scores, 0.0, 1.0), bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    report = SimilarityReport(
        nearest_index=idx,
        scores=scores,
        threshold=threshold,
        fraction_above=float(np.mean(scores > threshold)),
        histogram=counts,
        bin_edges=edges,
        n_samples=len(scores),
    )
    if baseline is not None:
        report.p_value, report.test_degenerate = exceedance_test(
            baseline.fraction_above, baseline.n_samples, report.fraction_above, report.n_samples
        )
    log.info(
        "similarity: %.4f of %d samples above %.3g", report.fraction_above, len(scores), threshold
    )
    return report


def calibrate_thresholds(heldout, train, rate, metric="l2", feature_fn=None):
    """(threshold, delta) such that a fraction `rate` of held-out points counts as a copy.

    threshold is the (1 - rate) quantile of the held-out nearest-neighbour cosine scores, delta
    the `rate` quantile of their nearest distances under `metric`. Points the model never saw
    then exceed the threshold (or fall inside the balls) at about `rate`.
    """
    if not 0 < rate < 1:
        raise AuditException(f"calibration rate must lie in (0, 1), got {rate}")
    if len(as_array(heldout)) == 0:
        raise AuditException("calibration needs held-out points")
    _, scores = nearest_neighbors(heldout, train, feature_fn)
    dist = nearest_distance(heldout, train, metric, feature_fn)
    threshold = float(np.quantile(scores, 1.0 - rate))
    delta = float(np.quantile(dist, rate))
    if delta <= 0:
        raise AuditException("held-out points coincide with training points: delta would be 0")
    log.info(
        "calibrated on %d held-out points: threshold %.6g, delta %.4g", len(dist), threshold, delta
    )
    return threshold, delta


@dataclass
class BallReport(Report):
    REPORT_NAME = "ball_report"

    delta: float
    metric: str
    distances: np.ndarray
    inside: np.ndarray
    fraction_inside: float
    n_samples: int

    @property
    def fraction_outside(self):
        return 1.0 - self.fraction_inside


def ball_report(samples, train, delta, metric="l2", feature_fn=None):
    """Which samples fall inside the union of delta-balls around the training points."""
    if delta <= 0:
        raise AuditException(f"delta must be positive, got {delta}")
    dist = nearest_distance(samples, train, metric, feature_fn)
    inside = dist <= delta
    return BallReport(delta, metric, dist, inside, float(np.mean(inside)), len(dist))
