"""Permutation test: are samples closer to the protected subset than to other training data?

a0 is the best nearest-neighbour cosine score between k samples and the protected subset S.
Each replicate draws k samples and k reference points, without replacement, and records the
same statistic. Reference points come from T minus S, not from the whole training set T, so a
replicate never reuses a protected point; the null (samples are no closer to S than to any
other k training points) keeps a0 and the replicates exchangeable either way.
"""

import logging
from dataclasses import dataclass

import numpy as np
import tqdm

from cpsample_lab.common import AuditException
from cpsample_lab.libaudit.report import Report
from cpsample_lab.libaudit.similarity import cosine_matrix, feature_rows

log = logging.getLogger(__name__)

MIN_REPLICATES = 100


@dataclass
class PermutationReport(Report):
    REPORT_NAME = "permutation_report"

    a0: float
    replicates: np.ndarray
    p_hat: float
    p_value: float
    level: float
    reject: bool


def _complement(subset, full):
    """Rows of `full` that do not appear in `subset` (exact match)."""
    taken = {row.tobytes() for row in subset}
    keep = [i for i, row in enumerate(full) if row.tobytes() not in taken]
    return full[keep]


def permutation_test(
    samples, subset, train, n_replicates=1000, feature_fn=None, seed=0, level=0.05, progress=False
):
    """Returns a PermutationReport; p_hat = mean(a0 > a_i), p_value = (1 + #{a_i >= a0}) / (l + 1).

    Replicate references are drawn from `train` rows that are not in `subset`. The null is
    rejected when p_value <= level.
    """
    fp = feature_rows(samples, feature_fn)
    fs = feature_rows(subset, feature_fn)
    ft = feature_rows(train, feature_fn)
    k = len(fs)
    if n_replicates < MIN_REPLICATES:
        raise AuditException(f"need at least {MIN_REPLICATES} replicates, got {n_replicates}")
    if len(ft) < 2 * k:
        raise AuditException(f"training set ({len(ft)}) must be at least twice the subset ({k})")
    if len(fp) < k:
        raise AuditException(f"need at least {k} samples, got {len(fp)}")
    reference = _complement(fs, ft)
    if len(reference) < k:
        raise AuditException(f"only {len(reference)} training points lie outside the subset")

    rng = np.random.default_rng(seed)
    pick = rng.choice(len(fp), size=k, replace=False)
    a0 = float(cosine_matrix(fp[pick], fs).max())
    reps = np.empty(n_replicates)
    for i in tqdm.trange(n_replicates, desc="permutation", disable=not progress, leave=False):
        ref = reference[rng.choice(len(reference), size=k, replace=False)]
        draw = fp[rng.choice(len(fp), size=k, replace=False)]
        reps[i] = cosine_matrix(draw, ref).max()

    p_value = (1.0 + np.sum(reps >= a0)) / (n_replicates + 1.0)
    report = PermutationReport(
        a0=a0,
        replicates=reps,
        p_hat=float(np.mean(a0 > reps)),
        p_value=float(p_value),
        level=level,
        reject=bool(p_value <= level),
    )
    log.info("permutation test: a0=%.4f p_hat=%.3f p=%.4f", a0, report.p_hat, report.p_value)
    return report
