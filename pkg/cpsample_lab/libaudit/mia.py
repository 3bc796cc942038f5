"""Reconstruction-loss membership inference: per-item errors and the one-sided Z-test."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from cpsample_lab.common import AuditException
from cpsample_lab.libaudit.report import Report
from cpsample_lab.libdiffusion import corrupt
from cpsample_lab.libtensor import as_array

log = logging.getLogger(__name__)

MIN_SIDE = 30


def mia_error(eps_hat_fn, xs, t, schedule, seed, repeats=1):
    """||eps - eps_hat(sqrt(ab_t) x + sqrt(1 - ab_t) eps, t)||^2 for each item.

    `eps_hat_fn(x_t, t)` returns the noise prediction for a batch. With repeats=k each item gets
    k independent eps draws and its error is their mean, so the result always has one entry per
    item. Draws on the same item are correlated; only the per-item means are independent.
    """
    schedule.check_t(t)
    if repeats < 1:
        raise AuditException(f"repeats must be >= 1, got {repeats}")
    xs = np.asarray(as_array(xs))
    rng = np.random.default_rng(seed)
    x0 = np.repeat(xs, repeats, axis=0)
    eps = rng.standard_normal(x0.shape)
    x_t = corrupt(x0, np.full(len(x0), t), eps, schedule)
    pred = np.asarray(as_array(eps_hat_fn(x_t, t)))
    errors = np.sum((eps - pred) ** 2, axis=tuple(range(1, eps.ndim)))
    return errors.reshape(len(xs), repeats).mean(axis=1)


@dataclass
class MiaReport(Report):
    REPORT_NAME = "mia_report"

    n: int
    m: int
    mu_train: float
    mu_test: float
    var_train: float
    var_test: float
    z: float
    p: float


def mia_z_test(train_errors, test_errors):
    """z = (mu_test - mu_train) / sqrt(V_test/m + V_train/n); p = 1 - Phi(z).

    A small p is evidence that training items are reconstructed better than held-out ones.
    """
    train = np.asarray(train_errors, dtype=np.float64)
    test = np.asarray(test_errors, dtype=np.float64)
    n, m = len(train), len(test)
    if n < MIN_SIDE or m < MIN_SIDE:
        raise AuditException(f"need at least {MIN_SIDE} errors per side, got n={n}, m={m}")
    v_train, v_test = train.var(ddof=1), test.var(ddof=1)
    if v_train == 0 and v_test == 0:
        raise AuditException("both error sets have zero variance")
    z = (test.mean() - train.mean()) / np.sqrt(v_test / m + v_train / n)
    report = MiaReport(
        n, m, float(train.mean()), float(test.mean()), float(v_train), float(v_test),
        float(z), float(norm.sf(z)),
    )  # fmt: skip
    log.info("membership inference: z=%.3f p=%.3g (n=%d, m=%d)", report.z, report.p, n, m)
    return report
