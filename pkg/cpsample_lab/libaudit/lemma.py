"""Empirical checks behind the rejection-sampling guarantee.

The guarantee says: if p(y=1|x,0) is L-Lipschitz, the classifier is (1 - kappa)-confident on its
memorized labels except with probability gamma, and generated samples have
lambda < p(y|x,0) < 1 - lambda except with probability nu (lambda = kappa + L delta), then for
delta < (1/2 - kappa) / L a sample lands outside every delta-ball around the training points
with probability at least (1 - nu)(1 - gamma).

Everything here measures one of those quantities. The Lipschitz estimate is a maximum of
sampled gradient norms and therefore only a lower bound on the true local constant.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import tqdm

from cpsample_lab.common import AuditException
from cpsample_lab.libaudit.report import Report
from cpsample_lab.libaudit.similarity import ball_report
from cpsample_lab.libdiffusion import corrupt
from cpsample_lab.libmodels import prob1
from cpsample_lab.libtensor import ComputeGraph, as_array, backward

log = logging.getLogger(__name__)

MIN_PROBES = 100
MIN_NOISE_DRAWS = 10
PROBE_CHUNK = 4096


def _prob1_gradients(classifier, x, t):
    g = ComputeGraph()
    g.sum(g.sigmoid(classifier.logit_node(g, g.leaf("x"), np.full(len(x), t))))
    bindings = dict(classifier.bindings())
    bindings["x"] = x
    return backward(g, bindings, {"x"})["x"].data


def ball_probes(centers, radius, n_probe, rng):
    """n_probe points uniform in the radius-ball around each center, center-major."""
    m, d = centers.shape
    directions = rng.standard_normal((m, n_probe, d))
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    radii = radius * rng.random((m, n_probe, 1)) ** (1.0 / d)
    return (centers[:, None, :] + radii * directions).reshape(m * n_probe, d)


def estimate_local_lipschitz(classifier, centers, t, radius, n_probe, seed, progress=False):
    """max ||grad_x p(y=1 | x, t)|| over probes in B_radius(center), for every center."""
    if radius <= 0:
        raise AuditException(f"radius must be positive, got {radius}")
    if n_probe < MIN_PROBES:
        raise AuditException(f"need at least {MIN_PROBES} probes per center, got {n_probe}")
    centers = np.asarray(as_array(centers))
    probes = ball_probes(centers, radius, n_probe, np.random.default_rng(seed))
    best = 0.0
    starts = range(0, len(probes), PROBE_CHUNK)
    for start in tqdm.tqdm(starts, desc="lipschitz", disable=not progress, leave=False):
        grads = _prob1_gradients(classifier, probes[start : start + PROBE_CHUNK], t)
        best = max(best, float(np.linalg.norm(grads, axis=1).max()))
    log.info("local Lipschitz estimate %.4g (lower bound, %d probes)", best, len(probes))
    return best


@dataclass
class AssumptionReport(Report):
    REPORT_NAME = "assumption_report"

    kappa: float
    n_noise: int
    gamma_by_t: dict
    # pooled over every (point, t, eps) draw on the grid
    gamma: float
    lam: float = None
    nu: float = None
    n_samples: int = 0


def measure_assumptions(
    classifier,
    train,
    labels,
    schedule,
    kappa,
    n_noise,
    seed,
    t_grid=None,
    samples=None,
    lam=None,
):
    """Measure the classifier-confidence violation rate gamma and, given samples and lambda,
    the sample-ambiguity violation rate nu.

    gamma: fraction of draws with p(y_i | x_t, t) <= 1 - kappa, x_t a noised training point, over
    t in `t_grid` (default 0..max(1, T // 40)). nu: fraction of samples with p(y=1 | x, 0)
    outside (lam, 1 - lam).
    """
    if not 0 < kappa < 0.5:
        raise AuditException(f"kappa must lie in (0, 0.5), got {kappa}")
    if n_noise < MIN_NOISE_DRAWS:
        raise AuditException(f"need at least {MIN_NOISE_DRAWS} noise draws, got {n_noise}")
    train = np.asarray(as_array(train))
    y = np.asarray(getattr(labels, "labels", labels))
    if len(y) != len(train):
        raise AuditException(f"{len(y)} labels for {len(train)} training points")
    if t_grid is None:
        t_grid = range(0, max(1, schedule.T // 40) + 1)
    rng = np.random.default_rng(seed)
    x0 = np.repeat(train, n_noise, axis=0)
    y0 = np.repeat(y, n_noise)

    gamma_by_t = {}
    violations = 0
    for t in t_grid:
        x_t = corrupt(x0, np.full(len(x0), t), rng.standard_normal(x0.shape), schedule)
        p1 = prob1(classifier, x_t, t)
        p_label = np.where(y0 == 1, p1, 1.0 - p1)
        bad = p_label <= 1.0 - kappa
        gamma_by_t[int(t)] = float(bad.mean())
        violations += int(bad.sum())
    gamma = violations / (len(x0) * len(gamma_by_t))
    report = AssumptionReport(kappa, n_noise, gamma_by_t, gamma)

    if samples is not None and lam is not None:
        p1 = prob1(classifier, samples, 0)
        report.lam = lam
        report.nu = float(np.mean((p1 <= lam) | (p1 >= 1.0 - lam)))
        report.n_samples = len(p1)
    log.info("assumptions: gamma=%.4f nu=%s (kappa=%.3g)", gamma, report.nu, kappa)
    return report


@dataclass
class LemmaReport(Report):
    REPORT_NAME = "lemma_report"

    lipschitz: float
    kappa: float
    gamma: float
    lam: float
    nu: float
    delta: float
    delta_max: float
    vacuous: bool
    bound: float
    empirical_outside: float
    n_samples: int
    passed: bool
    metric: str = "l2"
    lipschitz_is_lower_bound: bool = True
    notes: list = field(default_factory=list)


def lemma_bound(gamma, nu):
    return (1.0 - nu) * (1.0 - gamma)


def verify_lemma(lipschitz, kappa, gamma, nu, delta, samples, train, metric="l2", feature_fn=None):
    """Compare the empirical outside-S rate with (1 - nu)(1 - gamma). PASS iff it is at least
    the bound and delta < (1/2 - kappa) / L (otherwise the bound is reported vacuous)."""
    for name, value in (("kappa", kappa), ("gamma", gamma), ("nu", nu)):
        if not 0 <= value <= 1:
            raise AuditException(f"{name} must lie in [0, 1], got {value}")
    delta_max = (0.5 - kappa) / lipschitz if lipschitz > 0 else float("inf")
    balls = ball_report(samples, train, delta, metric, feature_fn)
    report = LemmaReport(
        lipschitz=float(lipschitz),
        kappa=float(kappa),
        gamma=float(gamma),
        lam=float(kappa + lipschitz * delta),
        nu=float(nu),
        delta=float(delta),
        delta_max=float(delta_max),
        vacuous=not delta < delta_max,
        bound=lemma_bound(gamma, nu),
        empirical_outside=balls.fraction_outside,
        n_samples=balls.n_samples,
        passed=False,
        metric=metric,
    )
    report.notes.append("Lipschitz constant is a sampled lower bound on the true local value")
    if report.vacuous:
        report.notes.append(f"delta={delta:.4g} is not below (1/2 - kappa)/L = {delta_max:.4g}")
        log.warning("lemma bound is vacuous: %s", report.notes[-1])
    else:
        report.passed = report.empirical_outside >= report.bound
    log.info(
        "lemma: outside %.4f vs bound %.4f -> %s",
        report.empirical_outside,
        report.bound,
        "PASS" if report.passed else "FAIL",
    )
    return report
