"""Grid over CPSample's (alpha, scale): replication, inside-S rate and quality per setting.

Every grid point samples from the same seed as one unguided DDIM baseline run, so rows differ
only in the guidance settings. The tuned setting is the row with the fewest replications among
those whose Fréchet distance stays within `quality_ratio` times the baseline's.
"""

import dataclasses
import logging
from dataclasses import dataclass, field

import petl as etl

from cpsample_lab.libaudit import ball_report, similarity_report
from cpsample_lab.libaudit.report import Report
from cpsample_lab.libquality.frechet import frechet_report
from cpsample_lab.libsampler import cpsample_generate, ddim_generate

log = logging.getLogger(__name__)

SWEEP_HEADER = (
    "alpha",
    "scale",
    "fraction_above",
    "p_value",
    "fraction_inside",
    "frechet_distance",
    "trigger_rate",
)


@dataclass
class SweepReport(Report):
    REPORT_NAME = "sweep_report"

    threshold: float
    delta: float
    n_samples: int
    quality_ratio: float
    baseline: dict
    rows: list = field(default_factory=list)
    tuned: dict = None

    def table(self):
        return etl.fromdicts(self.rows, header=SWEEP_HEADER)

    def write_table(self, path):
        etl.tocsv(self.table(), path)


def _measure(samples, train, reference, classifier, limits, metric, feature_fn, mode, base=None):
    threshold, delta = limits
    sim = similarity_report(samples, train, feature_fn, threshold, baseline=base)
    ball = ball_report(samples, train, delta, metric, feature_fn)
    quality = frechet_report(samples, reference, classifier, mode)
    row = {
        "fraction_above": sim.fraction_above,
        "p_value": sim.p_value,
        "fraction_inside": ball.fraction_inside,
        "frechet_distance": quality.frechet_distance,
    }
    return row, sim


def tune(rows, baseline, quality_ratio=2.0):
    """Row with the lowest (fraction_above, fraction_inside) within the quality budget, or None."""
    budget = quality_ratio * baseline["frechet_distance"]
    ok = [r for r in rows if r["frechet_distance"] <= budget]
    if not ok:
        return None
    return min(
        ok, key=lambda r: (r["fraction_above"], r["fraction_inside"], r["frechet_distance"])
    )


def guidance_sweep(
    denoiser,
    classifier,
    schedule,
    cfg,
    grid,
    train,
    reference,
    n,
    seed,
    limits,
    metric="l2",
    feature_fn=None,
    mode="identity",
    quality_ratio=2.0,
    **kwargs,
):
    """Sample n points per (alpha, scale) in `grid` and measure each against the baseline.

    `limits` is (threshold, delta). Remaining kwargs go to the samplers (threads, progress).
    """
    measure = dict(
        train=train,
        reference=reference,
        classifier=classifier,
        limits=limits,
        metric=metric,
        feature_fn=feature_fn,
        mode=mode,
    )
    plain = ddim_generate(denoiser, schedule, n, seed, cfg, **kwargs)
    baseline, base_sim = _measure(plain.samples, **measure)
    rows = []
    for alpha, scale in grid:
        g = dataclasses.replace(cfg, alpha=alpha, scale=scale, record_trace=False)
        run = cpsample_generate(denoiser, classifier, schedule, g, n, seed, **kwargs)
        row, _ = _measure(run.samples, base=base_sim, **measure)
        row = {"alpha": alpha, "scale": scale, **row, "trigger_rate": run.trigger_rate}
        log.info(
            "sweep alpha=%g scale=%g: above %.4f, inside %.4f, frechet %.4g",
            alpha,
            scale,
            row["fraction_above"],
            row["fraction_inside"],
            row["frechet_distance"],
        )
        rows.append(row)
    threshold, delta = limits
    report = SweepReport(threshold, delta, n, quality_ratio, baseline, rows)
    report.tuned = tune(rows, baseline, quality_ratio)
    return report
