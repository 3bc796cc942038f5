"""Acceptance checks evaluated on the report files of a finished pipeline run."""

import json
import logging
import os
from dataclasses import dataclass

log = logging.getLogger(__name__)

MIN_BASELINE_EXCEEDANCE = 0.03
REDUCTION_FACTOR = 5.0
SIGNIFICANCE = 0.01
MIA_PASS = 0.05
QUALITY_RATIO = 2.0
GEOMETRIC_TOLERANCE = 0.2


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def _load(out, name):
    with open(os.path.join(out, name)) as f:
        return json.load(f)


def check_replication(out):
    doc = _load(out, "similarity_report.json")
    cp, base = doc["similarity_report"], doc["ddim"]
    f_base, f_cp, p = base["fraction_above"], cp["fraction_above"], cp["p_value"]
    passed = (
        f_base >= MIN_BASELINE_EXCEEDANCE
        and f_cp * REDUCTION_FACTOR <= f_base
        and p is not None
        and p < SIGNIFICANCE
    )
    return Check("replication", passed, f"ddim {f_base:.4f} -> cpsample {f_cp:.4f}, p={p}")


def check_mia(out):
    doc = _load(out, "mia_report.json")
    p_plain = doc["mia_report"]["p"]
    ps = [row["p"] for row in doc["cpsample"]]
    passed = (
        p_plain < SIGNIFICANCE
        and any(p > MIA_PASS for p in ps)
        and all(p >= SIGNIFICANCE for p in ps)
    )
    listing = ", ".join(f"{row['alpha']:g}:{row['p']:.3g}" for row in doc["cpsample"])
    return Check("mia", passed, f"unprotected p={p_plain:.3g}; cpsample p by alpha {listing}")


def check_lemma(out):
    doc = _load(out, "lemma_report.json")["lemma_report"]
    detail = f"outside {doc['empirical_outside']:.4f} vs bound {doc['bound']:.4f}"
    if doc["vacuous"]:
        detail += " (vacuous)"
    return Check("lemma", bool(doc["passed"]), detail)


def check_quality(out):
    doc = _load(out, "frechet_report.json")
    ratio = doc["ratio"]
    passed = ratio is not None and ratio <= QUALITY_RATIO
    cp, base = doc["frechet_report"]["frechet_distance"], doc["ddim"]["frechet_distance"]
    return Check("quality", passed, f"frechet cpsample {cp:.4g} / ddim {base:.4g} = {ratio}")


def check_rejection(out):
    doc = _load(out, "ball_report.json")
    inside_cp = doc["ball_report"]["fraction_inside"]
    inside_rej = doc["rejection"]["fraction_inside"] if "rejection" in doc else None
    q = doc["ddim"]["fraction_inside"]
    accepted = doc["rejection_accepted"]
    if inside_rej is None or doc["rejection_exhausted"] or q >= 1.0:
        return Check("rejection", False, "rejection sampler did not fill every slot")
    observed = doc["rejection_tries"] / accepted
    # first candidates are the ddim samples, so acceptance is 1 - q per draw
    expected = 1.0 / (1.0 - q)
    passed = (
        inside_rej == 0.0
        and inside_cp <= 2.0 * inside_rej
        and abs(observed - expected) <= GEOMETRIC_TOLERANCE * expected
    )
    detail = (
        f"inside: rejection {inside_rej:.4f}, cpsample {inside_cp:.4f}; "
        f"tries/accept {observed:.3f} vs {expected:.3f}"
    )
    return Check("rejection", passed, detail)


CHECKS = [check_replication, check_mia, check_lemma, check_quality, check_rejection]


def run_checks(out):
    results = []
    for check in CHECKS:
        try:
            results.append(check(out))
        except (OSError, KeyError, ValueError, TypeError) as e:
            results.append(Check(check.__name__[len("check_") :], False, f"unreadable: {e}"))
    for r in results:
        log.info("check %s: %s (%s)", r.name, "PASS" if r.passed else "FAIL", r.detail)
    return results
