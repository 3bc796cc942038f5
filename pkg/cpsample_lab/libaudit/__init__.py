from cpsample_lab.libaudit.lemma import (
    AssumptionReport,
    LemmaReport,
    estimate_local_lipschitz,
    lemma_bound,
    measure_assumptions,
    verify_lemma,
)
from cpsample_lab.libaudit.mia import MiaReport, mia_error, mia_z_test
from cpsample_lab.libaudit.permutation import PermutationReport, permutation_test
from cpsample_lab.libaudit.report import Report
from cpsample_lab.libaudit.similarity import (
    BallReport,
    SimilarityReport,
    ball_report,
    calibrate_thresholds,
    cosine_matrix,
    cosine_similarity,
    exceedance_test,
    lifted_features,
    nearest_distance,
    nearest_neighbor,
    nearest_neighbors,
    similarity_report,
)

__all__ = [
    "AssumptionReport",
    "BallReport",
    "LemmaReport",
    "MiaReport",
    "PermutationReport",
    "Report",
    "SimilarityReport",
    "ball_report",
    "calibrate_thresholds",
    "cosine_matrix",
    "cosine_similarity",
    "estimate_local_lipschitz",
    "exceedance_test",
    "lemma_bound",
    "lifted_features",
    "measure_assumptions",
    "mia_error",
    "mia_z_test",
    "nearest_distance",
    "nearest_neighbor",
    "nearest_neighbors",
    "permutation_test",
    "similarity_report",
    "verify_lemma",
]
