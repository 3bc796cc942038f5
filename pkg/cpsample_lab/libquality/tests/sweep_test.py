import json

import numpy as np
import petl as etl
import pytest

from cpsample_lab.libdiffusion import linear_schedule
from cpsample_lab.libmodels import GaussianOracleDenoiser, LogisticClassifier
from cpsample_lab.libquality import guidance_sweep, tune
from cpsample_lab.libquality.sweep import SWEEP_HEADER
from cpsample_lab.libsampler import GuidanceConfig


@pytest.fixture(scope="module")
def sweep():
    schedule = linear_schedule(200)
    oracle = GaussianOracleDenoiser([0.5, -0.5], 1.0, schedule)
    clf = LogisticClassifier([3.0, 0.0])
    rng = np.random.default_rng(0)
    train = rng.normal(size=(20, 2)) + [0.5, -0.5]
    reference = rng.normal(size=(200, 2)) + [0.5, -0.5]
    grid = [(0.1, 0.0), (0.1, 1.0), (0.01, 2.0)]
    cfg = GuidanceConfig(stride=20)
    return guidance_sweep(
        oracle, clf, schedule, cfg, grid, train, reference, 50, 4, (0.99, 0.1), dim=2
    )


def test_one_row_per_grid_point(sweep):
    assert [(r["alpha"], r["scale"]) for r in sweep.rows] == [(0.1, 0.0), (0.1, 1.0), (0.01, 2.0)]
    assert (sweep.threshold, sweep.delta, sweep.n_samples) == (0.99, 0.1, 50)
    for row in sweep.rows:
        assert 0.0 <= row["fraction_above"] <= 1.0
        assert 0.0 <= row["fraction_inside"] <= 1.0
        assert row["frechet_distance"] >= 0.0
        assert row["p_value"] is not None


def test_zero_scale_row_matches_the_baseline(sweep):
    row = sweep.rows[0]
    for key in ("fraction_above", "fraction_inside", "frechet_distance"):
        assert row[key] == sweep.baseline[key]


def test_table_and_report(sweep, tmp_path):
    assert etl.header(sweep.table()) == SWEEP_HEADER
    path = tmp_path / "sweep.csv"
    sweep.write_table(str(path))
    assert etl.nrows(etl.fromcsv(str(path))) == 3
    doc = json.loads(sweep.to_json())
    assert len(doc["sweep_report"]["rows"]) == 3
    assert doc["sweep_report"]["tuned"] in doc["sweep_report"]["rows"]


def test_tuned_setting_respects_the_quality_budget():
    baseline = {"frechet_distance": 1.0}
    rows = [
        {"alpha": 0.1, "fraction_above": 0.00, "fraction_inside": 0.0, "frechet_distance": 2.5},
        {"alpha": 0.01, "fraction_above": 0.02, "fraction_inside": 0.1, "frechet_distance": 1.5},
        {"alpha": 0.001, "fraction_above": 0.02, "fraction_inside": 0.0, "frechet_distance": 1.9},
    ]
    assert tune(rows, baseline, 2.0)["alpha"] == 0.001
    assert tune(rows, baseline, 3.0)["alpha"] == 0.1
    assert tune(rows, baseline, 1.0) is None
