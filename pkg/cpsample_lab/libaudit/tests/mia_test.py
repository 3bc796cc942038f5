import numpy as np
import pytest
from scipy.stats import kstest

from cpsample_lab.common import AuditException, ScheduleException
from cpsample_lab.libaudit import mia_error, mia_z_test
from cpsample_lab.libdiffusion import linear_schedule


@pytest.fixture
def schedule():
    return linear_schedule(200)


def test_true_noise_gives_zero_error(schedule):
    xs = np.random.default_rng(0).normal(size=(50, 3))
    t = 50
    ab = schedule.alpha_bar[t]

    def exact(x_t, t):
        return (x_t - np.sqrt(ab) * xs) / np.sqrt(1 - ab)

    errors = mia_error(exact, xs, t, schedule, seed=1)
    assert errors.shape == (50,)
    assert np.all(errors < 1e-20)


def test_zero_prediction_error_is_dimension(schedule):
    xs = np.random.default_rng(2).normal(size=(5000, 2))
    errors = mia_error(lambda x_t, t: np.zeros_like(x_t), xs, 50, schedule, seed=3)
    assert errors.mean() == pytest.approx(2.0, abs=0.15)


def test_errors_are_reproducible(schedule):
    xs = np.random.default_rng(4).normal(size=(20, 2))
    fn = lambda x_t, t: 0.5 * x_t  # noqa: E731
    a = mia_error(fn, xs, 30, schedule, seed=5)
    b = mia_error(fn, xs, 30, schedule, seed=5)
    assert a.tobytes() == b.tobytes()


def test_repeats_are_averaged_per_item(schedule):
    xs = np.random.default_rng(6).normal(size=(8, 2))
    errors = mia_error(lambda x_t, t: np.zeros_like(x_t), xs, 30, schedule, seed=7, repeats=4)
    assert errors.shape == (8,)
    # a zero predictor's error is ||eps||^2, drawn item-major
    eps = np.random.default_rng(7).standard_normal((32, 2))
    expected = np.sum(eps**2, axis=1).reshape(8, 4).mean(axis=1)
    np.testing.assert_allclose(errors, expected, rtol=1e-12)


def test_repeated_draws_keep_the_null_calibrated(schedule):
    # members and non-members from one distribution; 16 correlated draws per item
    fn = lambda x_t, t: 0.5 * x_t  # noqa: E731
    trials = 200
    rejections = 0
    for trial in range(trials):
        rng = np.random.default_rng(100 + trial)
        train = rng.normal(scale=3.0, size=(64, 32))
        test = rng.normal(scale=3.0, size=(256, 32))
        a = mia_error(fn, train, 10, schedule, seed=2 * trial, repeats=16)
        b = mia_error(fn, test, 10, schedule, seed=2 * trial + 1, repeats=16)
        report = mia_z_test(a, b)
        assert (report.n, report.m) == (64, 256)
        rejections += report.p < 0.05
    # three binomial standard deviations above 0.05, plus slack for the skewed errors
    assert rejections / trials <= 0.12


def test_noise_level_must_be_valid(schedule):
    with pytest.raises(ScheduleException):
        mia_error(lambda x_t, t: x_t, np.zeros((2, 2)), 0, schedule, seed=0)


def test_z_statistic_formula():
    rng = np.random.default_rng(8)
    train = rng.normal(1.0, 0.5, size=40)
    test = rng.normal(1.2, 0.7, size=60)
    report = mia_z_test(train, test)
    z = (test.mean() - train.mean()) / np.sqrt(test.var(ddof=1) / 60 + train.var(ddof=1) / 40)
    assert report.z == pytest.approx(z)
    assert (report.n, report.m) == (40, 60)
    assert 0 <= report.p <= 1


def test_large_shift_is_detected():
    rng = np.random.default_rng(9)
    train = rng.normal(size=100)
    report = mia_z_test(train, train + 10 * train.std(ddof=1))
    assert report.p < 1e-6


def test_null_p_values_are_uniform():
    rng = np.random.default_rng(10)
    ps = [mia_z_test(rng.normal(size=100), rng.normal(size=100)).p for _ in range(500)]
    assert kstest(ps, "uniform").statistic < 0.1


def test_z_test_preconditions():
    with pytest.raises(AuditException):
        mia_z_test(np.ones(10), np.ones(50))
    with pytest.raises(AuditException):
        mia_z_test(np.ones(40), np.ones(40))
