import numpy as np
import petl as etl
import pytest

from cpsample_lab.common import GuidanceException, MaxTriesExhaustedException
from cpsample_lab.libaudit import nearest_distance
from cpsample_lab.libdiffusion import ddim_update, linear_schedule
from cpsample_lab.libmodels import GaussianOracleDenoiser, LogisticClassifier, prob1
from cpsample_lab.libsampler import (
    GuidanceConfig,
    classifier_guided_eps,
    cp_epsilon_hat,
    cpsample_generate,
    ddim_generate,
    ddpm_generate,
    rejection_sample,
)
from cpsample_lab.libsampler import guided


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


@pytest.fixture
def schedule():
    return linear_schedule(200)


@pytest.fixture
def oracle(schedule):
    return GaussianOracleDenoiser([0.5, -0.5], 1.0, schedule)


# config ----------------------------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [dict(alpha=0.0), dict(alpha=0.5), dict(scale=-1.0), dict(tau=0.0), dict(stride=0)],
)
def test_guidance_config_preconditions(kwargs):
    with pytest.raises(ValueError):
        GuidanceConfig(**kwargs)


# the CPSample rule -----------------------------------------------------------------------


def test_zero_scale_leaves_eps_untouched(oracle, schedule):
    clf = LogisticClassifier([5.0, 0.0])
    x = np.array([[2.0, 1.0], [-2.0, 0.0], [0.0, 3.0]])
    eps_hat, triggered, _ = cp_epsilon_hat(oracle, clf, x, 50, GuidanceConfig(0.1, 0.0), schedule)
    assert eps_hat.data.tobytes() == oracle.predict(x, 50).tobytes()
    assert triggered.tolist() == [True, True, False]


def test_dead_zone_is_untriggered(oracle, schedule):
    clf = LogisticClassifier([0.0, 0.0])
    x = np.array([1.0, -2.0])
    cfg = GuidanceConfig(0.25, 3.0)
    eps_hat, triggered, p1 = cp_epsilon_hat(oracle, clf, x, 10, cfg, schedule)
    assert p1 == 0.5 and triggered is False
    assert eps_hat.data.tobytes() == oracle.predict(x[None, :], 10)[0].tobytes()


@pytest.mark.parametrize("logit", [4.0, -4.0])
def test_logistic_oracle(oracle, schedule, logit):
    w = np.array([2.0, -1.0])
    clf = LogisticClassifier(w)
    x = w * logit / (w @ w)
    cfg = GuidanceConfig(alpha=0.1, scale=2.0, tau=0.001)
    t = 80
    eps_hat, triggered, p1 = cp_epsilon_hat(oracle, clf, x, t, cfg, schedule)
    assert triggered
    assert p1 == pytest.approx(sigmoid(logit))

    # guided label is the unconfident one: y=0 when p1 is high, y=1 when low
    p_guided = sigmoid(-logit) if logit > 0 else sigmoid(logit)
    sign = -1.0 if logit > 0 else 1.0
    grad = sign * p_guided * (1 - p_guided) * w / (cfg.tau + p_guided)
    expected = -cfg.scale * np.sqrt(1 - schedule.alpha_bar[t]) * grad
    diff = eps_hat.data - oracle.predict(x[None, :], t)[0]
    np.testing.assert_allclose(diff, expected, rtol=1e-6)


def test_batch_rows_are_independent(oracle, schedule):
    clf = LogisticClassifier([3.0, 0.0])
    x = np.array([[2.0, 0.0], [0.1, 0.0], [-2.0, 1.0], [0.0, 5.0]])
    cfg = GuidanceConfig(alpha=0.2, scale=1.5)
    eps_hat, triggered, _ = cp_epsilon_hat(oracle, clf, x, 30, cfg, schedule)
    eps = oracle.predict(x, 30)
    assert triggered.tolist() == [True, False, True, False]
    for i in (1, 3):
        assert eps_hat.data[i].tobytes() == eps[i].tobytes()
    for i in (0, 2):
        single = cp_epsilon_hat(oracle, clf, x[i], 30, cfg, schedule)[0].data
        np.testing.assert_allclose(eps_hat.data[i], single, rtol=1e-12)


def test_triggered_step_moves_away_from_the_confident_label(oracle, schedule):
    clf = LogisticClassifier([1.0, 1.0])
    x = np.array([[2.0, 2.0]])
    t = 100
    ab = schedule.alpha_bar[t]
    cfg = GuidanceConfig(alpha=0.1, scale=5.0)
    eps_hat, triggered, p1 = cp_epsilon_hat(oracle, clf, x, t, cfg, schedule)
    assert triggered[0] and p1[0] > 0.9
    guided_x = ddim_update(eps_hat.data, x, ab, schedule.alpha_bar[t - 1])
    plain_x = ddim_update(oracle.predict(x, t), x, ab, schedule.alpha_bar[t - 1])
    assert prob1(clf, guided_x, t - 1)[0] < prob1(clf, plain_x, t - 1)[0]


# always-on guidance ----------------------------------------------------------------------


def test_classifier_guidance_with_zero_scale(oracle, schedule):
    clf = LogisticClassifier([1.0, 2.0])
    x = np.array([[0.3, 0.1]])
    out = classifier_guided_eps(oracle, clf, x, 20, 1, 0.0, schedule)
    assert out.data.tobytes() == oracle.predict(x, 20).tobytes()


def test_uniform_classifier_has_no_gradient(oracle, schedule):
    clf = LogisticClassifier([0.0, 0.0])
    x = np.array([[0.3, 0.1], [-4.0, 2.0]])
    out = classifier_guided_eps(oracle, clf, x, 20, 0, 3.0, schedule)
    np.testing.assert_array_equal(out.data, oracle.predict(x, 20))


def test_tau_limit_matches_plain_guidance(oracle, schedule):
    w = np.array([1.0, -1.0])
    clf = LogisticClassifier(w)
    x = np.array([[2.0, -1.0]])  # logit 3, p1 ~ 0.95
    cfg = GuidanceConfig(alpha=0.1, scale=1.0, tau=1e-9)
    eps = oracle.predict(x, 60)
    cp = cp_epsilon_hat(oracle, clf, x, 60, cfg, schedule)[0].data - eps
    plain = classifier_guided_eps(oracle, clf, x, 60, 0, 1.0, schedule).data - eps
    np.testing.assert_allclose(cp, plain, rtol=1e-3)


def test_zero_probability_is_an_error(oracle, schedule):
    clf = LogisticClassifier([1000.0, 0.0])
    with pytest.raises(GuidanceException):
        classifier_guided_eps(oracle, clf, np.array([[-1.0, 0.0]]), 20, 1, 1.0, schedule)


def test_bad_target_label(oracle, schedule):
    with pytest.raises(ValueError):
        clf = LogisticClassifier([1.0, 0.0])
        classifier_guided_eps(oracle, clf, np.zeros((1, 2)), 5, 2, 1.0, schedule)


# samplers --------------------------------------------------------------------------------


def test_zero_scale_cpsample_equals_ddim(oracle, schedule):
    clf = LogisticClassifier([4.0, 0.0])
    cfg = GuidanceConfig(alpha=0.1, scale=0.0, stride=10)
    cp = cpsample_generate(oracle, clf, schedule, cfg, 100, seed=3, dim=2)
    base = ddim_generate(oracle, schedule, 100, seed=3, cfg=cfg, dim=2)
    assert cp.samples.data.tobytes() == base.samples.data.tobytes()
    assert cp.trigger_counts.sum() > 0


def test_output_does_not_depend_on_threads(oracle, schedule):
    clf = LogisticClassifier([2.0, 1.0])
    cfg = GuidanceConfig(alpha=0.2, scale=2.0, stride=20)
    runs = [
        cpsample_generate(oracle, clf, schedule, cfg, 150, 5, dim=2, threads=k) for k in (1, 4)
    ]
    assert runs[0].samples.data.tobytes() == runs[1].samples.data.tobytes()
    np.testing.assert_array_equal(runs[0].trigger_counts, runs[1].trigger_counts)


def test_samples_are_keyed_by_index(oracle, schedule):
    cfg = GuidanceConfig(stride=25)
    a = ddim_generate(oracle, schedule, 10, seed=9, cfg=cfg, dim=2).samples.data
    b = ddim_generate(oracle, schedule, 5, seed=9, cfg=cfg, dim=2).samples.data
    np.testing.assert_allclose(a[:5], b, rtol=1e-12)
    c = ddim_generate(oracle, schedule, 5, seed=10, cfg=cfg, dim=2).samples.data
    assert not np.allclose(b, c)


def test_trace(tmp_path, oracle, schedule):
    clf = LogisticClassifier([3.0, 0.0])
    cfg = GuidanceConfig(alpha=0.1, scale=1.0, stride=50, record_trace=True)
    run = cpsample_generate(oracle, clf, schedule, cfg, 6, seed=1, dim=2)
    assert [t for t, _ in run.steps] == [200, 150, 100, 50]
    assert len(run.trigger_counts) == len(run.steps)
    assert all(len(run.trace_of(i)) == len(run.steps) for i in range(6))
    path = tmp_path / "trace.csv"
    run.write_trace(str(path))
    table = etl.fromcsv(str(path))
    assert etl.header(table) == ("sample_id", "step", "t", "p1", "triggered")
    assert etl.nrows(table) == 6 * len(run.steps)


def test_trace_must_be_requested(oracle, schedule):
    run = ddim_generate(oracle, schedule, 2, seed=0, cfg=GuidanceConfig(stride=50), dim=2)
    with pytest.raises(ValueError):
        run.trace_table()


def test_ancestral_sampler_recovers_gaussian():
    s = linear_schedule(1000)
    oracle = GaussianOracleDenoiser([1.5], 0.5, s)
    run = ddpm_generate(oracle, s, 640, seed=2, dim=1)
    x = run.samples.data[:, 0]
    assert len(run.steps) == 1000
    assert x.mean() == pytest.approx(1.5, abs=0.1)
    assert x.std() == pytest.approx(0.5, rel=0.1)


def test_always_on_guidance_shifts_samples(oracle, schedule):
    clf = LogisticClassifier([1.0, 0.0])
    cfg = GuidanceConfig(scale=2.0, stride=10)
    pushed = guided.Sampler(oracle, schedule, cfg, target_y=1, classifier=clf)
    x = pushed.generate(200, seed=4, dim=2).samples.data
    base = ddim_generate(oracle, schedule, 200, seed=4, cfg=cfg, dim=2).samples.data
    assert x[:, 0].mean() > base[:, 0].mean()


def test_samplers_need_a_classifier(oracle, schedule):
    with pytest.raises(ValueError):
        cpsample_generate(oracle, None, schedule, GuidanceConfig(), 1, seed=0, dim=2)


# rejection -------------------------------------------------------------------------------


def test_tiny_delta_accepts_everything(oracle, schedule):
    train = np.random.default_rng(0).normal(size=(20, 2))
    cfg = GuidanceConfig(stride=20)
    samples, tries = rejection_sample(oracle, schedule, train, 1e-12, n=8, seed=6, cfg=cfg)
    assert tries == 8
    base = ddim_generate(oracle, schedule, 8, seed=6, cfg=cfg, dim=2).samples.data
    assert samples.data.tobytes() == base.tobytes()


def test_accepted_samples_avoid_the_balls(oracle, schedule):
    train = np.random.default_rng(1).normal(size=(30, 2))
    delta = 0.4
    samples, tries = rejection_sample(
        oracle, schedule, train, delta, n=20, seed=7, cfg=GuidanceConfig(stride=20)
    )
    assert samples.shape == [20, 2]
    assert tries >= 20
    d = np.sqrt(((samples.data[:, None, :] - train[None, :, :]) ** 2).sum(-1)).min(axis=1)
    assert np.all(d > delta)
    np.testing.assert_allclose(nearest_distance(samples.data, train), d)


def test_exhausted_tries_keep_partial_results(oracle, schedule):
    train = np.zeros((1, 2))
    with pytest.raises(MaxTriesExhaustedException) as info:
        cfg = GuidanceConfig(stride=50)
        rejection_sample(oracle, schedule, train, 1e6, max_tries=3, n=4, seed=0, cfg=cfg)
    assert info.value.tries_used == 12
    assert info.value.samples.shape == [0, 2]
