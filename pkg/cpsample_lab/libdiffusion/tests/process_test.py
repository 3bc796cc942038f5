import numpy as np
import pytest

from cpsample_lab.common import ScheduleException, ShapeMismatchException
from cpsample_lab.libdiffusion import (
    build_schedule,
    ddim_step,
    ddim_timesteps,
    ddim_update,
    ddpm_step,
    ddpm_update,
    forward_sample,
    linear_schedule,
    score_matching_loss,
)
from cpsample_lab.libmodels import GaussianOracleDenoiser, Network, ZeroDenoiser
from cpsample_lab.libtensor import Tensor


class TrueNoiseDenoiser(Network):
    """Recovers the exact eps used to corrupt a known batch (rows must stay in order)."""

    def __init__(self, x0, schedule):
        super().__init__()
        self.x0 = x0
        self.schedule = schedule

    def build(self, graph, x_node, ts):
        ab = self.schedule.alpha_bar[ts][:, None]
        c = 1.0 / np.sqrt(1.0 - ab)
        scale = graph.constant(np.broadcast_to(c, self.x0.shape))
        return graph.add(graph.mul(x_node, scale), graph.constant(-c * np.sqrt(ab) * self.x0))


# schedules -------------------------------------------------------------------------------


def test_two_step_schedule():
    s = linear_schedule(2, 0.1, 0.1)
    np.testing.assert_allclose(s.alpha_bar[1:], [0.9, 0.81])
    assert s.sigma[1] == 0.0
    assert s.sigma[2] == pytest.approx(np.sqrt(0.1 * 0.1 / 0.19))


def test_default_schedule_terminal_level():
    s = linear_schedule(200, 1e-4, 0.02)
    assert s.alpha_bar[s.T] < 0.15
    assert not s.terminal_ok
    assert linear_schedule(1000, 1e-4, 0.02).terminal_ok


@pytest.mark.parametrize(
    "args", [(1, 1e-4, 0.02), (10, 0.0, 0.02), (10, 0.03, 0.02), (10, 1e-4, 1.0)]
)
def test_schedule_preconditions(args):
    with pytest.raises(ScheduleException):
        linear_schedule(*args)


def test_ddim_timesteps():
    assert ddim_timesteps(10, 3) == [(10, 7), (7, 4), (4, 1), (1, 0)]
    assert ddim_timesteps(4, 1) == [(4, 3), (3, 2), (2, 1), (1, 0)]


# forward process -------------------------------------------------------------------------


def test_forward_sample_algebra():
    s = build_schedule([0.64])
    eps = np.array([1.0, -2.0])
    out = forward_sample(np.zeros(2), 1, eps, s)
    np.testing.assert_allclose(out.data, 0.8 * eps)


def test_forward_sample_preconditions():
    s = linear_schedule(10)
    with pytest.raises(ScheduleException):
        forward_sample(np.zeros(2), 0, np.zeros(2), s)
    with pytest.raises(ShapeMismatchException):
        forward_sample(np.zeros(2), 1, np.zeros(3), s)


def test_forward_marginal_moments():
    s = linear_schedule(200)
    rng = np.random.default_rng(0)
    for _ in range(5):
        x0 = rng.normal(size=3)
        t = int(rng.integers(1, s.T + 1))
        eps = rng.standard_normal((10_000, 3))
        xt = forward_sample(np.broadcast_to(x0, eps.shape), t, eps, s).data
        ab = s.alpha_bar[t]
        assert np.all(np.abs(xt.mean(axis=0) - np.sqrt(ab) * x0) < 4 / np.sqrt(10_000))
        np.testing.assert_allclose(xt.var(axis=0, ddof=1), 1 - ab, rtol=0.05)


# loss ------------------------------------------------------------------------------------


def test_loss_of_zero_denoiser_is_dimension():
    s = linear_schedule(200)
    batch = np.random.default_rng(1).normal(size=(20_000, 2))
    loss = score_matching_loss(ZeroDenoiser(), batch, s, np.random.default_rng(2)).item()
    assert loss == pytest.approx(2.0, abs=0.1)
    assert loss >= 0


def test_loss_of_true_noise_oracle_is_zero():
    s = linear_schedule(200)
    batch = np.random.default_rng(3).normal(size=(64, 2))
    loss = score_matching_loss(TrueNoiseDenoiser(batch, s), batch, s, np.random.default_rng(4))
    assert 0 <= loss.item() < 1e-20


def test_loss_needs_a_batch():
    with pytest.raises(ValueError):
        score_matching_loss(ZeroDenoiser(), np.zeros((0, 2)), linear_schedule(10), None)


# reverse steps ---------------------------------------------------------------------------


def test_ddpm_step_with_zero_denoiser():
    s = build_schedule([0.19, 0.19])
    x = np.array([[0.9, -1.8]])
    out = ddpm_step(ZeroDenoiser(), x, 2, np.zeros_like(x), s)
    np.testing.assert_allclose(out.data, x / 0.9)


def test_ddpm_step_rejects_noise_at_t1():
    s = linear_schedule(10)
    with pytest.raises(ScheduleException):
        ddpm_step(ZeroDenoiser(), np.zeros((1, 2)), 1, np.ones((1, 2)), s)


def test_ddpm_recovers_gaussian_target():
    s = linear_schedule(1000)
    mu, sd = 1.5, 0.5
    oracle = GaussianOracleDenoiser([mu], sd, s)
    rng = np.random.default_rng(5)
    x = rng.standard_normal((10_000, 1))
    for t in range(s.T, 0, -1):
        z = rng.standard_normal(x.shape) if t > 1 else np.zeros_like(x)
        x = ddpm_step(oracle, x, t, z, s).data
    assert x.mean() == pytest.approx(mu, rel=0.03)
    assert x.std() == pytest.approx(sd, rel=0.03)


def test_deterministic_ddpm_update_is_reproducible():
    s = linear_schedule(50)
    x = np.random.default_rng(6).normal(size=(4, 2))
    eps = np.random.default_rng(7).normal(size=(4, 2))
    a = ddpm_update(eps, x, 20, np.zeros_like(x), s)
    b = ddpm_update(eps, x, 20, np.zeros_like(x), s)
    assert a.tobytes() == b.tobytes()


def test_ddim_fixed_point():
    x = np.array([[0.3, -1.2]])
    eps = np.array([[1.0, 0.5]])
    np.testing.assert_allclose(ddim_update(eps, x, 0.4, 0.4), x, rtol=0, atol=1e-12)


def test_ddim_inverts_forward_sample():
    s = linear_schedule(200)
    rng = np.random.default_rng(8)
    x0 = rng.normal(size=(3, 2))
    eps = rng.normal(size=(3, 2))
    xt = forward_sample(x0, 150, eps, s)
    np.testing.assert_allclose(
        ddim_step(eps, xt, 150, 40, s).data, forward_sample(x0, 40, eps, s).data, atol=1e-10
    )
    np.testing.assert_allclose(ddim_step(eps, xt, 150, 0, s).data, x0, atol=1e-10)


def test_ddim_index_checks():
    s = linear_schedule(10)
    with pytest.raises(ScheduleException):
        ddim_step(np.zeros(2), np.zeros(2), 3, 3, s)
    with pytest.raises(ScheduleException):
        ddim_step(np.zeros(2), np.zeros(2), 11, 3, s)


def test_ddpm_without_noise_tracks_unit_stride_ddim():
    # the two updates share the x coefficient; the eps coefficients differ by at most
    # beta_t / sqrt(1 - alpha_bar_{t-1})
    s = linear_schedule(200, 1e-4, 1e-3)
    rng = np.random.default_rng(9)
    x = rng.normal(size=(5, 2))
    eps = rng.normal(size=(5, 2))
    for t in (2, 50, 200):
        a = ddpm_update(eps, x, t, np.zeros_like(x), s)
        b = ddim_step(eps, x, t, t - 1, s).data
        bound = s.beta[t] / np.sqrt(1 - s.alpha_bar[t - 1]) * np.abs(eps) + 1e-12
        assert np.all(np.abs(a - b) <= bound)


def _ddim_endpoint(oracle, x, schedule, stride):
    for t, t_prev in ddim_timesteps(schedule.T, stride):
        x = ddim_step(oracle.predict(x, t), x, t, t_prev, schedule).data
    return x


def test_strided_ddim_tracks_full_trajectory():
    s = linear_schedule(200)
    oracle = GaussianOracleDenoiser([1.0], 0.5, s)
    x_T = np.random.default_rng(10).standard_normal((2000, 1))
    full = _ddim_endpoint(oracle, x_T, s, 1)
    rms = {k: np.sqrt(np.mean((_ddim_endpoint(oracle, x_T, s, k) - full) ** 2)) for k in (2, 20)}
    assert rms[20] < 0.1
    assert rms[2] < rms[20]


def test_tensor_inputs_are_accepted():
    s = linear_schedule(10)
    out = ddim_step(Tensor(np.zeros((1, 2))), Tensor(np.ones((1, 2))), 5, 2, s)
    assert out.shape == [1, 2]
