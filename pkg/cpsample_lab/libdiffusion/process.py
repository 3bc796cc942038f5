"""Forward corruption, the epsilon-prediction loss and the DDPM/DDIM reverse updates.

Denoisers are duck-typed: anything with
- build(graph, x_node, ts) -> output node (epsilon prediction, same shape as x)
- bindings() -> {leaf name: array} for its parameters
- predict(x, ts) -> ndarray
works here. `ts` is always an integer array with one timestep per row.
"""

import numpy as np

from cpsample_lab.common import ScheduleException, ShapeMismatchException
from cpsample_lab.libtensor import ComputeGraph, Tensor, as_array, evaluate


def _check_same_shape(a, b, what):
    if a.shape != b.shape:
        raise ShapeMismatchException(f"{what}: shapes {list(a.shape)} and {list(b.shape)} differ")


def corrupt(x0, ts, eps, schedule):
    """Row-wise forward sample; ts may contain 0 (returns the clean row)."""
    x0 = as_array(x0)
    eps = as_array(eps)
    _check_same_shape(x0, eps, "corrupt")
    ts = np.asarray(ts, dtype=np.int64)
    if np.any(ts < 0) or np.any(ts > schedule.T):
        raise ScheduleException(f"timesteps must lie in [0, {schedule.T}]")
    ab = schedule.alpha_bar[ts].reshape(-1, *([1] * (x0.ndim - 1)))
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def forward_sample(x0, t, eps, schedule):
    """sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps."""
    schedule.check_t(t)
    x0 = as_array(x0)
    eps = as_array(eps)
    _check_same_shape(x0, eps, "forward_sample")
    ab = schedule.alpha_bar[t]
    return Tensor(np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps)


def score_matching_graph(denoiser, batch, schedule, rng):
    """Build the uniform-weight epsilon loss for one minibatch. Returns (graph, bindings)."""
    batch = as_array(batch)
    if batch.ndim != 2 or batch.shape[0] == 0:
        raise ValueError("score matching needs a non-empty [n, d] batch")
    n = batch.shape[0]
    ts = rng.integers(1, schedule.T + 1, size=n)
    eps = rng.standard_normal(batch.shape)
    x_t = corrupt(batch, ts, eps, schedule)

    g = ComputeGraph()
    pred = denoiser.build(g, g.leaf("x_t"), ts)
    g.scale(g.squared_norm(g.sub(g.constant(eps), pred)), 1.0 / n)
    bindings = dict(denoiser.bindings())
    bindings["x_t"] = x_t
    return g, bindings


def score_matching_loss(denoiser, batch, schedule, rng):
    """mean over items of ||eps - eps_theta(x_t, t)||^2, t ~ U{1..T}, eps ~ N(0, I)."""
    g, bindings = score_matching_graph(denoiser, batch, schedule, rng)
    return evaluate(g, bindings)


def ddpm_step(denoiser, x_t, t, z, schedule):
    """Ancestral update x_t -> x_{t-1}."""
    schedule.check_t(t)
    x_t = as_array(x_t)
    z = as_array(z)
    _check_same_shape(x_t, z, "ddpm_step")
    if t == 1 and np.any(z != 0):
        raise ScheduleException("z must be zero at t=1")
    eps = denoiser.predict(x_t, np.full(x_t.shape[0], t))
    return Tensor(ddpm_update(eps, x_t, t, z, schedule))


def ddpm_update(eps, x_t, t, z, schedule):
    a = schedule.alpha[t]
    ab = schedule.alpha_bar[t]
    return (x_t - (1.0 - a) / np.sqrt(1.0 - ab) * eps) / np.sqrt(a) + schedule.sigma[t] * z


def ddim_update(eps_hat, x_t, ab_t, ab_prev):
    """Deterministic (eta=0) DDIM move between two cumulative noise levels."""
    x0_hat = (x_t - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)
    return np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * eps_hat


def ddim_step(eps_hat, x_t, t, t_prev, schedule):
    if not 0 <= t_prev < t <= schedule.T:
        raise ScheduleException(f"need 0 <= t_prev < t <= T, got t={t}, t_prev={t_prev}")
    x_t = as_array(x_t)
    eps_hat = as_array(eps_hat)
    _check_same_shape(x_t, eps_hat, "ddim_step")
    ab = schedule.alpha_bar
    return Tensor(ddim_update(eps_hat, x_t, ab[t], ab[t_prev]))
