"""Noise-prediction perturbations driven by the classifier's input gradient."""

import numpy as np

from cpsample_lab.common import GuidanceException, NonFiniteException
from cpsample_lab.libmodels import prob1
from cpsample_lab.libsampler.sampler import check_rows
from cpsample_lab.libtensor import ComputeGraph, Tensor, backward


def _log_prob_graph(classifier, labels, ts, tau):
    g = ComputeGraph()
    logit = classifier.logit_node(g, g.leaf("x"), ts)
    # p(y=1) = sigmoid(l), p(y=0) = sigmoid(-l)
    signs = (2.0 * np.asarray(labels, dtype=np.float64) - 1.0).reshape(-1, 1)
    p = g.sigmoid(g.mul(logit, g.constant(signs)))
    if tau:
        p = g.add(p, g.constant([tau]))
    g.sum(g.log(p))
    return g


def log_prob_gradient(classifier, x, t, labels, tau=0.0):
    """Row-wise grad_x log(tau + p(y_i | x_i, t))."""
    x = check_rows(x)
    ts = np.full(x.shape[0], t, dtype=np.int64)
    bindings = dict(classifier.bindings())
    bindings["x"] = x
    try:
        return backward(_log_prob_graph(classifier, labels, ts, tau), bindings, {"x"})["x"].numpy()
    except NonFiniteException:
        pass
    # locate the offending row
    for i in range(x.shape[0]):
        bindings["x"] = x[i : i + 1]
        try:
            backward(_log_prob_graph(classifier, labels[i : i + 1], ts[:1], tau), bindings, {"x"})
        except NonFiniteException:
            raise GuidanceException(
                f"non-finite guidance gradient for label {int(labels[i])} at t={t}", i
            ) from None
    raise GuidanceException(f"non-finite guidance gradient at t={t}")


def cp_guidance(eps, classifier, x, t, cfg, schedule):
    """Apply the CPSample rule to precomputed eps. Returns (eps_hat, triggered, p1) arrays.

    p1 > 1 - alpha: eps - s sqrt(1 - ab_t) grad log(tau + p(y=0))
    p1 < alpha:     eps - s sqrt(1 - ab_t) grad log(tau + p(y=1))
    otherwise eps is returned untouched.
    """
    p1 = prob1(classifier, x, t)
    to_zero = p1 > 1.0 - cfg.alpha
    to_one = p1 < cfg.alpha
    triggered = to_zero | to_one
    if cfg.scale == 0 or not triggered.any():
        return eps, triggered, p1
    rows = np.flatnonzero(triggered)
    labels = to_one[rows].astype(np.uint8)
    try:
        grad = log_prob_gradient(classifier, x[rows], t, labels, cfg.tau)
    except GuidanceException as e:
        index = rows[e.sample_index] if e.sample_index is not None else None
        raise GuidanceException(str(e), index) from None
    out = np.array(eps, copy=True)
    out[rows] = eps[rows] - cfg.scale * np.sqrt(1.0 - schedule.alpha_bar[t]) * grad
    return out, triggered, p1


def cp_epsilon_hat(denoiser, classifier, x_t, t, cfg, schedule):
    """CPSample noise prediction. Returns (eps_hat Tensor, triggered, p1).

    A 1-D x_t is one sample: triggered and p1 come back as a bool and a float. For an [n, d]
    batch they are per-row arrays.
    """
    schedule.check_t(t)
    x = np.asarray(x_t.data if isinstance(x_t, Tensor) else x_t, dtype=np.float64)
    single = x.ndim == 1
    x = check_rows(x[None, :] if single else x)
    eps = denoiser.predict(x, t)
    eps_hat, triggered, p1 = cp_guidance(eps, classifier, x, t, cfg, schedule)
    if single:
        return Tensor(eps_hat[0]), bool(triggered[0]), float(p1[0])
    return Tensor(eps_hat), triggered, p1


def classifier_guided_eps(denoiser, classifier, x_t, t, target_y, s, schedule):
    """eps - s sqrt(1 - ab_t) grad log p(target_y | x_t, t), with no threshold and no tau."""
    if target_y not in (0, 1):
        raise ValueError(f"target label must be 0 or 1, got {target_y}")
    schedule.check_t(t)
    x = np.asarray(x_t.data if isinstance(x_t, Tensor) else x_t, dtype=np.float64)
    single = x.ndim == 1
    x = check_rows(x[None, :] if single else x)
    eps = denoiser.predict(x, t)
    if s != 0:
        labels = np.full(x.shape[0], target_y, dtype=np.uint8)
        grad = log_prob_gradient(classifier, x, t, labels)
        eps = eps - s * np.sqrt(1.0 - schedule.alpha_bar[t]) * grad
    return Tensor(eps[0] if single else eps)
