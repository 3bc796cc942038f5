"""Closed-form networks with known outputs and gradients, for oracles and baselines."""

import numpy as np

from cpsample_lab.libmodels.network import Network


class ZeroDenoiser(Network):
    """eps_theta(x, t) = 0 everywhere."""

    def build(self, graph, x_node, ts):
        # zero-scaled x keeps the output shape tied to the input
        return graph.scale(x_node, 0.0)


class GaussianOracleDenoiser(Network):
    """Exact E[eps | x_t] for data x0 ~ N(mu, s^2 I).

    x_t ~ N(sqrt(ab) mu, (ab s^2 + 1 - ab) I), so
    E[eps | x_t] = sqrt(1 - ab) (x_t - sqrt(ab) mu) / (ab s^2 + 1 - ab).
    """

    def __init__(self, mu, s, schedule):
        super().__init__()
        self.mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
        self.s = float(s)
        self.schedule = schedule

    def coefficients(self, ts):
        ab = self.schedule.alpha_bar[np.asarray(ts)]
        c = np.sqrt(1.0 - ab) / (ab * self.s**2 + 1.0 - ab)
        return c, -c * np.sqrt(ab)

    def build(self, graph, x_node, ts):
        c, k = self.coefficients(ts)
        d = len(self.mu)
        scale = graph.constant(np.repeat(c[:, None], d, axis=1))
        shift = graph.constant(k[:, None] * self.mu[None, :])
        return graph.add(graph.mul(x_node, scale), shift)


class LogisticClassifier(Network):
    """Logit l(x) = w.x + b, independent of t."""

    def __init__(self, w, b=0.0):
        super().__init__()
        self.w = np.asarray(w, dtype=np.float64).reshape(-1, 1)
        self.b = float(b)

    def logit_node(self, graph, x_node, ts):
        return graph.add(graph.matmul(x_node, graph.constant(self.w)), graph.constant([self.b]))

    def build(self, graph, x_node, ts):
        return self.logit_node(graph, x_node, ts)
