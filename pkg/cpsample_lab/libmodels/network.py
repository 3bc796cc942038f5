"""Time-conditioned MLPs: the denoiser eps_theta(x_t, t) and the random-label classifier.

Networks are thin parameter holders. Their forward pass is written into a ComputeGraph by
`build` (or `logit_node` for classifiers), so the same code serves training (gradients w.r.t.
parameters) and guidance (gradients w.r.t. the input). Parameters live in an ordered
{name: ndarray} dict under the network's namespace, eg: 'denoiser.l0.w'.
"""

from collections import OrderedDict

import numpy as np

from cpsample_lab.common import ShapeMismatchException, UnboundLeafException
from cpsample_lab.libtensor import ComputeGraph, as_array, evaluate


def time_embeddings(ts, T, dim):
    """Sinusoidal embeddings, one row per timestep. Frequencies run geometrically 1 -> 1e-4."""
    if dim % 2:
        raise ValueError(f"embedding dim must be even, got {dim}")
    ts = np.asarray(ts, dtype=np.float64).reshape(-1)
    if np.any(ts < 0) or np.any(ts > T):
        raise ValueError(f"timesteps must lie in [0, {T}]")
    half = dim // 2
    if half == 1:
        freqs = np.ones(1)
    else:
        freqs = 10000.0 ** (-np.arange(half) / (half - 1))
    angles = ts[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def time_embedding(t, T, dim):
    return time_embeddings([t], T, dim)[0]


class Network:
    """Base class. Subclasses override build()."""

    PREFIX = "net"

    def __init__(self, params=None):
        self.params = OrderedDict(params or {})

    def bindings(self):
        return self.params

    def build(self, graph, x_node, ts):
        raise NotImplementedError("build() must be implemented by a subclass")

    def load(self, params):
        """Replace parameter values in place, checking names and shapes.

        Every parameter of the network must be supplied; extra names are ignored.
        """
        missing = [name for name in self.params if name not in params]
        if missing:
            raise UnboundLeafException(f"no value for {len(missing)} parameters: {missing[:3]}")
        for name, value in params.items():
            if name not in self.params:
                continue
            value = np.array(as_array(value), dtype=np.float64)
            if value.shape != self.params[name].shape:
                raise ShapeMismatchException(f"{name}: {value.shape} vs {self.params[name].shape}")
            self.params[name] = value
        return self

    def copy(self):
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.params = OrderedDict((k, v.copy()) for k, v in self.params.items())
        return clone

    def predict(self, x, ts):
        x = as_array(x)
        g = ComputeGraph()
        self.build(g, g.leaf("x"), np.broadcast_to(ts, (x.shape[0],)))
        bindings = dict(self.bindings())
        bindings["x"] = x
        return evaluate(g, bindings).numpy()


class TimeConditionedMLP(Network):
    """concat(x, emb(t)) -> [linear -> SiLU] x len(hidden) -> linear(out_dim)."""

    def __init__(self, data_dim, out_dim, hidden=(128, 128, 128), emb_dim=32, T=200, seed=0):
        self.data_dim = data_dim
        self.out_dim = out_dim
        self.hidden = tuple(hidden)
        self.emb_dim = emb_dim
        self.T = T
        rng = np.random.default_rng(seed)
        params = OrderedDict()
        widths = [data_dim + emb_dim, *self.hidden]
        for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
            he = np.sqrt(2.0 / fan_in)
            params[f"{self.PREFIX}.l{i}.w"] = rng.normal(scale=he, size=(fan_in, fan_out))
            params[f"{self.PREFIX}.l{i}.b"] = np.zeros(fan_out)
        params[f"{self.PREFIX}.out.w"] = rng.normal(
            scale=np.sqrt(1.0 / widths[-1]), size=(widths[-1], out_dim)
        )
        params[f"{self.PREFIX}.out.b"] = np.zeros(out_dim)
        super().__init__(params)

    def _leaf(self, graph, name):
        return graph.leaf(f"{self.PREFIX}.{name}")

    def trunk(self, graph, x_node, ts):
        """Last hidden activation (the penultimate layer)."""
        emb = graph.constant(time_embeddings(ts, self.T, self.emb_dim))
        h = graph.concat(x_node, emb)
        for i in range(len(self.hidden)):
            h = graph.matmul(h, self._leaf(graph, f"l{i}.w"))
            h = graph.silu(graph.add(h, self._leaf(graph, f"l{i}.b")))
        return h

    def head(self, graph, h):
        return graph.add(graph.matmul(h, self._leaf(graph, "out.w")), self._leaf(graph, "out.b"))

    def build(self, graph, x_node, ts):
        return self.head(graph, self.trunk(graph, x_node, ts))


class Denoiser(TimeConditionedMLP):
    """eps_theta: output has the input's shape."""

    PREFIX = "denoiser"

    def __init__(self, data_dim, hidden=(128, 128, 128), emb_dim=32, T=200, seed=0):
        super().__init__(data_dim, data_dim, hidden, emb_dim, T, seed)


class Classifier(TimeConditionedMLP):
    """Single logit l(x_t, t); p(y=1|x_t,t) = sigmoid(l), p(y=0|.) = sigmoid(-l)."""

    PREFIX = "classifier"

    def __init__(self, data_dim, hidden=(256, 256, 256), emb_dim=32, T=200, seed=0):
        super().__init__(data_dim, 1, hidden, emb_dim, T, seed)

    def logit_node(self, graph, x_node, ts):
        return self.build(graph, x_node, ts)

    def features(self, x):
        """Penultimate trunk activations at t=0."""
        x = as_array(x)
        g = ComputeGraph()
        g.output = self.trunk(g, g.leaf("x"), np.zeros(x.shape[0], dtype=np.int64))
        bindings = dict(self.bindings())
        bindings["x"] = x
        return evaluate(g, bindings).numpy()

    @property
    def feature_dim(self):
        return self.hidden[-1]


def prob1(classifier, x, ts):
    """p(y=1 | x, t) for each row."""
    x = as_array(x)
    g = ComputeGraph()
    g.sigmoid(classifier.logit_node(g, g.leaf("x"), np.broadcast_to(ts, (x.shape[0],))))
    bindings = dict(classifier.bindings())
    bindings["x"] = x
    return evaluate(g, bindings).numpy().reshape(-1)
