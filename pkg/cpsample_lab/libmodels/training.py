"""Training loops for the denoiser (epsilon objective) and the random-label classifier (BCE).

Both loops: Adam on minibatches drawn with a seeded generator, an EMA shadow updated after
every step, and a loss trace. Training is a single deterministic stream given the seed.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import tqdm

from cpsample_lab.common import DivergenceException, LabelException, NonFiniteException
from cpsample_lab.libdiffusion import corrupt, score_matching_graph
from cpsample_lab.libmodels.network import Classifier, Denoiser, prob1
from cpsample_lab.libmodels.optim import Adam, ema_update
from cpsample_lab.libtensor import ComputeGraph, as_array, backward, evaluate

log = logging.getLogger(__name__)

# smallest normal float64; adding it leaves any probability above 1e-290 unchanged
PROB_FLOOR = np.finfo(np.float64).tiny


@dataclass
class TrainConfig:
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 128
    max_steps: int = 20000
    ema_rate: float = 0.9999
    # classifier only: stop once the clean-input cross-entropy drops below this
    target_ce: float = 0.05
    eval_every: int = 100

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not 0 <= self.ema_rate < 1:
            raise ValueError("EMA rate must lie in [0, 1)")
        if self.batch_size < 1 or self.max_steps < 0:
            raise ValueError("batch_size must be >= 1 and max_steps >= 0")


@dataclass
class TrainResult:
    model: object
    ema: object
    loss_trace: list = field(default_factory=list)
    steps: int = 0
    stop_reason: str = "max_steps"
    eval_trace: list = field(default_factory=list)


def _fit(model, make_graph, cfg, rng, name, progress, should_stop=None):
    ema = model.copy()
    opt = Adam(model.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    result = TrainResult(model, ema)
    last = None
    steps = tqdm.trange(cfg.max_steps, desc=f"train {name}", disable=not progress, leave=False)
    for step in steps:
        graph, bindings = make_graph(rng)
        try:
            grads = backward(graph, bindings, set(model.params))
        except NonFiniteException:
            raise DivergenceException(name, step, last) from None
        loss = float(graph.value(graph.output))
        opt.step({k: v.data for k, v in grads.items()})
        ema.params.update(ema_update(model.params, ema.params, cfg.ema_rate))
        result.loss_trace.append(loss)
        result.steps = step + 1
        last = loss
        if should_stop is not None and should_stop(step + 1, ema, result):
            result.stop_reason = "target_reached"
            break
    if result.loss_trace:
        log.info(
            "%s: %d steps, loss %.4g -> %.4g (%s)",
            name,
            result.steps,
            result.loss_trace[0],
            result.loss_trace[-1],
            result.stop_reason,
        )
    return result


def _batch(data, cfg, rng):
    return rng.integers(0, data.shape[0], size=cfg.batch_size)


def train_denoiser(data, schedule, cfg, seed, denoiser=None, progress=False):
    """Adam on the epsilon objective. Returns raw and EMA denoisers plus the loss trace."""
    data = np.array(as_array(data))
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError("training data must be a non-empty [n, d] array")
    if denoiser is None:
        denoiser = Denoiser(data.shape[1], T=schedule.T, seed=seed)
    rng = np.random.default_rng(seed)

    def make_graph(rng):
        return score_matching_graph(denoiser, data[_batch(data, cfg, rng)], schedule, rng)

    return _fit(denoiser, make_graph, cfg, rng, "denoiser", progress)


def bce_graph(classifier, x, labels, ts):
    """-mean log(sigmoid((2y - 1) * logit) + PROB_FLOOR). Returns (graph, bindings).

    The floor only matters once sigmoid underflows to 0 (|logit| beyond ~745): each row's loss
    then saturates at -log(PROB_FLOOR) ~ 708 with a zero gradient instead of going infinite.
    """
    x = as_array(x)
    signs = (2.0 * np.asarray(labels, dtype=np.float64) - 1.0).reshape(-1, 1)
    g = ComputeGraph()
    logit = classifier.logit_node(g, g.leaf("x"), ts)
    p = g.sigmoid(g.mul(logit, g.constant(signs)))
    floor = g.constant(np.full(signs.shape, PROB_FLOOR))
    g.scale(g.mean(g.log(g.add(p, floor))), -1.0)
    bindings = dict(classifier.bindings())
    bindings["x"] = x
    return g, bindings


def classifier_cross_entropy(classifier, x, labels, t=0):
    """Mean binary cross-entropy of p(y_i | x_i, t) over the rows."""
    x = as_array(x)
    ts = np.full(x.shape[0], t, dtype=np.int64)
    g, bindings = bce_graph(classifier, x, labels, ts)
    return evaluate(g, bindings).item()


def classifier_accuracy(classifier, x, labels, t=0):
    p1 = prob1(classifier, x, t)
    return float(np.mean((p1 > 0.5).astype(np.uint8) == np.asarray(labels)))


def train_classifier(data, labels, schedule, cfg, seed, classifier=None, progress=False):
    """Fit p(y|x_t,t) to the random labels, t ~ U{0..T} (t=0 is the clean input).

    Every cfg.eval_every steps the EMA classifier's cross-entropy on the clean training set is
    measured; training stops early once it is below cfg.target_ce.
    """
    data = np.array(as_array(data))
    y = np.asarray(getattr(labels, "labels", labels))
    if len(y) != data.shape[0]:
        raise LabelException(f"{len(y)} labels for {data.shape[0]} training points")
    if classifier is None:
        classifier = Classifier(data.shape[1], T=schedule.T, seed=seed)
    rng = np.random.default_rng(seed)

    def make_graph(rng):
        idx = _batch(data, cfg, rng)
        ts = rng.integers(0, schedule.T + 1, size=len(idx))
        eps = rng.standard_normal((len(idx), data.shape[1]))
        return bce_graph(classifier, corrupt(data[idx], ts, eps, schedule), y[idx], ts)

    def should_stop(step, ema, result):
        if step % cfg.eval_every:
            return False
        ce = classifier_cross_entropy(ema, data, y, t=0)
        result.eval_trace.append((step, ce))
        log.debug("classifier step %d: clean CE %.4g", step, ce)
        return ce < cfg.target_ce

    return _fit(classifier, make_graph, cfg, rng, "classifier", progress, should_stop)
