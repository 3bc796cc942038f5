"""Central-difference gradient checker."""

import numpy as np

from cpsample_lab.common import NonFiniteException
from cpsample_lab.libtensor.graph import ComputeGraph, backward, evaluate
from cpsample_lab.libtensor.tensor import Tensor, as_array


def grad_check(scalar_fn, x, step=1e-5):
    """Compare reverse-mode gradients against central differences.

    scalar_fn(graph, x_node) builds a scalar function of the leaf `x_node` into `graph`. Returns
    max over coordinates of |autodiff - central| / (|central| + 1e-12).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.array(as_array(x), dtype=np.float64)

    def build():
        g = ComputeGraph()
        scalar_fn(g, g.leaf("x"))
        return g

    graph = build()
    auto = backward(graph, {"x": Tensor(x)}, {"x"})["x"].data

    central = np.empty_like(x)
    flat = central.reshape(-1)
    for i in range(x.size):
        plus = x.copy().reshape(-1)
        minus = x.copy().reshape(-1)
        plus[i] += step
        minus[i] -= step
        f_plus = evaluate(build(), {"x": Tensor(plus.reshape(x.shape))}).item()
        f_minus = evaluate(build(), {"x": Tensor(minus.reshape(x.shape))}).item()
        flat[i] = (f_plus - f_minus) / (2.0 * step)
    if not np.all(np.isfinite(central)):
        raise NonFiniteException("central difference is not finite")
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(auto - central) / (np.abs(central) + 1e-12)))
