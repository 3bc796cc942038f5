"""Define-by-run compute graph with reverse-mode differentiation.

A graph is built fresh for each computation: leaves are named slots bound at evaluation time,
constants are captured numpy values, and every op appends a node whose inputs already exist, so
the node list is always in topological order. The last op added becomes the output unless
`graph.output` is set explicitly.

Example:

    g = ComputeGraph()
    x = g.leaf("x")
    g.sum(g.mul(x, x))
    evaluate(g, {"x": Tensor([1.0, 2.0, 2.0])})  # -> Tensor(9.0)
    backward(g, {"x": Tensor([3.0])}, {"x"})      # -> {"x": Tensor([6.0])}
"""

from collections import namedtuple

import numpy as np

from cpsample_lab.common import (
    GraphException,
    NonFiniteException,
    ShapeMismatchException,
    UnboundLeafException,
)
from cpsample_lab.libtensor import ops
from cpsample_lab.libtensor.tensor import Tensor, as_array

Node = namedtuple("Node", ["op", "inputs", "payload"])


class ComputeGraph:
    def __init__(self):
        self.nodes = []
        self.leaves = {}
        self.output = None
        self.values = None
        self._bound = None

    def _append(self, op, inputs=(), payload=None):
        for i in inputs:
            if not 0 <= i < len(self.nodes):
                raise GraphException(f"{op}: input node {i} does not exist")
        self.nodes.append(Node(op, tuple(inputs), payload))
        nid = len(self.nodes) - 1
        if op not in ("leaf", "const"):
            self.output = nid
        return nid

    # leaves and constants -------------------------------------------------------------------

    def leaf(self, name):
        if name in self.leaves:
            return self.leaves[name]
        nid = self._append("leaf", payload=name)
        self.leaves[name] = nid
        return nid

    def constant(self, value):
        arr = np.array(as_array(value), dtype=np.float64)
        arr.flags.writeable = False
        return self._append("const", payload=arr)

    # registered ops -------------------------------------------------------------------------

    def matmul(self, a, b):
        return self._append("matmul", (a, b))

    def add(self, a, b):
        return self._append("add", (a, b))

    def mul(self, a, b):
        return self._append("mul", (a, b))

    def sigmoid(self, x):
        return self._append("sigmoid", (x,))

    def silu(self, x):
        return self._append("silu", (x,))

    def log(self, x):
        return self._append("log", (x,))

    def sum(self, x):
        return self._append("sum", (x,))

    def mean(self, x):
        return self._append("mean", (x,))

    def squared_norm(self, x):
        return self._append("squared_norm", (x,))

    def concat(self, *xs):
        return self._append("concat", xs)

    # composites built from the registered ops only -----------------------------------------

    def scale(self, x, c):
        return self.mul(x, self.constant(float(c)))

    def sub(self, a, b):
        return self.add(a, self.scale(b, -1.0))

    def value(self, node):
        """Cached forward value of a node from the last evaluation."""
        if self.values is None or node not in self.values:
            raise GraphException(f"node {node} has no cached value; evaluate first")
        return self.values[node]

    def reachable(self, output=None):
        output = self.output if output is None else output
        if output is None:
            raise GraphException("graph has no output node")
        seen = {output}
        for nid in range(output, -1, -1):
            if nid in seen:
                seen.update(self.nodes[nid].inputs)
        return sorted(seen)


def evaluate(graph, bindings):
    """Forward value of the graph output. Intermediate values are cached on the graph."""
    order = graph.reachable()
    values = {}
    for nid in order:
        node = graph.nodes[nid]
        if node.op == "leaf":
            if node.payload not in bindings:
                raise UnboundLeafException(f"leaf '{node.payload}' is not bound")
            values[nid] = as_array(bindings[node.payload])
            continue
        if node.op == "const":
            values[nid] = node.payload
            continue
        op = ops.REGISTRY[node.op]
        args = [values[i] for i in node.inputs]
        try:
            op.check(*[a.shape for a in args])
        except ShapeMismatchException as e:
            raise ShapeMismatchException(f"node {nid}: {e}") from None
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            out = np.asarray(op.forward(*args), dtype=np.float64)
        if not np.all(np.isfinite(out)):
            raise NonFiniteException(f"node {nid} ({node.op}) produced a non-finite value")
        values[nid] = out
    graph.values = values
    graph._bound = bindings
    return Tensor(values[graph.output])


def backward(graph, bindings, wrt):
    """Exact reverse-mode gradients of the (scalar) output w.r.t. the named leaves."""
    for name in wrt:
        if name not in graph.leaves:
            raise GraphException(f"leaf '{name}' is not in the graph")
    if graph.values is None or graph._bound is not bindings:
        evaluate(graph, bindings)
    values = graph.values
    out_value = values[graph.output]
    if out_value.ndim != 0:
        raise GraphException(f"backward needs a scalar output, got shape {list(out_value.shape)}")

    grads = {graph.output: np.array(1.0)}
    for nid in reversed(graph.reachable()):
        node = graph.nodes[nid]
        if node.op in ("leaf", "const") or nid not in grads:
            continue
        op = ops.REGISTRY[node.op]
        args = [values[i] for i in node.inputs]
        for i, g in zip(node.inputs, op.backward(grads[nid], values[nid], *args)):
            g = np.asarray(g, dtype=np.float64)
            grads[i] = grads[i] + g if i in grads else g

    result = {}
    for name in wrt:
        nid = graph.leaves[name]
        if nid in grads:
            result[name] = Tensor(grads[nid])
        else:
            bound = as_array(bindings[name]) if name in bindings else np.zeros(())
            result[name] = Tensor(np.zeros_like(bound))
    return result
