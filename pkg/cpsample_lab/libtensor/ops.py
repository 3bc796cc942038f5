"""Registry of the closed op set and their adjoints.

Every op declares three things:
- check(*shapes): validates operand shapes and returns the output shape
- forward(*values): numpy forward value
- backward(g, out, *values): tuple of gradients, one per input, each shaped like that input

Broadcasting is limited to two cases: bias-add (matrix + row vector) and scaling by a 0-d
scalar in `mul`. Everything else requires identical shapes.
"""

from collections import namedtuple

import numpy as np

from cpsample_lab.common import ShapeMismatchException

Op = namedtuple("Op", ["name", "check", "forward", "backward"])

REGISTRY = {}


def register(name, check, forward, backward):
    REGISTRY[name] = Op(name, check, forward, backward)


def _mismatch(op, *shapes):
    return ShapeMismatchException(f"{op}: incompatible shapes {[list(s) for s in shapes]}")


def _stable_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# matmul ---------------------------------------------------------------------------------


def _matmul_check(a, b):
    if len(a) != 2 or len(b) not in (1, 2) or a[1] != b[0]:
        raise _mismatch("matmul", a, b)
    return (a[0],) if len(b) == 1 else (a[0], b[1])


def _matmul_backward(g, out, a, b):
    if b.ndim == 1:
        return np.outer(g, b), a.T @ g
    return g @ b.T, a.T @ g


register("matmul", _matmul_check, lambda a, b: a @ b, _matmul_backward)

# add ------------------------------------------------------------------------------------


def _add_check(a, b):
    if tuple(a) == tuple(b):
        return tuple(a)
    if len(a) == 2 and len(b) == 1 and a[1] == b[0]:
        return tuple(a)
    raise _mismatch("add", a, b)


def _add_backward(g, out, a, b):
    if b.shape == a.shape:
        return g, g
    return g, g.sum(axis=0)


register("add", _add_check, lambda a, b: a + b, _add_backward)

# mul ------------------------------------------------------------------------------------


def _mul_check(a, b):
    if tuple(a) == tuple(b):
        return tuple(a)
    if len(b) == 0:
        return tuple(a)
    if len(a) == 0:
        return tuple(b)
    raise _mismatch("mul", a, b)


def _mul_backward(g, out, a, b):
    ga = g * b
    gb = g * a
    if a.ndim == 0 and b.ndim > 0:
        ga = np.sum(ga)
    if b.ndim == 0 and a.ndim > 0:
        gb = np.sum(gb)
    return ga, gb


register("mul", _mul_check, lambda a, b: a * b, _mul_backward)

# elementwise nonlinearities -------------------------------------------------------------


def _same(a):
    return tuple(a)


register("sigmoid", _same, _stable_sigmoid, lambda g, out, x: (g * out * (1.0 - out),))


def _silu_backward(g, out, x):
    s = _stable_sigmoid(x)
    return (g * (s + x * s * (1.0 - s)),)


register("silu", _same, lambda x: x * _stable_sigmoid(x), _silu_backward)


def _log_forward(x):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(x)


register("log", _same, _log_forward, lambda g, out, x: (g / x,))

# reductions -----------------------------------------------------------------------------


def _scalar(a):
    return ()


register("sum", _scalar, lambda x: np.sum(x), lambda g, out, x: (np.full_like(x, g),))
register("mean", _scalar, lambda x: np.mean(x), lambda g, out, x: (np.full_like(x, g / x.size),))
register(
    "squared_norm", _scalar, lambda x: np.sum(x * x), lambda g, out, x: (2.0 * g * x,)
)

# concat (last axis, n-ary) --------------------------------------------------------------


def _concat_check(*shapes):
    first = shapes[0]
    lead = tuple(first[:-1])
    if not first or any(len(s) != len(first) or tuple(s[:-1]) != lead for s in shapes):
        raise _mismatch("concat", *shapes)
    return tuple(first[:-1]) + (sum(s[-1] for s in shapes),)


def _concat_backward(g, out, *xs):
    cuts = np.cumsum([x.shape[-1] for x in xs])[:-1]
    return tuple(np.split(g, cuts, axis=-1))


register("concat", _concat_check, lambda *xs: np.concatenate(xs, axis=-1), _concat_backward)
