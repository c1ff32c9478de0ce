"""Nested automatic differentiation over a fixed scalar primitive set.

The engine builds expression graphs whose derivative rules are themselves
expressed as graph operations, so every derivative is again a differentiable
node ("tape of tapes").  Reverse mode (:func:`grad`) and forward tangent
propagation (:func:`jvp`) compose freely, giving exact derivatives of scalar
expressions up to third order across mixed variable groups, e.g. the
gradient with respect to network weights of a PDE residual that already
contains second derivatives with respect to the network inputs.
Structurally identical subexpressions are shared (hash-consing), which keeps
nested-derivative graphs compact.

Scalar primitives: ``+ - * / tanh exp sin cos`` and integer powers.  All
arithmetic is 64-bit.  A node's payload may also be a numpy array, in which
case the graph evaluates the same scalar expression independently at every
array position; this is how a network is evaluated over a whole batch of
sample points in one pass.  A handful of structural operations (column
stacking, matrix products for affine layers, sums) exist only to make the
batched evaluation cheap; semantically they are compositions of ``+`` and
``*``.

Graphs can be frozen into a :class:`Program`, a replayable operation list
that re-evaluates the same expression (values and all recorded derivatives)
for new leaf values without rebuilding any Python objects.  Training loops
run compiled programs; interactive use builds graphs eagerly.

Evaluation is deterministic: the same graph with the same inputs produces
bit-identical values and derivatives.  A graph and its nodes are confined to
the thread that built them; independent graphs on different threads do not
share state.
"""

from __future__ import annotations

import itertools
import numbers
import weakref

import numpy as np

__all__ = [
    "DiffValue",
    "DiffContext",
    "EvaluationError",
    "UnsupportedOrderError",
    "Program",
    "check_gradient",
    "constant",
    "cos",
    "derivative_of",
    "exp",
    "grad",
    "gradient",
    "jvp",
    "lift",
    "powi",
    "sin",
    "tanh",
    "variable",
]

_uids = itertools.count(1)
_interned = weakref.WeakValueDictionary()


class EvaluationError(ArithmeticError):
    """A primitive could not be evaluated (division by zero and friends)."""

    def __init__(self, primitive, message):
        super().__init__(f"{primitive}: {message}")
        self.primitive = primitive


class UnsupportedOrderError(ValueError):
    """Requested derivative order is outside the supported range 1..3."""


def _shape(value):
    return value.shape if isinstance(value, np.ndarray) else ()


def _as_value(value):
    if isinstance(value, np.ndarray):
        return value.astype(np.float64, copy=False)
    if isinstance(value, numbers.Real):
        return float(value)
    raise TypeError(f"unsupported payload type: {type(value)!r}")


class DiffValue:
    """One node of a differentiation graph.

    ``value`` is the 64-bit payload (scalar or array); the remaining slots
    link the node into its graph and are what makes the value
    differentiable.  Arithmetic on nodes reproduces plain arithmetic on the
    payloads exactly.
    """

    __slots__ = ("value", "op", "args", "aux", "uid", "__weakref__")

    def __init__(self, value, op, args=(), aux=None):
        self.value = value
        self.op = op
        self.args = args
        self.aux = aux
        self.uid = next(_uids)

    # -- arithmetic ---------------------------------------------------
    def __add__(self, other):
        return _add(self, _as_node(other))

    def __radd__(self, other):
        return _add(_as_node(other), self)

    def __sub__(self, other):
        return _sub(self, _as_node(other))

    def __rsub__(self, other):
        return _sub(_as_node(other), self)

    def __mul__(self, other):
        return _mul(self, _as_node(other))

    def __rmul__(self, other):
        return _mul(_as_node(other), self)

    def __truediv__(self, other):
        return _div(self, _as_node(other))

    def __rtruediv__(self, other):
        return _div(_as_node(other), self)

    def __neg__(self):
        return _neg(self)

    def __pow__(self, n):
        return powi(self, n)

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        return f"DiffValue({self.value!r}, op={self.op!r})"


def variable(value):
    """Create an independent leaf node."""
    return DiffValue(_as_value(value), "leaf")


def constant(value):
    """Create a constant node; all its derivatives are exactly zero."""
    v = _as_value(value)
    if isinstance(v, float):
        key = ("const", v, None)
        hit = _interned.get(key)
        if hit is not None:
            return hit
        node = DiffValue(v, "const")
        _interned[key] = node
        return node
    return DiffValue(v, "const")


def lift(c, ctx=None):
    """Embed a plain real as a constant node (all derivatives zero)."""
    return constant(c)


def ones(shape=()):
    """Interned all-ones constant (the usual tangent/cotangent seed)."""
    shape = tuple(shape)
    key = ("ones", shape, None)
    hit = _interned.get(key)
    if hit is not None:
        return hit
    node = DiffValue(np.ones(shape) if shape else 1.0, "const")
    _interned[key] = node
    return node


def zeros(shape=()):
    """Interned all-zeros constant (an exact-zero derivative)."""
    shape = tuple(shape)
    key = ("zeros", shape, None)
    hit = _interned.get(key)
    if hit is not None:
        return hit
    node = DiffValue(np.zeros(shape) if shape else 0.0, "const")
    _interned[key] = node
    return node


def _as_node(x):
    if isinstance(x, DiffValue):
        return x
    return constant(x)


# ---------------------------------------------------------------------------
# primitive constructors (eager: value computed at build time)
# ---------------------------------------------------------------------------
# Construction is interned: requesting the same op on the same argument nodes
# returns the existing node, so repeated derivative passes share structure.


def _node(op, args, aux, compute):
    key = (op, tuple(a.uid for a in args), aux)
    hit = _interned.get(key)
    if hit is not None:
        return hit
    node = DiffValue(compute(), op, args, aux)
    _interned[key] = node
    return node


def _add(a, b):
    return _node("add", (a, b), None, lambda: a.value + b.value)


def _sub(a, b):
    return _node("sub", (a, b), None, lambda: a.value - b.value)


def _mul(a, b):
    return _node("mul", (a, b), None, lambda: a.value * b.value)


def _check_div(denom):
    if np.any(np.asarray(denom) == 0.0):
        raise EvaluationError("div", "division by zero")


def _compute_div(a, b):
    _check_div(b.value)
    return a.value / b.value


def _div(a, b):
    return _node("div", (a, b), None, lambda: _compute_div(a, b))


def _neg(a):
    return _node("neg", (a,), None, lambda: -a.value)


def tanh(x):
    if not isinstance(x, DiffValue):
        return np.tanh(x)
    return _node("tanh", (x,), None, lambda: np.tanh(x.value))


def exp(x):
    if not isinstance(x, DiffValue):
        return np.exp(x)
    return _node("exp", (x,), None, lambda: np.exp(x.value))


def sin(x):
    if not isinstance(x, DiffValue):
        return np.sin(x)
    return _node("sin", (x,), None, lambda: np.sin(x.value))


def cos(x):
    if not isinstance(x, DiffValue):
        return np.cos(x)
    return _node("cos", (x,), None, lambda: np.cos(x.value))


def _check_powi(base, n):
    if n < 0 and np.any(np.asarray(base) == 0.0):
        raise EvaluationError("powi", "zero base with negative exponent")


def _compute_powi(x, n):
    _check_powi(x.value, n)
    return x.value ** n


def powi(x, n):
    """Integer power.  Fractional exponents are outside the primitive set."""
    if not isinstance(n, numbers.Integral):
        raise TypeError("powi exponent must be an integer")
    n = int(n)
    if not isinstance(x, DiffValue):
        return x ** n
    return _node("powi", (x,), n, lambda: _compute_powi(x, n))


# structural operations for batched evaluation -------------------------------


def stack_cols(cols):
    """Stack k same-length vectors into an (N, k) matrix node."""
    cols = tuple(cols)
    return _node(
        "stack", cols, None,
        lambda: np.stack([c.value for c in cols], axis=1),
    )


def col(m, j):
    """Extract column j of a matrix node as a vector node."""
    return _node("col", (m,), j, lambda: np.ascontiguousarray(m.value[:, j]))


def _compute_scatter(v, j, ncols):
    out = np.zeros((v.value.shape[0], ncols))
    out[:, j] = v.value
    return out


def _scatter_col(v, j, ncols):
    return _node("scatter", (v,), (j, ncols), lambda: _compute_scatter(v, j, ncols))


def matmul(a, b):
    return _node("matmul", (a, b), None, lambda: a.value @ b.value)


def _transpose(a):
    return _node("transpose", (a,), None, lambda: a.value.T)


def vsum(v):
    """Sum all elements into a scalar node (numpy pairwise summation)."""
    return _node("vsum", (v,), _shape(v.value), lambda: np.sum(v.value))


def _sum_to_value(value, shape):
    v = np.asarray(value)
    extra = v.ndim - len(shape)
    if extra > 0:
        v = v.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and v.shape[i] != 1)
    if axes:
        v = v.sum(axis=axes, keepdims=True)
    return v if shape else np.float64(v)


def _sum_to(v, shape):
    shape = tuple(shape)
    return _node("sum_to", (v,), shape, lambda: _sum_to_value(v.value, shape))


def _broadcast_to(v, shape):
    aux = (tuple(shape), _shape(v.value))
    return _node("bcast", (v,), aux, lambda: np.broadcast_to(v.value, aux[0]))


def _unbroadcast(v, target_shape):
    if _shape(v.value) == target_shape:
        return v
    return _sum_to(v, target_shape)


# ---------------------------------------------------------------------------
# backward rules: cotangent graph construction per primitive
# ---------------------------------------------------------------------------
# Each rule receives the forward node and the incoming cotangent node and
# returns (argument, contribution) pairs.  Contributions are graph nodes, so
# the result of a backward pass is differentiable again.


def _bw_add(n, g):
    a, b = n.args
    return (
        (a, _unbroadcast(g, _shape(a.value))),
        (b, _unbroadcast(g, _shape(b.value))),
    )


def _bw_sub(n, g):
    a, b = n.args
    return (
        (a, _unbroadcast(g, _shape(a.value))),
        (b, _unbroadcast(_neg(g), _shape(b.value))),
    )


def _bw_mul(n, g):
    a, b = n.args
    return (
        (a, _unbroadcast(_mul(g, b), _shape(a.value))),
        (b, _unbroadcast(_mul(g, a), _shape(b.value))),
    )


def _bw_div(n, g):
    a, b = n.args
    ga = _div(g, b)
    gb = _neg(_div(_mul(g, n), b))
    return (
        (a, _unbroadcast(ga, _shape(a.value))),
        (b, _unbroadcast(gb, _shape(b.value))),
    )


def _bw_neg(n, g):
    return ((n.args[0], _neg(g)),)


def _bw_tanh(n, g):
    a = n.args[0]
    return ((a, _mul(g, _sub(constant(1.0), _mul(n, n)))),)


def _bw_exp(n, g):
    return ((n.args[0], _mul(g, n)),)


def _bw_sin(n, g):
    a = n.args[0]
    return ((a, _mul(g, cos(a))),)


def _bw_cos(n, g):
    a = n.args[0]
    return ((a, _neg(_mul(g, sin(a)))),)


def _bw_powi(n, g):
    a, k = n.args[0], n.aux
    if k == 0:
        return ((a, zeros(_shape(a.value))),)
    if k == 1:
        return ((a, g),)
    if k == 2:
        return ((a, _mul(g, _mul(constant(2.0), a))),)
    return ((a, _mul(g, _mul(constant(float(k)), powi(a, k - 1)))),)


def _bw_stack(n, g):
    return tuple((c, col(g, j)) for j, c in enumerate(n.args))


def _bw_col(n, g):
    m = n.args[0]
    return ((m, _scatter_col(g, n.aux, m.value.shape[1])),)


def _bw_scatter(n, g):
    j, _ = n.aux
    return ((n.args[0], col(g, j)),)


def _bw_matmul(n, g):
    a, b = n.args
    return (
        (a, matmul(g, _transpose(b))),
        (b, matmul(_transpose(a), g)),
    )


def _bw_transpose(n, g):
    return ((n.args[0], _transpose(g)),)


def _bw_vsum(n, g):
    return ((n.args[0], _broadcast_to(g, n.aux)),)


def _bw_sum_to(n, g):
    return ((n.args[0], _broadcast_to(g, _shape(n.args[0].value))),)


def _bw_bcast(n, g):
    _, src_shape = n.aux
    return ((n.args[0], _sum_to(g, src_shape)),)


_BACKWARD = {
    "add": _bw_add,
    "sub": _bw_sub,
    "mul": _bw_mul,
    "div": _bw_div,
    "neg": _bw_neg,
    "tanh": _bw_tanh,
    "exp": _bw_exp,
    "sin": _bw_sin,
    "cos": _bw_cos,
    "powi": _bw_powi,
    "stack": _bw_stack,
    "col": _bw_col,
    "scatter": _bw_scatter,
    "matmul": _bw_matmul,
    "transpose": _bw_transpose,
    "vsum": _bw_vsum,
    "sum_to": _bw_sum_to,
    "bcast": _bw_bcast,
}


def grad(output, wrt, seed=None):
    """Cotangents of ``output`` with respect to each node in ``wrt``.

    For array-valued outputs the default seed is an array of ones, which for
    graphs that are pointwise-independent along the batch axis yields the
    per-point derivative.  Nodes the output does not depend on get an exact
    zero.  The returned nodes are differentiable again.
    """
    wrt = list(wrt)
    wrt_ids = {v.uid for v in wrt}

    # mark which nodes depend on any of the wrt leaves
    dep = {}
    stack = [(output, False)]
    while stack:
        node, processed = stack.pop()
        if node.uid in dep and not processed:
            continue
        if processed:
            dep[node.uid] = node.uid in wrt_ids or any(
                dep.get(a.uid, False) for a in node.args
            )
            continue
        if node.uid in wrt_ids or not node.args:
            dep[node.uid] = node.uid in wrt_ids
            continue
        stack.append((node, True))
        for a in node.args:
            if a.uid not in dep:
                stack.append((a, False))

    def zero_for(v):
        return zeros(_shape(v.value))

    if not dep.get(output.uid, False):
        return [zero_for(v) for v in wrt]

    if seed is None:
        seed = ones(_shape(output.value))

    # collect the dependent subgraph reachable from the output
    nodes = {}
    stack = [output]
    while stack:
        node = stack.pop()
        if node.uid in nodes or not dep.get(node.uid, False):
            continue
        nodes[node.uid] = node
        stack.extend(node.args)

    adjoint = {output.uid: seed}
    for node in sorted(nodes.values(), key=lambda n: n.uid, reverse=True):
        g = adjoint.get(node.uid)
        if g is None or not node.args:
            continue
        for arg, contrib in _BACKWARD[node.op](node, g):
            if not dep.get(arg.uid, False):
                continue
            prev = adjoint.get(arg.uid)
            adjoint[arg.uid] = contrib if prev is None else _add(prev, contrib)

    out = []
    for v in wrt:
        a = adjoint.get(v.uid)
        out.append(a if a is not None else zero_for(v))
    return out


def grad1(output, wrt, seed=None):
    """Single-variable convenience wrapper around :func:`grad`."""
    return grad(output, [wrt], seed)[0]


# ---------------------------------------------------------------------------
# forward-mode tangent propagation
# ---------------------------------------------------------------------------
# A missing tangent (None) is an exact zero; rules skip the dead branches.
# Tangent nodes are ordinary graph nodes, so a tangent can be differentiated
# again (forward-over-forward for second input derivatives, reverse on top
# for parameter gradients).


def _match(t, like):
    shp = _shape(like.value)
    if _shape(t.value) == shp:
        return t
    return _broadcast_to(t, shp)


def _jvp_add(n, ts):
    ta, tb = ts
    if ta is None:
        return tb
    if tb is None:
        return ta
    return _add(ta, tb)


def _jvp_sub(n, ts):
    ta, tb = ts
    if ta is None:
        return None if tb is None else _neg(tb)
    if tb is None:
        return ta
    return _sub(ta, tb)


def _jvp_mul(n, ts):
    a, b = n.args
    ta, tb = ts
    left = None if ta is None else _mul(ta, b)
    right = None if tb is None else _mul(a, tb)
    if left is None:
        return right
    if right is None:
        return left
    return _add(left, right)


def _jvp_div(n, ts):
    _, b = n.args
    ta, tb = ts
    left = None if ta is None else _div(ta, b)
    right = None if tb is None else _div(_mul(n, tb), b)
    if left is None:
        return None if right is None else _neg(right)
    if right is None:
        return left
    return _sub(left, right)


def _jvp_neg(n, ts):
    return None if ts[0] is None else _neg(ts[0])


def _jvp_tanh(n, ts):
    if ts[0] is None:
        return None
    return _mul(ts[0], _sub(constant(1.0), _mul(n, n)))


def _jvp_exp(n, ts):
    return None if ts[0] is None else _mul(ts[0], n)


def _jvp_sin(n, ts):
    return None if ts[0] is None else _mul(ts[0], cos(n.args[0]))


def _jvp_cos(n, ts):
    return None if ts[0] is None else _neg(_mul(ts[0], sin(n.args[0])))


def _jvp_powi(n, ts):
    if ts[0] is None or n.aux == 0:
        return None
    a, k = n.args[0], n.aux
    if k == 1:
        return ts[0]
    if k == 2:
        return _mul(ts[0], _mul(constant(2.0), a))
    return _mul(ts[0], _mul(constant(float(k)), powi(a, k - 1)))


def _jvp_stack(n, ts):
    if all(t is None for t in ts):
        return None
    cols = []
    for c, t in zip(n.args, ts):
        if t is None:
            cols.append(zeros(_shape(c.value)))
        else:
            cols.append(_match(t, c))
    return stack_cols(cols)


def _jvp_col(n, ts):
    return None if ts[0] is None else col(_match(ts[0], n.args[0]), n.aux)


def _jvp_scatter(n, ts):
    if ts[0] is None:
        return None
    return _scatter_col(_match(ts[0], n.args[0]), *n.aux)


def _jvp_matmul(n, ts):
    a, b = n.args
    ta, tb = ts
    left = None if ta is None else matmul(_match(ta, a), b)
    right = None if tb is None else matmul(a, _match(tb, b))
    if left is None:
        return right
    if right is None:
        return left
    return _add(left, right)


def _jvp_transpose(n, ts):
    return None if ts[0] is None else _transpose(_match(ts[0], n.args[0]))


def _jvp_vsum(n, ts):
    return None if ts[0] is None else vsum(_match(ts[0], n.args[0]))


def _jvp_sum_to(n, ts):
    return None if ts[0] is None else _sum_to(_match(ts[0], n.args[0]), n.aux)


def _jvp_bcast(n, ts):
    return None if ts[0] is None else _broadcast_to(_match(ts[0], n.args[0]), n.aux[0])


_JVP = {
    "add": _jvp_add,
    "sub": _jvp_sub,
    "mul": _jvp_mul,
    "div": _jvp_div,
    "neg": _jvp_neg,
    "tanh": _jvp_tanh,
    "exp": _jvp_exp,
    "sin": _jvp_sin,
    "cos": _jvp_cos,
    "powi": _jvp_powi,
    "stack": _jvp_stack,
    "col": _jvp_col,
    "scatter": _jvp_scatter,
    "matmul": _jvp_matmul,
    "transpose": _jvp_transpose,
    "vsum": _jvp_vsum,
    "sum_to": _jvp_sum_to,
    "bcast": _jvp_bcast,
}


def jvp(outputs, tangents):
    """Forward-mode directional derivatives of ``outputs``.

    ``tangents`` maps leaf nodes to their tangent nodes (typically a batch
    of ones for the differentiation direction).  Returns one tangent node
    per output; outputs independent of the seeded leaves get an exact zero.
    Tangent nodes remain differentiable.
    """
    tan = {v.uid: t for v, t in tangents.items()}
    nodes = {}
    stack = list(outputs)
    while stack:
        node = stack.pop()
        if node.uid in nodes:
            continue
        nodes[node.uid] = node
        stack.extend(node.args)
    for node in sorted(nodes.values(), key=lambda m: m.uid):
        if node.uid in tan or not node.args:
            continue
        ts = [tan.get(a.uid) for a in node.args]
        if all(t is None for t in ts):
            continue
        t = _JVP[node.op](node, ts)
        if t is not None:
            tan[node.uid] = t

    out = []
    for o in outputs:
        t = tan.get(o.uid)
        if t is None:
            t = zeros(_shape(o.value))
        out.append(t)
    return out


def jvp1(output, wrt, tangent):
    """Single-output, single-direction convenience wrapper for :func:`jvp`."""
    return jvp([output], {wrt: tangent})[0]


# ---------------------------------------------------------------------------
# compiled programs
# ---------------------------------------------------------------------------


_UFUNC = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.divide,
    "neg": np.negative,
    "tanh": np.tanh,
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
}


def _make_step(node, idx, out, buffer):
    """Build one evaluation closure; array results reuse ``buffer``."""
    op, aux = node.op, node.aux

    if op in _UFUNC:
        fn = _UFUNC[op]
        if op == "div":
            if buffer is None:
                i, j = idx

                def run(b):
                    _check_div(b[j])
                    b[out] = b[i] / b[j]

            else:
                i, j = idx

                def run(b):
                    _check_div(b[j])
                    b[out] = fn(b[i], b[j], out=buffer)

        elif buffer is None:
            if len(idx) == 2:
                i, j = idx

                def run(b):
                    b[out] = fn(b[i], b[j])

            else:
                (i,) = idx

                def run(b):
                    b[out] = fn(b[i])

        elif len(idx) == 2:
            i, j = idx

            def run(b):
                b[out] = fn(b[i], b[j], out=buffer)

        else:
            (i,) = idx

            def run(b):
                b[out] = fn(b[i], out=buffer)

    elif op == "powi":
        (i,) = idx
        n = aux
        if buffer is None:

            def run(b):
                _check_powi(b[i], n)
                b[out] = b[i] ** n

        else:

            def run(b):
                _check_powi(b[i], n)
                b[out] = np.power(b[i], n, out=buffer)

    elif op == "stack":
        cols_idx = idx

        def run(b):
            for k, src in enumerate(cols_idx):
                buffer[:, k] = b[src]
            b[out] = buffer

    elif op == "col":
        (i,) = idx
        j = aux

        def run(b):
            np.copyto(buffer, b[i][:, j])
            b[out] = buffer

    elif op == "scatter":
        (i,) = idx
        j, _ = aux

        def run(b):
            buffer.fill(0.0)
            buffer[:, j] = b[i]
            b[out] = buffer

    elif op == "matmul":
        i, j = idx

        def run(b):
            b[out] = np.dot(b[i], b[j], out=buffer)

    elif op == "transpose":
        (i,) = idx

        def run(b):
            b[out] = b[i].T

    elif op == "vsum":
        (i,) = idx

        def run(b):
            b[out] = np.sum(b[i])

    elif op == "sum_to":
        (i,) = idx
        shape = aux

        def run(b):
            b[out] = _sum_to_value(b[i], shape)

    elif op == "bcast":
        (i,) = idx
        shape = aux[0]

        def run(b):
            b[out] = np.broadcast_to(b[i], shape)

    else:  # pragma: no cover - construction guards op set
        raise ValueError(f"cannot compile op {op!r}")

    return run


_VIEW_OPS = frozenset({"transpose", "bcast", "vsum", "sum_to"})


class Program:
    """An expression graph frozen into a replayable evaluation schedule.

    ``Program(outputs, inputs)`` captures every node the outputs depend on.
    Leaves listed in ``inputs`` are rebound on every call; all other leaves
    keep the values they had at freeze time.  Calling the program with new
    input payloads re-evaluates the whole graph and returns the output
    payloads in order.  Array-valued steps write into buffers preallocated
    at freeze time, so steady-state evaluation allocates almost nothing and
    is bit-reproducible.  A program instance is confined to one thread;
    returned arrays are copies and safe to keep.
    """

    def __init__(self, outputs, inputs):
        self.n_outputs = len(outputs)
        nodes = {}
        stack = list(outputs)
        while stack:
            node = stack.pop()
            if node.uid in nodes:
                continue
            nodes[node.uid] = node
            stack.extend(node.args)
        order = sorted(nodes.values(), key=lambda n: n.uid)
        slot = {node.uid: i for i, node in enumerate(order)}

        input_ids = {}
        for pos, v in enumerate(inputs):
            if v.op != "leaf":
                raise ValueError("program inputs must be leaf nodes")
            input_ids[v.uid] = pos
        self._input_slots = [None] * len(inputs)

        template = [None] * len(order)
        steps = []
        for node in order:
            s = slot[node.uid]
            if node.uid in input_ids:
                self._input_slots[input_ids[node.uid]] = s
            elif not node.args:
                template[s] = node.value
            else:
                buffer = None
                if node.op not in _VIEW_OPS and isinstance(node.value, np.ndarray):
                    buffer = np.empty_like(node.value)
                steps.append(
                    _make_step(node, tuple(slot[a.uid] for a in node.args), s, buffer)
                )
        if any(s is None for s in self._input_slots):
            # an input the outputs never touch still occupies a slot
            for pos, v in enumerate(inputs):
                if self._input_slots[pos] is None:
                    template.append(v.value)
                    self._input_slots[pos] = len(template) - 1

        self._steps = steps
        self._template = template
        self._output_slots = [slot[o.uid] for o in outputs]

    def __call__(self, *input_values):
        buf = self._template.copy()
        for s, v in zip(self._input_slots, input_values):
            buf[s] = v
        for step in self._steps:
            step(buf)
        out = []
        for s in self._output_slots:
            v = buf[s]
            out.append(v.copy() if isinstance(v, np.ndarray) else v)
        return out

    @property
    def n_steps(self):
        return len(self._steps)


# ---------------------------------------------------------------------------
# public scalar-facing operations
# ---------------------------------------------------------------------------


class DiffContext:
    """A differentiation scope: creates independent variables, takes grads.

    Contexts nest freely because a derivative produced inside one scope is
    an ordinary node usable (and differentiable) in any enclosing scope.
    A context and its nodes belong to one thread.
    """

    def __init__(self):
        self.variables = []

    def variable(self, value):
        v = variable(value)
        self.variables.append(v)
        return v

    def constant(self, value):
        return constant(value)

    def gradient(self, output, wrt=None):
        return grad(output, self.variables if wrt is None else wrt)


def gradient(f, x):
    """Exact gradient of ``f`` (a scalar function of n nodes) at point x."""
    ctx = DiffContext()
    xs = [ctx.variable(xi) for xi in x]
    out = f(*xs)
    return [float(g.value) for g in grad(out, xs)]


def derivative_of(f, wrt, order):
    """Return a function computing an order-``order`` derivative of ``f``.

    The returned function accepts nodes (or plain reals) and produces a
    node, so it can appear as an operand inside an enclosing scope and be
    differentiated further, as long as the total order across all nesting
    levels stays within the supported bound of three.
    """
    if not 1 <= order <= 3:
        raise UnsupportedOrderError(f"derivative order {order} not in 1..3")

    def deriv(*args):
        xs = [a if isinstance(a, DiffValue) else variable(a) for a in args]
        out = f(*xs)
        for _ in range(order):
            out = grad1(out, xs[wrt])
        return out

    return deriv


def _numeric_value(f, x):
    out = f(*[constant(xi) for xi in x])
    return float(out.value) if isinstance(out, DiffValue) else float(out)


def central_difference(f, x, i, h):
    """(f(x + h e_i) - f(x - h e_i)) / 2h with f evaluated on plain values."""
    xp = list(x)
    xm = list(x)
    xp[i] = xp[i] + h
    xm[i] = xm[i] - h
    return (_numeric_value(f, xp) - _numeric_value(f, xm)) / (2.0 * h)


def check_gradient(f, x, h):
    """Compare the exact gradient against central differences.

    Returns one ``(analytic, numeric, relative_error)`` row per coordinate,
    with the relative error measured against ``max(|analytic|, |numeric|)``
    and defined as 0 when both columns vanish.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    analytic = gradient(f, x)
    rows = []
    for i in range(len(x)):
        numeric = central_difference(f, x, i, h)
        scale = max(abs(analytic[i]), abs(numeric))
        rel = 0.0 if scale == 0.0 else abs(analytic[i] - numeric) / scale
        rows.append((analytic[i], numeric, rel))
    return rows
