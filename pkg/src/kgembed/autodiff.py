"""Reverse-mode automatic differentiation over dense float64 numpy arrays.

Eager evaluation: every op computes its value when the node is created, so a
Graph is simultaneously the trace and the result. Gradients are accumulated
by a single reverse sweep in construction order (construction order is a
topological order because the graph is append-only).

Graphs are cheap, throwaway objects: build one per batch, call backward once,
read the leaf gradients, drop it. A Graph is not thread-safe; confine each
graph to the thread that built it.
"""

import weakref

import numpy as np

_TINY = 1e-30  # guards x/||x|| at the origin; picks the zero subgradient


def _as_f64(x):
    """Coerce to a C-contiguous float64 array (scalars become 0-d arrays)."""
    # not ascontiguousarray: that would pad 0-d values out to shape (1,)
    return np.asarray(x, dtype=np.float64, order="C")


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == tuple(shape):
        return grad
    # extra leading axes were created by broadcasting
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _stable_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x):
    # log(1 + e^x) without overflow for large |x|
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _circcorr(a, b):
    """Circular correlation along the last axis: out_i = sum_k a_k * b_{(i+k) mod d}.

    Computed by direct summation (d shifted products), no FFT.
    """
    d = a.shape[-1]
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=np.float64)
    for k in range(d):
        out += a[..., k : k + 1] * np.roll(b, -k, axis=-1)
    return out


def _circconv(a, b):
    """Circular convolution along the last axis: out_j = sum_i a_i * b_{(j-i) mod d}."""
    d = a.shape[-1]
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=np.float64)
    for i in range(d):
        out += a[..., i : i + 1] * np.roll(b, i, axis=-1)
    return out


def _windows(x, kr, kc):
    """Sliding (kr, kc) windows over the last two axes, as a strided view."""
    return np.lib.stride_tricks.sliding_window_view(x, (kr, kc), axis=(-2, -1))


def _einsum2_validate(spec):
    """Check a two-operand einsum spec admits the transpose gradient rule."""
    try:
        lhs, out = spec.split("->")
        a, b = lhs.split(",")
    except ValueError as e:
        raise ValueError(f"einsum spec must look like 'ab,bc->ac', got {spec!r}") from e
    for part in (a, b, out):
        if "." in part:
            raise ValueError("ellipsis not supported in einsum specs")
        if len(set(part)) != len(part):
            raise ValueError(f"repeated index within one operand in {spec!r}")
    if not set(out) <= set(a) | set(b):
        raise ValueError(f"output index not present in inputs in {spec!r}")
    # every input index must survive into the output or the other operand,
    # otherwise the gradient einsum cannot reconstruct that axis
    if not set(a) <= set(out) | set(b) or not set(b) <= set(out) | set(a):
        raise ValueError(f"an input-only index is summed out of a single operand in {spec!r}")
    return a, b, out


# ---------------------------------------------------------------------------
# forward implementations, keyed by op kind
# ---------------------------------------------------------------------------

def _fw_conv2d(x, f):
    # x: (m, n) or (B, m, n); f: (F, kr, kc); valid padding, stride 1
    kr, kc = f.shape[-2:]
    w = _windows(x, kr, kc)  # (..., mo, no, kr, kc)
    return np.einsum("...ijkl,fkl->...fij", w, f, optimize=True)


_FORWARD = {
    "add": lambda at, a, b: a + b,
    "sub": lambda at, a, b: a - b,
    "mul": lambda at, a, b: a * b,
    "div": lambda at, a, b: a / b,
    "neg": lambda at, a: -a,
    "matmul": lambda at, a, b: a @ b,
    "einsum2": lambda at, a, b: np.einsum(at["spec"], a, b, optimize=True),
    "transpose": lambda at, a: np.transpose(a, at["axes"]),
    "reshape": lambda at, a: np.reshape(a, at["shape"]),
    "concat": lambda at, *xs: np.concatenate(xs, axis=at["axis"]),
    "slice": lambda at, a: a[at["key"]],
    "gather": lambda at, a: np.take(a, at["indices"], axis=0),
    "sum": lambda at, a: np.sum(a, axis=at["axis"], keepdims=at["keepdims"]),
    "mean": lambda at, a: np.mean(a, axis=at["axis"], keepdims=at["keepdims"]),
    "pnorm": lambda at, a: (
        np.sum(np.abs(a), axis=at["axis"], keepdims=at["keepdims"])
        if at["p"] == 1
        else np.sqrt(np.sum(a * a, axis=at["axis"], keepdims=at["keepdims"]))
    ),
    "square": lambda at, a: a * a,
    "exp": lambda at, a: np.exp(a),
    "log": lambda at, a: np.log(a),
    "abs": lambda at, a: np.abs(a),
    "clip": lambda at, a: np.clip(a, at["lo"], at["hi"]),
    "sigmoid": lambda at, a: _stable_sigmoid(a),
    "tanh": lambda at, a: np.tanh(a),
    "relu": lambda at, a: np.maximum(a, 0.0),
    "softplus": lambda at, a: _softplus(a),
    "softmax": lambda at, a: _fw_softmax(a, at["axis"]),
    "logsumexp": lambda at, a: _fw_logsumexp(a, at["axis"], at["keepdims"]),
    "sin": lambda at, a: np.sin(a),
    "cos": lambda at, a: np.cos(a),
    "circcorr": lambda at, a, b: _circcorr(a, b),
    "reverse_roll": lambda at, a: _rev_mod(a),
    "conv2d": lambda at, x, f: _fw_conv2d(x, f),
}


def _fw_softmax(x, axis):
    # max-shift keeps exp() in range regardless of score magnitudes
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def _fw_logsumexp(x, axis, keepdims):
    m = np.max(x, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    if not keepdims:
        out = np.squeeze(out, axis=axis)
    return out


def _rev_mod(a):
    d = a.shape[-1]
    idx = (-np.arange(d)) % d
    return a[..., idx]


# ---------------------------------------------------------------------------
# vector-Jacobian products; each returns one gradient per parent (or None)
# ---------------------------------------------------------------------------

def _vjp_add(g, node, a, b):
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def _vjp_sub(g, node, a, b):
    return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)


def _vjp_mul(g, node, a, b):
    return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


def _vjp_div(g, node, a, b):
    return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)


def _vjp_matmul(g, node, a, b):
    return g @ b.T, a.T @ g


def _vjp_einsum2(g, node, a, b):
    sa, sb, so = node.attrs["_parts"]
    ga = np.einsum(f"{so},{sb}->{sa}", g, b, optimize=True)
    gb = np.einsum(f"{sa},{so}->{sb}", a, g, optimize=True)
    return ga, gb


def _vjp_concat(g, node, *xs):
    axis = node.attrs["axis"]
    sizes = [x.shape[axis] for x in xs]
    return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=axis))


def _vjp_slice(g, node, a):
    out = np.zeros_like(a)
    out[node.attrs["key"]] = g
    return (out,)


def _vjp_gather(g, node, a):
    out = np.zeros_like(a)
    np.add.at(out, node.attrs["indices"], g)  # indices may repeat
    return (out,)


def _expand_reduced(g, x_shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, x_shape)
    if not keepdims:
        g = np.expand_dims(g, axis=axis)
    return np.broadcast_to(g, x_shape)


def _vjp_sum(g, node, a):
    at = node.attrs
    return (_expand_reduced(g, a.shape, at["axis"], at["keepdims"]).copy(),)


def _vjp_mean(g, node, a):
    at = node.attrs
    count = a.size if at["axis"] is None else a.shape[at["axis"]]
    return (_expand_reduced(g, a.shape, at["axis"], at["keepdims"]) / count,)


def _vjp_pnorm(g, node, a):
    at = node.attrs
    gg = _expand_reduced(g, a.shape, at["axis"], at["keepdims"])
    if at["p"] == 1:
        return (gg * np.sign(a),)  # sign(0) = 0: the chosen L1 subgradient
    y = _expand_reduced(node.value, a.shape, at["axis"], at["keepdims"])
    return (gg * a / np.maximum(y, _TINY),)


def _vjp_softmax(g, node, a):
    y = node.value
    axis = node.attrs["axis"]
    return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)


def _vjp_logsumexp(g, node, a):
    at = node.attrs
    gg = _expand_reduced(g, a.shape, at["axis"], at["keepdims"])
    m = np.max(a, axis=at["axis"], keepdims=True)
    e = np.exp(a - m)
    return (gg * e / np.sum(e, axis=at["axis"], keepdims=True),)


def _vjp_conv2d(g, node, x, f):
    # g: (..., F, mo, no)
    kr, kc = f.shape[-2:]
    pad = [(0, 0)] * (g.ndim - 2) + [(kr - 1, kr - 1), (kc - 1, kc - 1)]
    gp = np.pad(g, pad)
    wg = _windows(gp, kr, kc)  # (..., F, m, n, kr, kc)
    dx = np.einsum("...fijkl,fkl->...ij", wg, f[:, ::-1, ::-1], optimize=True)
    mo, no = g.shape[-2:]
    wx = _windows(x, mo, no)  # (..., kr, kc, mo, no)
    df = np.einsum("...klij,...fij->fkl", wx, g, optimize=True)
    return dx, df


_VJP = {
    "add": _vjp_add,
    "sub": _vjp_sub,
    "mul": _vjp_mul,
    "div": _vjp_div,
    "neg": lambda g, node, a: (-g,),
    "matmul": _vjp_matmul,
    "einsum2": _vjp_einsum2,
    "transpose": lambda g, node, a: (np.transpose(g, np.argsort(node.attrs["axes"])),),
    "reshape": lambda g, node, a: (g.reshape(a.shape),),
    "concat": _vjp_concat,
    "slice": _vjp_slice,
    "gather": _vjp_gather,
    "sum": _vjp_sum,
    "mean": _vjp_mean,
    "pnorm": _vjp_pnorm,
    "square": lambda g, node, a: (2.0 * a * g,),
    "exp": lambda g, node, a: (node.value * g,),
    "log": lambda g, node, a: (g / a,),
    "abs": lambda g, node, a: (g * np.sign(a),),
    "clip": lambda g, node, a: (g * ((a >= node.attrs["lo"]) & (a <= node.attrs["hi"])),),
    "sigmoid": lambda g, node, a: (g * node.value * (1.0 - node.value),),
    "tanh": lambda g, node, a: (g * (1.0 - node.value * node.value),),
    "relu": lambda g, node, a: (g * (a > 0.0),),
    "softplus": lambda g, node, a: (g * _stable_sigmoid(a),),
    "softmax": _vjp_softmax,
    "logsumexp": _vjp_logsumexp,
    "sin": lambda g, node, a: (g * np.cos(a),),
    "cos": lambda g, node, a: (-g * np.sin(a),),
    "circcorr": lambda g, node, a, b: (
        _unbroadcast(_circcorr(g, b), a.shape),
        _unbroadcast(_circconv(g, a), b.shape),
    ),
    "reverse_roll": lambda g, node, a: (_rev_mod(g),),  # the index map is an involution
    "conv2d": _vjp_conv2d,
}

# ops where the derivative jumps; gradient checks must stay away from these inputs
KINKED_OPS = {"abs", "relu", "clip", "pnorm"}


class Node:
    """One value in a computation graph.

    Attributes:
        id: position in the owning graph (also its topological index)
        op: op kind string; "leaf" for inputs and constants
        parents: tuple of parent nodes
        attrs: op attributes (shapes, axes, indices, ...)
        value: the eagerly computed float64 array
        grad: dLoss/dValue after Graph.backward, else None
    """

    __slots__ = ("id", "op", "parents", "attrs", "value", "grad", "requires_grad", "_graph")

    def __init__(self, graph, id, op, parents, attrs, value, requires_grad):
        # weak back reference: a dropped Graph must free by refcount alone,
        # cycles would defer ~100MB step graphs to the generational collector
        self._graph = weakref.ref(graph)
        self.id = id
        self.op = op
        self.parents = parents
        self.attrs = attrs
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def graph(self):
        g = self._graph()
        if g is None:
            raise ReferenceError("the Graph that owns this node no longer exists")
        return g

    @property
    def shape(self):
        return self.value.shape

    # arithmetic sugar; non-Node operands become constants of the same graph
    def _lift(self, other):
        if isinstance(other, Node):
            return other
        return self.graph.constant(other)

    def __add__(self, other):
        return self.graph.apply("add", self, self._lift(other))

    def __radd__(self, other):
        return self.graph.apply("add", self._lift(other), self)

    def __sub__(self, other):
        return self.graph.apply("sub", self, self._lift(other))

    def __rsub__(self, other):
        return self.graph.apply("sub", self._lift(other), self)

    def __mul__(self, other):
        return self.graph.apply("mul", self, self._lift(other))

    def __rmul__(self, other):
        return self.graph.apply("mul", self._lift(other), self)

    def __truediv__(self, other):
        return self.graph.apply("div", self, self._lift(other))

    def __rtruediv__(self, other):
        return self.graph.apply("div", self._lift(other), self)

    def __neg__(self):
        return self.graph.apply("neg", self)

    def __matmul__(self, other):
        return self.graph.apply("matmul", self, other)

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        return self.graph.apply("slice", self, key=key)

    def sum(self, axis=None, keepdims=False):
        return self.graph.apply("sum", self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return self.graph.apply("mean", self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return self.graph.apply("reshape", self, shape=tuple(shape))

    @property
    def T(self):
        axes = tuple(reversed(range(self.value.ndim)))
        return self.graph.apply("transpose", self, axes=axes)

    def __repr__(self):
        return f"Node(id={self.id}, op={self.op!r}, shape={self.value.shape})"


class Graph:
    """Append-only eager computation graph.

    Nodes are created through leaf/constant/apply and evaluated immediately.
    backward() runs one reverse sweep from a scalar loss, summing gradient
    contributions over all paths. A second backward on the same graph is
    rejected until reset_grads() is called.
    """

    def __init__(self):
        self.nodes = []
        self._backward_ran = False

    def _register(self, op, parents, attrs, value, requires_grad):
        node = Node(self, len(self.nodes), op, tuple(parents), attrs, value, requires_grad)
        self.nodes.append(node)
        return node

    def leaf(self, value, requires_grad=True):
        """A graph input; gradients are accumulated here by backward()."""
        return self._register("leaf", (), {}, _as_f64(value), requires_grad)

    def constant(self, value):
        """A leaf that never receives a gradient."""
        return self.leaf(value, requires_grad=False)

    def apply(self, op, *parents, **attrs):
        """Create an op node, computing its value now.

        Parents must be Nodes of this graph; attrs are op-specific and must
        be plain data (never Nodes).
        """
        if op not in _FORWARD:
            raise ValueError(f"unknown op kind {op!r}")
        for p in parents:
            if p.graph is not self:
                raise ValueError("cannot mix nodes from different graphs")
        if op == "einsum2":
            attrs["_parts"] = _einsum2_validate(attrs["spec"])
        if op == "gather":
            attrs["indices"] = np.asarray(attrs["indices"], dtype=np.intp)
        if op == "matmul":
            a, b = parents
            if a.value.ndim != 2 or b.value.ndim != 2:
                raise ValueError("matmul expects 2-D operands; use einsum2 otherwise")
        value = _FORWARD[op](attrs, *[p.value for p in parents])
        requires_grad = any(p.requires_grad for p in parents)
        return self._register(op, parents, attrs, _as_f64(value), requires_grad)

    # ----- named op helpers ------------------------------------------------

    def einsum(self, spec, a, b):
        return self.apply("einsum2", a, b, spec=spec)

    def concat(self, nodes, axis=0):
        return self.apply("concat", *nodes, axis=axis)

    def gather(self, a, indices):
        return self.apply("gather", a, indices=indices)

    def pnorm(self, a, p=2, axis=None, keepdims=False):
        if p not in (1, 2):
            raise ValueError("only p in {1, 2} is supported")
        return self.apply("pnorm", a, p=p, axis=axis, keepdims=keepdims)

    def square(self, a):
        return self.apply("square", a)

    def exp(self, a):
        return self.apply("exp", a)

    def log(self, a):
        return self.apply("log", a)

    def abs(self, a):
        return self.apply("abs", a)

    def clip(self, a, lo, hi):
        return self.apply("clip", a, lo=float(lo), hi=float(hi))

    def sigmoid(self, a):
        return self.apply("sigmoid", a)

    def tanh(self, a):
        return self.apply("tanh", a)

    def relu(self, a):
        return self.apply("relu", a)

    def softplus(self, a):
        return self.apply("softplus", a)

    def softmax(self, a, axis=-1):
        return self.apply("softmax", a, axis=axis)

    def logsumexp(self, a, axis=-1, keepdims=False):
        return self.apply("logsumexp", a, axis=axis, keepdims=keepdims)

    def sin(self, a):
        return self.apply("sin", a)

    def cos(self, a):
        return self.apply("cos", a)

    def circcorr(self, a, b):
        return self.apply("circcorr", a, b)

    def reverse_roll(self, a):
        return self.apply("reverse_roll", a)

    def conv2d(self, x, filters):
        return self.apply("conv2d", x, filters)

    def transpose(self, a, axes=None):
        if axes is None:
            axes = tuple(reversed(range(a.value.ndim)))
        return self.apply("transpose", a, axes=tuple(axes))

    # ----- backward --------------------------------------------------------

    def backward(self, loss):
        """Accumulate dLoss/dNode into every reachable node's grad slot.

        loss must be a scalar (size-1) node of this graph.
        """
        if loss.graph is not self:
            raise ValueError("loss node belongs to a different graph")
        if loss.value.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.value.shape}")
        if self._backward_ran:
            raise RuntimeError("backward already ran on this graph; call reset_grads() first")
        self._backward_ran = True
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self.nodes[: loss.id + 1]):
            if node.grad is None or node.op == "leaf":
                continue
            if not any(p.requires_grad for p in node.parents):
                continue
            grads = _VJP[node.op](node.grad, node, *[p.value for p in node.parents])
            for parent, pg in zip(node.parents, grads):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = pg.copy() if pg.base is not None else pg
                else:
                    parent.grad = parent.grad + pg

    def reset_grads(self):
        for node in self.nodes:
            node.grad = None
        self._backward_ran = False

    def min_kink_distance(self):
        """Smallest |input - kink| over all kink-sensitive ops in the graph.

        Gradient checks near a relu/abs/clip corner are meaningless; callers
        redraw their sample point when this falls under the step size.
        Returns +inf when the graph holds no kinked op.
        """
        dist = np.inf
        for node in self.nodes:
            if node.op not in KINKED_OPS:
                continue
            if node.op == "pnorm" and node.attrs["p"] != 1:
                continue
            x = node.parents[0].value
            if x.size == 0:
                continue
            if node.op == "clip":
                d = min(
                    np.min(np.abs(x - node.attrs["lo"])),
                    np.min(np.abs(x - node.attrs["hi"])),
                )
            else:
                d = np.min(np.abs(x))
            dist = min(dist, float(d))
        return dist


def finite_difference_check(build, point, step=1e-4):
    """Compare analytic gradients against central finite differences.

    Args:
        build: callable(graph, *leaves) returning a scalar loss node; must be
            a pure function of the leaf values
        point: sequence of numpy arrays, one per leaf
        step: central-difference step

    Returns:
        max over all coordinates of |g_analytic - g_numeric| / max(1, |g_numeric|)
    """
    point = [_as_f64(p).copy() for p in point]

    g = Graph()
    leaves = [g.leaf(p) for p in point]
    loss = build(g, *leaves)
    g.backward(loss)
    analytic = [
        leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value) for leaf in leaves
    ]

    def value_at(arrays):
        gg = Graph()
        ls = [gg.leaf(a) for a in arrays]
        return float(build(gg, *ls).value)

    worst = 0.0
    for i, arr in enumerate(point):
        flat = arr.reshape(-1)
        ga = analytic[i].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = value_at(point)
            flat[j] = orig - step
            down = value_at(point)
            flat[j] = orig
            numeric = (up - down) / (2.0 * step)
            err = abs(ga[j] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst
