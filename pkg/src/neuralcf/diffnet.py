"""Dense networks with reverse-mode differentiation over numpy arrays.

This is deliberately not a general tensor engine. It supports exactly the
primitives the relay training stack composes: affine layers, leaky
rectifier, (log-)softmax, log/exp, reductions, concatenation, batched row
selection and clipping, plus an adaptive-moment optimizer.

Every op below is dual-mode: given plain numpy inputs it computes in plain
numpy, given `Tensor` inputs it records the computation for `backward`.
Inference code paths therefore pay no graph overhead, while the training
loop gets exact reverse-mode gradients through the same formulas.

All data is float64. Probability work is done in the log domain with
max-shift stabilization.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "Tensor",
    "backward",
    "gradient",
    "Dense",
    "Network",
    "Adam",
    "leaf_map",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "neg",
    "exp",
    "log",
    "leaky_relu",
    "softmax",
    "log_softmax",
    "logsumexp",
    "sum_",
    "mean_",
    "concat",
    "take_rows",
    "clip",
]


class Tensor:
    """Node in a reverse-mode computation graph.

    Leaves are created with ``requires_grad=True``; intermediate nodes are
    produced by the module-level ops. After ``backward(loss)``, each leaf
    that influenced ``loss`` holds its gradient in ``.grad``.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def backward(self):
        backward(self)

    # operator sugar; all routed through the dual-mode ops
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _is_tensor(x):
    return isinstance(x, Tensor)


def _tracked(x):
    return isinstance(x, Tensor) and (x.requires_grad or x._vjp is not None)


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _node(data, parents, vjp):
    """Make an op output; collapses to a constant if no parent is tracked.

    Callers guarantee `parents` is a tuple of Tensors.
    """
    for p in parents:
        if p.requires_grad or p._vjp is not None:
            out = Tensor(data)
            out._parents = parents
            out._vjp = vjp
            return out
    return Tensor(data)


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def backward(loss):
    """Reverse-mode sweep from a scalar loss node.

    Accumulates gradients into the ``.grad`` of every reachable leaf with
    ``requires_grad=True``. Raises if `loss` is not scalar.
    """
    if not _is_tensor(loss):
        raise TypeError("backward expects a Tensor")
    if loss.data.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")

    # iterative topological order (graphs can be a few thousand nodes deep);
    # dedup at pop time so re-pushed nodes still land before their children,
    # and skip untracked tensors outright (constant leaves, no gradient)
    order = []
    seen = set()
    seen_add = seen.add
    stack = [(loss, False)]
    push = stack.append
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        nid = id(node)
        if nid in seen:
            continue
        seen_add(nid)
        push((node, True))
        for p in node._parents:
            if (p.requires_grad or p._vjp is not None) and id(p) not in seen:
                push((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    grads_pop = grads.pop
    grads_get = grads.get
    for node in reversed(order):
        g = grads_pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g if node.grad is None else node.grad + g
        vjp = node._vjp
        if vjp is None:
            continue
        for parent, pg in zip(node._parents, vjp(g)):
            if pg is None or not (parent.requires_grad or parent._vjp is not None):
                continue
            pid = id(parent)
            prev = grads_get(pid)
            grads[pid] = pg if prev is None else prev + pg


def gradient(loss, leaves):
    """Gradients of a scalar `loss` with respect to named leaf tensors.

    Returns a dict mapping each name to an array congruent with the leaf;
    leaves the loss does not depend on get exact zeros.
    """
    backward(loss)
    out = {}
    for name, leaf in leaves.items():
        out[name] = np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad
    return out


def leaf_map(arrays):
    """Wrap named parameter arrays as gradient-tracking leaves."""
    return {name: Tensor(arr, requires_grad=True) for name, arr in arrays.items()}


# ---------------------------------------------------------------------------
# dual-mode primitives


def add(a, b):
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
    da = a.data if ta else np.asarray(a, dtype=np.float64)
    db = b.data if tb else np.asarray(b, dtype=np.float64)
    out = da + db
    if not (ta or tb):
        return out
    a, b = (a if ta else Tensor(da)), (b if tb else Tensor(db))

    def vjp(g):
        ga = _unbroadcast(g, da.shape) if (a.requires_grad or a._vjp is not None) else None
        gb = _unbroadcast(g, db.shape) if (b.requires_grad or b._vjp is not None) else None
        return (ga, gb)

    return _node(out, (a, b), vjp)


def sub(a, b):
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
    da = a.data if ta else np.asarray(a, dtype=np.float64)
    db = b.data if tb else np.asarray(b, dtype=np.float64)
    out = da - db
    if not (ta or tb):
        return out
    a, b = (a if ta else Tensor(da)), (b if tb else Tensor(db))

    def vjp(g):
        ga = _unbroadcast(g, da.shape) if (a.requires_grad or a._vjp is not None) else None
        gb = _unbroadcast(-g, db.shape) if (b.requires_grad or b._vjp is not None) else None
        return (ga, gb)

    return _node(out, (a, b), vjp)


def mul(a, b):
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
    da = a.data if ta else np.asarray(a, dtype=np.float64)
    db = b.data if tb else np.asarray(b, dtype=np.float64)
    out = da * db
    if not (ta or tb):
        return out
    a, b = (a if ta else Tensor(da)), (b if tb else Tensor(db))

    def vjp(g):
        ga = _unbroadcast(g * db, da.shape) if (a.requires_grad or a._vjp is not None) else None
        gb = _unbroadcast(g * da, db.shape) if (b.requires_grad or b._vjp is not None) else None
        return (ga, gb)

    return _node(out, (a, b), vjp)


def div(a, b):
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
    da = a.data if ta else np.asarray(a, dtype=np.float64)
    db = b.data if tb else np.asarray(b, dtype=np.float64)
    out = da / db
    if not (ta or tb):
        return out
    a, b = (a if ta else Tensor(da)), (b if tb else Tensor(db))

    def vjp(g):
        ga = _unbroadcast(g / db, da.shape) if (a.requires_grad or a._vjp is not None) else None
        gb = (
            _unbroadcast(-g * da / (db * db), db.shape)
            if (b.requires_grad or b._vjp is not None)
            else None
        )
        return (ga, gb)

    return _node(out, (a, b), vjp)


def neg(a):
    if not _is_tensor(a):
        return -_data(a)
    return _node(-a.data, (a,), lambda g: (-g,))


def matmul(a, b):
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
    da = a.data if ta else np.asarray(a, dtype=np.float64)
    db = b.data if tb else np.asarray(b, dtype=np.float64)
    out = da @ db
    if not (ta or tb):
        return out
    a, b = (a if ta else Tensor(da)), (b if tb else Tensor(db))

    def vjp(g):
        ga = _unbroadcast(g @ db.T, da.shape) if (a.requires_grad or a._vjp is not None) else None
        gb = _unbroadcast(da.T @ g, db.shape) if (b.requires_grad or b._vjp is not None) else None
        return (ga, gb)

    return _node(out, (a, b), vjp)


def exp(a):
    if not _is_tensor(a):
        return np.exp(_data(a))
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,))


def log(a):
    if not _is_tensor(a):
        return np.log(_data(a))
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,))


def leaky_relu(a, slope=0.01):
    da = _data(a)
    scale = np.where(da > 0.0, 1.0, slope)
    out = da * scale
    if not _is_tensor(a):
        return out
    return _node(out, (a,), lambda g: (g * scale,))


def log_softmax(a, axis=-1):
    da = _data(a)
    shift = da - da.max(axis=axis, keepdims=True)
    out = shift - np.log(np.exp(shift).sum(axis=axis, keepdims=True))
    if not _is_tensor(a):
        return out
    soft = np.exp(out)
    return _node(out, (a,), lambda g: (g - soft * g.sum(axis=axis, keepdims=True),))


def softmax(a, axis=-1):
    return exp(log_softmax(a, axis=axis))


def logsumexp(a, axis=-1):
    da = _data(a)
    m = da.max(axis=axis, keepdims=True)
    out = np.squeeze(m, axis=axis) + np.log(np.exp(da - m).sum(axis=axis))
    if not _is_tensor(a):
        return out
    soft = np.exp(da - np.expand_dims(out, axis))
    return _node(out, (a,), lambda g: (np.expand_dims(g, axis) * soft,))


def sum_(a, axis=None):
    da = _data(a)
    out = da.sum(axis=axis)
    if not _is_tensor(a):
        return out

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, da.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), da.shape).copy(),)

    return _node(out, (a,), vjp)


def mean_(a):
    da = _data(a)
    out = da.mean()
    if not _is_tensor(a):
        return out
    n = da.size
    return _node(out, (a,), lambda g: (np.full(da.shape, float(g) / n),))


def concat(parts, axis=1):
    datas = [_data(p) for p in parts]
    out = np.concatenate(datas, axis=axis)
    if not any(_is_tensor(p) for p in parts):
        return out
    parts = [_as_tensor(p) for p in parts]
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(out, tuple(parts), vjp)


def take_rows(a, idx):
    """Select one entry per row: out[i] = a[i, idx[i]]."""
    da = _data(a)
    idx = np.asarray(idx, dtype=np.intp)
    rows = np.arange(da.shape[0])
    out = da[rows, idx]
    if not _is_tensor(a):
        return out

    def vjp(g):
        full = np.zeros_like(da)
        np.add.at(full, (rows, idx), g)
        return (full,)

    return _node(out, (a,), vjp)


def clip(a, lo, hi):
    """Clamp values; gradient passes only strictly inside the interval."""
    da = _data(a)
    out = np.clip(da, lo, hi)
    if not _is_tensor(a):
        return out
    mask = (da > lo) & (da < hi)
    return _node(out, (a,), lambda g: (g * mask,))


def _as_tensor(x):
    return x if _is_tensor(x) else Tensor(x)


# ---------------------------------------------------------------------------
# networks


class Dense:
    """One affine layer; weight shape (in, out), bias shape (out,)."""

    __slots__ = ("w", "b")

    def __init__(self, w, b):
        self.w = np.asarray(w, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)


class Network:
    """Feed-forward stack of dense layers, leaky rectifier between them.

    The final layer is linear; consumers apply softmax/log-softmax as
    needed. `__call__` accepts a plain array (fast inference) or a Tensor
    (graph mode); pass `leaves` to substitute gradient-tracking parameter
    tensors produced by `leaf_map`.
    """

    def __init__(self, layers, slope=0.01):
        self.layers = list(layers)
        self.slope = float(slope)

    @classmethod
    def init(cls, widths, rng, slope=0.01):
        """Fan-in uniform weight init, zero biases.

        `widths` chains input through hidden sizes to the output width,
        e.g. ``[1, 100, 100, 32]``.
        """
        layers = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            layers.append(Dense(w, np.zeros(fan_out)))
        return cls(layers, slope=slope)

    @property
    def in_width(self):
        return self.layers[0].w.shape[0]

    @property
    def out_width(self):
        return self.layers[-1].w.shape[1]

    def __call__(self, x, leaves=None, prefix=""):
        dx = _data(x)
        if dx.ndim != 2 or dx.shape[1] != self.in_width:
            raise ValueError(
                f"network expects input of shape (n, {self.in_width}), got {dx.shape}"
            )
        h = x
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            w, b = layer.w, layer.b
            if leaves is not None:
                w = leaves.get(f"{prefix}w{i}", w)
                b = leaves.get(f"{prefix}b{i}", b)
            h = add(matmul(h, w), b)
            if i != last:
                h = leaky_relu(h, self.slope)
        return h

    def param_arrays(self, prefix=""):
        """Named parameter arrays, shared (not copied)."""
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"{prefix}w{i}"] = layer.w
            out[f"{prefix}b{i}"] = layer.b
        return out


def mlp(in_width, out_width, hidden=100, rng=None, slope=0.01):
    """Standard three-dense-layer topology: in -> hidden -> hidden -> out."""
    return Network.init([in_width, hidden, hidden, out_width], rng, slope=slope)


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Adaptive-moment update applied in place to named parameter arrays.

    All state lives in one contiguous block per quantity (parameters,
    both moments, scratch), so each update is a handful of full-width
    ufunc calls instead of hundreds of per-parameter ones. The update is
    elementwise, so the packing cannot change any computed value; the
    caller's arrays are refreshed in place after every step.
    """

    def __init__(self, arrays, step_size=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.arrays = dict(arrays)
        self.step_size = float(step_size)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        total = sum(a.size for a in self.arrays.values())
        self._p = np.empty(total)
        self._m = np.zeros(total)
        self._v = np.zeros(total)
        self._g = np.empty(total)
        self._s = np.empty(total)
        self._s2 = np.empty(total)
        self._views = []
        offset = 0
        for name, a in self.arrays.items():
            end = offset + a.size
            pv = self._p[offset:end].reshape(a.shape)
            pv[...] = a
            self._views.append((name, a, pv, self._g[offset:end].reshape(a.shape)))
            offset = end

    def step(self, grads):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for name, a, pv, gv in self._views:
            g = grads[name]
            if g.shape != a.shape:
                raise ValueError(f"gradient for {name} has shape {g.shape}, want {a.shape}")
            np.copyto(gv, g)
        p, m, v, g, s, s2 = self._p, self._m, self._v, self._g, self._s, self._s2
        np.multiply(m, self.beta1, out=m)
        np.multiply(g, 1.0 - self.beta1, out=s)
        np.add(m, s, out=m)
        np.multiply(v, self.beta2, out=v)
        np.multiply(g, 1.0 - self.beta2, out=s)
        np.multiply(s, g, out=s)
        np.add(v, s, out=v)
        np.divide(m, b1t, out=s)
        np.multiply(s, self.step_size, out=s)
        np.divide(v, b2t, out=s2)
        np.sqrt(s2, out=s2)
        np.add(s2, self.eps, out=s2)
        np.divide(s, s2, out=s)
        np.subtract(p, s, out=p)
        for name, a, pv, gv in self._views:
            np.copyto(a, pv)
