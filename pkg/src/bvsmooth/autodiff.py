"""Reverse-mode automatic differentiation over small dense arrays.

A ``Tape`` is an append-only record of array-valued operations; each ``Var``
wraps an ndarray together with closures that push an output cotangent back to
its parents. The primitive set is deliberately small: exactly what the losses
in this package need (affine algebra, a few elementwise maps, SPD inverse and
log-determinant via Cholesky), nothing more. One backward pass per tape.

Every public function in this module is *generic*: called on plain ndarrays
(or floats) it computes with numpy and returns an ndarray, called on ``Var``
inputs it records tape nodes. The numerical recursions elsewhere in the
package are therefore written once and run identically with or without
gradient tracking.
"""

import numpy as np

from . import linalg
from .errors import NonFiniteValue, NotPositiveDefinite, UnsupportedPrimitive


class Tape:
    """Record of one differentiable computation; consumed by one backward pass."""

    def __init__(self):
        self._nodes = []
        self._consumed = False

    def leaf(self, value):
        """Register a tracked input."""
        v = Var(np.asarray(value, dtype=float), self)
        self._nodes.append(v)
        return v

    def backward(self, out):
        """Accumulate d(out)/d(node) into node.grad for every node on the tape."""
        if self._consumed:
            raise UnsupportedPrimitive("tape already consumed by a backward pass")
        if not isinstance(out, Var) or out._tape is not self:
            raise UnsupportedPrimitive("backward target does not belong to this tape")
        self._consumed = True
        out.grad = np.ones_like(out.value)
        for node in reversed(self._nodes):
            g = node.grad
            if g is None:
                continue
            for parent, vjp in node._parents:
                contrib = vjp(g)
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.value)
                parent.grad += contrib

    def __len__(self):
        return len(self._nodes)


class Var:
    """Array value plus backpropagation bookkeeping."""

    __slots__ = ("value", "grad", "_tape", "_parents")

    # Force `ndarray <op> Var` to fall back to the reflected Var operators
    # instead of numpy building an object array.
    __array_ufunc__ = None

    def __init__(self, value, tape, parents=()):
        self.value = value
        self.grad = None
        self._tape = tape
        self._parents = parents

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)

    def __repr__(self):
        return f"Var({self.value!r})"

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, k):
        if not isinstance(k, (int, float)):
            raise UnsupportedPrimitive("only constant exponents are differentiable")
        return powc(self, float(k))


def _tape_of(*args):
    for a in args:
        if isinstance(a, Var):
            return a._tape
    return None


def _val(x):
    if isinstance(x, Var):
        return x.value
    return np.asarray(x, dtype=float)


def _node(tape, value, parents):
    v = Var(value, tape, tuple(parents))
    tape._nodes.append(v)
    return v


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise binary primitives
# ---------------------------------------------------------------------------

def add(a, b):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    out = av + bv
    if tape is None:
        return out
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g, s=av.shape: _unbroadcast(g, s)))
    if isinstance(b, Var):
        parents.append((b, lambda g, s=bv.shape: _unbroadcast(g, s)))
    return _node(tape, out, parents)


def sub(a, b):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    out = av - bv
    if tape is None:
        return out
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g, s=av.shape: _unbroadcast(g, s)))
    if isinstance(b, Var):
        parents.append((b, lambda g, s=bv.shape: _unbroadcast(-g, s)))
    return _node(tape, out, parents)


def mul(a, b):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    out = av * bv
    if tape is None:
        return out
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g, s=av.shape: _unbroadcast(g * bv, s)))
    if isinstance(b, Var):
        parents.append((b, lambda g, s=bv.shape: _unbroadcast(g * av, s)))
    return _node(tape, out, parents)


def div(a, b):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    out = av / bv
    if tape is None:
        return out
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g, s=av.shape: _unbroadcast(g / bv, s)))
    if isinstance(b, Var):
        parents.append((b, lambda g, s=bv.shape: _unbroadcast(-g * av / (bv * bv), s)))
    return _node(tape, out, parents)


def neg(a):
    tape = _tape_of(a)
    out = -_val(a)
    if tape is None:
        return out
    return _node(tape, out, [(a, lambda g: -g)])


def powc(a, k):
    tape = _tape_of(a)
    av = _val(a)
    out = av ** k
    if tape is None:
        return out
    return _node(tape, out, [(a, lambda g: g * k * av ** (k - 1.0))])


# ---------------------------------------------------------------------------
# matrix products
# ---------------------------------------------------------------------------

def matmul(a, b):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    out = av @ bv
    if tape is None:
        return out
    na, nb = av.ndim, bv.ndim
    if na == 2 and nb == 2:
        da = lambda g: g @ bv.T
        db = lambda g: av.T @ g
    elif na == 2 and nb == 1:
        da = lambda g: np.outer(g, bv)
        db = lambda g: av.T @ g
    elif na == 1 and nb == 2:
        da = lambda g: bv @ g
        db = lambda g: np.outer(av, g)
    elif na == 1 and nb == 1:
        da = lambda g: g * bv
        db = lambda g: g * av
    else:
        raise UnsupportedPrimitive(f"matmul of ndim {na} @ {nb}")
    parents = []
    if isinstance(a, Var):
        parents.append((a, da))
    if isinstance(b, Var):
        parents.append((b, db))
    return _node(tape, out, parents)


def outer(a, b):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    out = np.outer(av, bv)
    if tape is None:
        return out
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g: g @ bv))
    if isinstance(b, Var):
        parents.append((b, lambda g: av @ g))
    return _node(tape, out, parents)


def transpose(a):
    tape = _tape_of(a)
    av = _val(a)
    out = av.T
    if tape is None:
        return out
    return _node(tape, out, [(a, lambda g: g.T)])


# ---------------------------------------------------------------------------
# elementwise unary maps
# ---------------------------------------------------------------------------

def _unary(a, fwd, make_vjp):
    tape = _tape_of(a)
    av = _val(a)
    out = fwd(av)
    if tape is None:
        return out
    return _node(tape, out, [(a, make_vjp(av, out))])


def exp(a):
    return _unary(a, np.exp, lambda av, out: lambda g: g * out)


def log(a):
    return _unary(a, np.log, lambda av, out: lambda g: g / av)


def sqrt(a):
    return _unary(a, np.sqrt, lambda av, out: lambda g: g * 0.5 / out)


def tanh(a):
    return _unary(a, np.tanh, lambda av, out: lambda g: g * (1.0 - out * out))


def cos(a):
    return _unary(a, np.cos, lambda av, out: lambda g: -g * np.sin(av))


def sin(a):
    return _unary(a, np.sin, lambda av, out: lambda g: g * np.cos(av))


def softplus(a):
    """log(1 + e^x), computed stably."""
    return _unary(
        a,
        lambda av: np.logaddexp(0.0, av),
        lambda av, out: lambda g: g / (1.0 + np.exp(-av)),
    )


def sigmoid(a):
    def fwd(av):
        return 0.5 * (1.0 + np.tanh(0.5 * av))

    return _unary(a, fwd, lambda av, out: lambda g: g * out * (1.0 - out))


def softplus_inverse(x):
    """Float-only inverse of softplus: log(e^x - 1)."""
    x = np.asarray(x, dtype=float)
    return x + np.log1p(-np.exp(-x))


# ---------------------------------------------------------------------------
# reductions and structure
# ---------------------------------------------------------------------------

def asum(a, axis=None):
    tape = _tape_of(a)
    av = _val(a)
    out = np.sum(av, axis=axis)
    if tape is None:
        return out

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, av.shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis), av.shape).copy()

    return _node(tape, out, [(a, vjp)])


def amean(a, axis=None):
    av = _val(a)
    count = av.size if axis is None else av.shape[axis]
    return asum(a, axis=axis) * (1.0 / count)


def trace(a):
    tape = _tape_of(a)
    av = _val(a)
    out = np.trace(av)
    if tape is None:
        return out
    eye = np.eye(av.shape[0])
    return _node(tape, out, [(a, lambda g: g * eye)])


def reshape(a, shape):
    tape = _tape_of(a)
    av = _val(a)
    out = av.reshape(shape)
    if tape is None:
        return out
    return _node(tape, out, [(a, lambda g, s=av.shape: g.reshape(s))])


def take(a, idx):
    """Static indexing (slice, int array, or int). Gradient scatters back."""
    tape = _tape_of(a)
    av = _val(a)
    out = av[idx]
    if tape is None:
        return out

    def vjp(g):
        z = np.zeros_like(av)
        np.add.at(z, idx, g)
        return z

    return _node(tape, out, [(a, vjp)])


def concat(parts, axis=0):
    tape = _tape_of(*parts)
    vals = [_val(p) for p in parts]
    out = np.concatenate(vals, axis=axis)
    if tape is None:
        return out
    parents = []
    start = 0
    for p, v in zip(parts, vals):
        width = v.shape[axis]
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(start, start + width)
        sl = tuple(sl)
        if isinstance(p, Var):
            parents.append((p, lambda g, s=sl: g[s]))
        start += width
    return _node(tape, out, parents)


def stack(parts):
    """Stack scalars/vectors along a new leading axis."""
    shaped = [reshape(p, (1,) + _val(p).shape) for p in parts]
    return concat(shaped, axis=0)


def scatter(values, flat_index, shape):
    """Place a vector of entries into a zero array at given flat positions."""
    tape = _tape_of(values)
    v = _val(values)
    out = np.zeros(shape)
    out.flat[flat_index] = v
    if tape is None:
        return out
    return _node(tape, out, [(values, lambda g: g.flat[flat_index].copy())])


def block2x2(a, b, c, d):
    """Assemble [[a, b], [c, d]] from matrix blocks."""
    top = concat([a, b], axis=1)
    bottom = concat([c, d], axis=1)
    return concat([top, bottom], axis=0)


def minimum_const(a, cap):
    """min(a, cap) with the subgradient 0 on the clamped side."""
    tape = _tape_of(a)
    av = _val(a)
    out = np.minimum(av, cap)
    if tape is None:
        return out
    mask = (av < cap).astype(float)
    return _node(tape, out, [(a, lambda g: g * mask)])


# ---------------------------------------------------------------------------
# SPD primitives (Cholesky-backed)
# ---------------------------------------------------------------------------

def inv_spd(a):
    """Inverse of an SPD matrix; raises NotPositiveDefinite on bad input."""
    tape = _tape_of(a)
    av = _val(a)
    inv = linalg.spd_inverse(av)
    if tape is None:
        return inv
    return _node(tape, inv, [(a, lambda g: -inv.T @ g @ inv.T)])


def logdet_spd(a):
    """log det of an SPD matrix via Cholesky; gradient is the inverse."""
    tape = _tape_of(a)
    av = _val(a)
    lower = linalg.cholesky(av)
    out = 2.0 * np.sum(np.log(np.diagonal(lower)))
    if tape is None:
        return out
    inv = linalg.spd_inverse(av)
    return _node(tape, out, [(a, lambda g: g * inv.T)])


def check_pd(a):
    """Raise NotPositiveDefinite unless the current value factorizes."""
    linalg.cholesky(_val(a))
    return a


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def value_and_grad(f, x0):
    """Evaluate ``f`` at a fresh leaf holding ``x0``; return (value, gradient).

    ``f`` must map a single Var to a scalar Var built from the primitives in
    this module. Raises NonFiniteValue if either the value or the gradient is
    not finite (the usual signal of divergence during training).
    """
    tape = Tape()
    x = tape.leaf(np.asarray(x0, dtype=float))
    out = f(x)
    if not isinstance(out, Var):
        raise UnsupportedPrimitive("objective did not return a tape Var")
    value = float(out.value)
    if not np.isfinite(value):
        raise NonFiniteValue(f"objective value is {value}")
    tape.backward(out)
    grad = x.grad if x.grad is not None else np.zeros_like(x.value)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteValue("gradient contains non-finite entries")
    return value, grad


__all__ = [
    "Tape", "Var", "value_and_grad",
    "add", "sub", "mul", "div", "neg", "powc", "matmul", "outer", "transpose",
    "exp", "log", "sqrt", "tanh", "cos", "sin", "softplus", "sigmoid",
    "softplus_inverse", "asum", "amean", "trace", "reshape", "take", "concat",
    "stack", "scatter", "block2x2", "minimum_const", "inv_spd", "logdet_spd",
    "check_pd",
]
