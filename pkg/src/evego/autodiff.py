"""Minimal reverse-mode autodiff on float64 numpy arrays.

A Tensor records the operations that produced it; calling backward() on a
scalar result accumulates gradients into every reachable Tensor created
with requires_grad=True. The module-level math functions (sin, matmul,
concatenate, ...) dispatch on type, so numeric code written against them
runs unchanged on plain ndarrays (no tape, no overhead) and on Tensors.

float64 is used throughout: the test suite verifies gradients against
central finite differences at tolerances float32 cannot meet.
"""

from __future__ import annotations

import numpy as np

from .errors import TapeExhaustedError


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_spent")

    # keep numpy from hijacking `ndarray <op> Tensor`; the reflected
    # operators below must win so the tape stays connected
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward
        self._spent = False

    # -- bookkeeping -----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate gradients of this scalar into all reachable leaves.

        The graph is single-use: a second call without rebuilding the
        forward pass raises TapeExhaustedError.
        """
        if self.data.ndim != 0 and self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        if self._spent:
            raise TapeExhaustedError("backward() already called on this graph")
        self._spent = True

        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is None:
                if node._parents:
                    raise TapeExhaustedError("graph already consumed by a previous backward()")
                continue
            if node.grad is not None:
                node._backward(node.grad)
            node._backward = None  # free the closure; marks the tape spent

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            # copy: the incoming buffer may be a view into another node's grad
            self.grad = np.array(grad, dtype=np.float64)
        else:
            self.grad += grad

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        other = _as_tensor(other)
        out = Tensor(self.data + other.data, _parents=(self, other))
        def back(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))
        out._backward = back
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, _parents=(self,))
        def back(g):
            if self.requires_grad:
                self._accumulate(-g)
        out._backward = back
        return out

    def __sub__(self, other):
        return self + (-_as_tensor(other))

    def __rsub__(self, other):
        return _as_tensor(other) + (-self)

    def __mul__(self, other):
        other = _as_tensor(other)
        out = Tensor(self.data * other.data, _parents=(self, other))
        def back(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))
        out._backward = back
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tensor(other)
        out = Tensor(self.data / other.data, _parents=(self, other))
        def back(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-g * self.data / (other.data ** 2), other.data.shape))
        out._backward = back
        return out

    def __rtruediv__(self, other):
        return _as_tensor(other) / self

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only constant exponents are supported")
        out = Tensor(self.data ** exponent, _parents=(self,))
        def back(g):
            if self.requires_grad:
                self._accumulate(g * exponent * self.data ** (exponent - 1))
        out._backward = back
        return out

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        out = Tensor(self.data[key], _parents=(self,))
        def back(g):
            if self.requires_grad:
                full = np.zeros_like(self.data)
                np.add.at(full, key, g)
                self._accumulate(full)
        out._backward = back
        return out

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor(self.data.reshape(shape), _parents=(self,))
        def back(g):
            if self.requires_grad:
                self._accumulate(g.reshape(self.data.shape))
        out._backward = back
        return out

    @property
    def T(self):
        out = Tensor(self.data.T, _parents=(self,))
        def back(g):
            if self.requires_grad:
                self._accumulate(g.T)
        out._backward = back
        return out

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def value(x) -> np.ndarray:
    """The plain ndarray behind either a Tensor or an array-like."""
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def is_tensor(x) -> bool:
    return isinstance(x, Tensor)


# -- dispatching math functions ------------------------------------------------
# Each works on Tensors (tracked) and plain arrays/scalars (straight numpy).

def _unary(x, fn, dfn):
    if not isinstance(x, Tensor):
        return fn(np.asarray(x, dtype=np.float64))
    out = Tensor(fn(x.data), _parents=(x,))
    def back(g):
        if x.requires_grad:
            x._accumulate(g * dfn(x.data, out.data))
    out._backward = back
    return out


def exp(x):
    return _unary(x, np.exp, lambda d, o: o)


def log(x):
    return _unary(x, np.log, lambda d, o: 1.0 / d)


def sin(x):
    return _unary(x, np.sin, lambda d, o: np.cos(d))


def cos(x):
    return _unary(x, np.cos, lambda d, o: -np.sin(d))


def tanh(x):
    return _unary(x, np.tanh, lambda d, o: 1.0 - o ** 2)


def sqrt(x):
    return _unary(x, np.sqrt, lambda d, o: 0.5 / o)


def absolute(x):
    # Subgradient 0 at exactly 0.
    return _unary(x, np.abs, lambda d, o: np.sign(d))


def relu(x):
    return _unary(x, lambda d: np.maximum(d, 0.0), lambda d, o: (d > 0).astype(np.float64))


def where(cond, a, b):
    """Elementwise select; cond is a plain boolean mask, never differentiated."""
    cond = np.asarray(cond, dtype=bool)
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        return np.where(cond, np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    a = _as_tensor(a)
    b = _as_tensor(b)
    out = Tensor(np.where(cond, a.data, b.data), _parents=(a, b))
    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.where(cond, g, 0.0), a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.where(cond, 0.0, g), b.data.shape))
    out._backward = back
    return out


def sum_(x, axis=None, keepdims=False):
    if not isinstance(x, Tensor):
        return np.sum(np.asarray(x, dtype=np.float64), axis=axis, keepdims=keepdims)
    out = Tensor(np.sum(x.data, axis=axis, keepdims=keepdims), _parents=(x,))
    def back(g):
        if not x.requires_grad:
            return
        if axis is None:
            x._accumulate(np.broadcast_to(g, x.data.shape).copy())
        else:
            g2 = g if keepdims else np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(g2, x.data.shape).copy())
    out._backward = back
    return out


def mean(x, axis=None, keepdims=False):
    data = value(x)
    if axis is None:
        count = data.size
    else:
        count = data.shape[axis]
    return sum_(x, axis=axis, keepdims=keepdims) / float(count)


def max_(x, axis, keepdims=False):
    """Max along one axis; the gradient flows to the first argmax."""
    if not isinstance(x, Tensor):
        return np.max(np.asarray(x, dtype=np.float64), axis=axis, keepdims=keepdims)
    out_data = np.max(x.data, axis=axis, keepdims=keepdims)
    out = Tensor(out_data, _parents=(x,))
    def back(g):
        if not x.requires_grad:
            return
        kept = out_data if keepdims else np.expand_dims(out_data, axis)
        g2 = g if keepdims else np.expand_dims(g, axis)
        hit = x.data == kept
        first = np.cumsum(hit, axis=axis) == 1
        mask = (hit & first).astype(np.float64)
        x._accumulate(mask * g2)
    out._backward = back
    return out


def matmul(a, b):
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        return np.matmul(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    a = _as_tensor(a)
    b = _as_tensor(b)
    if a.data.ndim > 2 or b.data.ndim > 2:
        raise ValueError("matmul supports 1-D and 2-D operands only")
    a2 = a.data if a.data.ndim == 2 else a.data[None, :]
    b2 = b.data if b.data.ndim == 2 else b.data[:, None]
    out_data = a2 @ b2
    squeeze = []
    if a.data.ndim == 1:
        squeeze.append(0)
    if b.data.ndim == 1:
        squeeze.append(out_data.ndim - 1)
    result = np.squeeze(out_data, axis=tuple(squeeze)) if squeeze else out_data
    out = Tensor(result, _parents=(a, b))
    def back(g):
        g2 = g.reshape(out_data.shape)
        if a.requires_grad:
            ga = g2 @ b2.T
            a._accumulate(ga.reshape(a.data.shape))
        if b.requires_grad:
            gb = a2.T @ g2
            b._accumulate(gb.reshape(b.data.shape))
    out._backward = back
    return out


def concatenate(parts, axis=0):
    parts = list(parts)
    if not any(isinstance(p, Tensor) for p in parts):
        return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts], axis=axis)
    parts = [_as_tensor(p) for p in parts]
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis), _parents=tuple(parts))
    sizes = [p.data.shape[axis] for p in parts]
    def back(g):
        offset = 0
        for p, size in zip(parts, sizes):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(offset, offset + size)
                p._accumulate(g[tuple(sl)])
            offset += size
    out._backward = back
    return out


def stack(parts, axis=0):
    parts = list(parts)
    if not any(isinstance(p, Tensor) for p in parts):
        return np.stack([np.asarray(p, dtype=np.float64) for p in parts], axis=axis)
    parts = [_as_tensor(p) for p in parts]
    out = Tensor(np.stack([p.data for p in parts], axis=axis), _parents=tuple(parts))
    def back(g):
        ax = axis if axis >= 0 else g.ndim + axis
        base = (slice(None),) * ax
        for i, p in enumerate(parts):
            if p.requires_grad:
                p._accumulate(g[base + (i,)])
    out._backward = back
    return out


def reshape(x, shape):
    if not isinstance(x, Tensor):
        return np.reshape(np.asarray(x, dtype=np.float64), shape)
    return x.reshape(shape)


def expand_dims(x, axis):
    if not isinstance(x, Tensor):
        return np.expand_dims(np.asarray(x, dtype=np.float64), axis)
    out = Tensor(np.expand_dims(x.data, axis), _parents=(x,))
    def back(g):
        if x.requires_grad:
            x._accumulate(np.squeeze(g, axis=axis))
    out._backward = back
    return out


def softmax(x, axis=-1):
    """Stable softmax; shift by a detached max, which is gradient-neutral."""
    shift = value(x).max(axis=axis, keepdims=True)
    e = exp(x - shift)
    return e / sum_(e, axis=axis, keepdims=True)


def l2_norm(x):
    """Euclidean norm of a flat vector (not safe at exactly zero)."""
    return sqrt(sum_(x * x))


class Adam:
    """Adam with the standard bias correction; state lives on the optimizer."""

    def __init__(self, params, lr: float = 1e-5, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self._m[i] = self.beta1 * self._m[i] + (1.0 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self._m[i] / (1.0 - self.beta1 ** self.t)
            v_hat = self._v[i] / (1.0 - self.beta2 ** self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def numeric_gradient(func, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function, element by element."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = func(x)
        flat[i] = orig - h
        fm = func(x)
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * h)
    return grad
