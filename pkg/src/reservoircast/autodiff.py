"""Minimal reverse-mode tape over float64 numpy arrays.

Graph nodes are Tensor objects holding a value, an optional gradient, and a
closure that maps the node's gradient to its parents' gradients. The tape is
the implicit parent graph; backward() walks it once in reverse topological
order. Only what the forecaster needs is implemented: elementwise arithmetic
with broadcasting, (batched) matmul, a few nonlinearities, reductions,
reshape/transpose/concat, row-softmax, and the Huber penalty.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to the shape the operand had before broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("value", "grad", "_parents", "_vjp", "requires_grad")

    def __init__(self, value, requires_grad=False, _parents=(), _vjp=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    # -- graph construction helpers ------------------------------------
    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    def _make(self, value, parents, vjp) -> "Tensor":
        needs = any(p.requires_grad for p in parents)
        return Tensor(value, requires_grad=needs,
                      _parents=parents if needs else (),
                      _vjp=vjp if needs else None)

    # -- arithmetic -----------------------------------------------------
    def __add__(self, other):
        other = Tensor._lift(other)
        out = self.value + other.value
        return self._make(out, (self, other), lambda g: (
            _unbroadcast(g, self.value.shape), _unbroadcast(g, other.value.shape)))

    __radd__ = __add__

    def __sub__(self, other):
        other = Tensor._lift(other)
        out = self.value - other.value
        return self._make(out, (self, other), lambda g: (
            _unbroadcast(g, self.value.shape), _unbroadcast(-g, other.value.shape)))

    def __rsub__(self, other):
        return Tensor._lift(other) - self

    def __mul__(self, other):
        other = Tensor._lift(other)
        out = self.value * other.value
        return self._make(out, (self, other), lambda g: (
            _unbroadcast(g * other.value, self.value.shape),
            _unbroadcast(g * self.value, other.value.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._lift(other)
        out = self.value / other.value
        return self._make(out, (self, other), lambda g: (
            _unbroadcast(g / other.value, self.value.shape),
            _unbroadcast(-g * self.value / (other.value ** 2), other.value.shape)))

    def __rtruediv__(self, other):
        return Tensor._lift(other) / self

    def __neg__(self):
        return self._make(-self.value, (self,), lambda g: (-g,))

    def __matmul__(self, other):
        other = Tensor._lift(other)
        a, b = self.value, other.value
        if a.ndim < 2 or b.ndim < 2:
            raise ValueError("matmul operands must have ndim >= 2")
        out = a @ b

        def vjp(g):
            ga = _unbroadcast(g @ np.swapaxes(b, -1, -2), a.shape)
            gb = _unbroadcast(np.swapaxes(a, -1, -2) @ g, b.shape)
            return ga, gb

        return self._make(out, (self, other), vjp)

    # -- shape ops -------------------------------------------------------
    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.value.shape
        return self._make(self.value.reshape(shape), (self,),
                          lambda g: (g.reshape(old),))

    def transpose(self, *axes):
        if not axes:
            axes = tuple(reversed(range(self.value.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = np.argsort(axes)
        return self._make(self.value.transpose(axes), (self,),
                          lambda g: (g.transpose(inv),))

    # -- reductions -------------------------------------------------------
    def sum(self, axis=None, keepdims=False):
        out = self.value.sum(axis=axis, keepdims=keepdims)
        shape = self.value.shape

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, shape).copy(),)
            gg = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gg, shape).copy(),)

        return self._make(out, (self,), vjp)

    def mean(self, axis=None, keepdims=False):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(n)

    # -- backward ---------------------------------------------------------
    def backward(self):
        if self.value.size != 1:
            raise ValueError("backward() expects a scalar loss")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, emitted = stack.pop()
            if emitted:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(topo):
            if node._vjp is None:
                continue
            grads = node._vjp(node.grad)
            for p, g in zip(node._parents, grads):
                if g is None or not p.requires_grad:
                    continue
                p.grad = g if p.grad is None else p.grad + g


def constant(x) -> Tensor:
    return Tensor(x, requires_grad=False)


def param(x) -> Tensor:
    return Tensor(np.array(x, dtype=np.float64), requires_grad=True)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.value)
    return x._make(out, (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-x.value))
    return x._make(out, (x,), lambda g: (g * out * (1.0 - out),))


def relu(x: Tensor) -> Tensor:
    mask = x.value > 0.0
    return x._make(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.value)
    return x._make(out, (x,), lambda g: (g * out,))


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.value)
    return x._make(out, (x,), lambda g: (g * 0.5 / out,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.value - np.max(x.value, axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = np.sum(g * p, axis=axis, keepdims=True)
        return ((g - dot) * p,)

    return x._make(p, (x,), vjp)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [Tensor._lift(t) for t in tensors]
    values = [t.value for t in tensors]
    out = np.concatenate(values, axis=axis)
    sizes = [v.shape[axis] for v in values]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    needs = any(t.requires_grad for t in tensors)
    return Tensor(out, requires_grad=needs,
                  _parents=tuple(tensors) if needs else (),
                  _vjp=vjp if needs else None)


def huber(x: Tensor, delta: float = 1.0) -> Tensor:
    """Elementwise Huber penalty: 0.5 r^2 inside |r| <= delta, linear outside."""
    a = np.abs(x.value)
    out = np.where(a <= delta, 0.5 * x.value * x.value, delta * (a - 0.5 * delta))
    return x._make(out, (x,), lambda g: (g * np.clip(x.value, -delta, delta),))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    mu = x.mean(axis=-1, keepdims=True)
    d = x - mu
    var = (d * d).mean(axis=-1, keepdims=True)
    return d / sqrt(var + eps) * gain + bias


def finite_difference_grad(f, arrays, step: float = 1e-5) -> list:
    """Central finite differences of scalar f() w.r.t. a list of arrays.

    The arrays are perturbed in place; f must recompute the loss from their
    current contents.
    """
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = float(f())
            flat[i] = keep - step
            down = float(f())
            flat[i] = keep
            gflat[i] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads
