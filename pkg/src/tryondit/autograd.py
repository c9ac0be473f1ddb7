"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough machinery to train the toy codec and transformer in this
package: elementwise arithmetic, (batched) matmul, shape ops, reductions,
the handful of nonlinearities the models use, and an im2col/col2im pair
for convolutions. Graphs are built functionally; calling ``backward()``
on a scalar loss accumulates gradients into every reachable leaf with
``requires_grad=True``.

All computation is plain numpy, so results are deterministic for a fixed
input on a fixed platform, and dtype follows the inputs (float32 for
normal training, float64 for gradient checks).
"""
from __future__ import annotations

import numpy as np


class Var:
    """A node in the computation graph wrapping one ndarray."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Var":
        return Var(self.data)

    def __repr__(self):
        return f"Var(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------
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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return pow_scalar(self, exponent)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def backward(self):
        """Backpropagate from this scalar node into all requiring leaves."""
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar; got shape {self.data.shape}")
        topo = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in topo:
            if node._backward is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                # accumulation is always out-of-place, so aliased grads are safe
                parent.grad = g if parent.grad is None else parent.grad + g
            # interior activations do not need to keep their gradient
            if node._parents:
                node.grad = None


def _toposort(root: Var) -> list[Var]:
    order: list[Var] = []
    visited: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return list(reversed(order))


def _wrap(x, like: Var | None = None) -> Var:
    if isinstance(x, Var):
        return x
    dtype = like.data.dtype if like is not None else None
    return Var(np.asarray(x, dtype=dtype))


def _node(data: np.ndarray, parents: tuple[Var, ...], backward) -> Var:
    out = Var(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` over the axes numpy broadcast to reach `shape`."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- arithmetic ----------------------------------------------------------


def add(a, b) -> Var:
    a = _wrap(a, like=b if isinstance(b, Var) else None)
    b = _wrap(b, like=a)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _node(out, (a, b), backward)


def sub(a, b) -> Var:
    a = _wrap(a, like=b if isinstance(b, Var) else None)
    b = _wrap(b, like=a)
    out = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _node(out, (a, b), backward)


def mul(a, b) -> Var:
    a = _wrap(a, like=b if isinstance(b, Var) else None)
    b = _wrap(b, like=a)
    out = a.data * b.data

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _node(out, (a, b), backward)


def div(a, b) -> Var:
    a = _wrap(a, like=b if isinstance(b, Var) else None)
    b = _wrap(b, like=a)
    out = a.data / b.data

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return _node(out, (a, b), backward)


def pow_scalar(a: Var, exponent: float) -> Var:
    a = _wrap(a)
    out = a.data**exponent

    def backward(g):
        return (g * exponent * a.data ** (exponent - 1),)

    return _node(out, (a,), backward)


def matmul(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul expects operands with ndim >= 2")
    out = a.data @ b.data

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _node(out, (a, b), backward)


# -- shape ops -----------------------------------------------------------


def reshape(a: Var, shape) -> Var:
    a = _wrap(a)
    out = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.data.shape),)

    return _node(out, (a,), backward)


def transpose(a: Var, axes) -> Var:
    a = _wrap(a)
    axes = tuple(axes)
    out = a.data.transpose(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (g.transpose(inverse),)

    return _node(out, (a,), backward)


def getitem(a: Var, idx) -> Var:
    a = _wrap(a)
    out = a.data[idx]

    def backward(g):
        ga = np.zeros_like(a.data)
        ga[idx] += g
        return (ga,)

    return _node(out, (a,), backward)


def concat(vars_, axis: int) -> Var:
    vars_ = [_wrap(v) for v in vars_]
    out = np.concatenate([v.data for v in vars_], axis=axis)
    sizes = [v.data.shape[axis] for v in vars_]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(out, tuple(vars_), backward)


def pad2d(a: Var, pad: int) -> Var:
    """Zero-pad the last two axes by `pad` on every side."""
    a = _wrap(a)
    if pad == 0:
        return a
    width = [(0, 0)] * (a.ndim - 2) + [(pad, pad), (pad, pad)]
    out = np.pad(a.data, width)

    def backward(g):
        sl = (Ellipsis, slice(pad, -pad), slice(pad, -pad))
        return (g[sl],)

    return _node(out, (a,), backward)


# -- reductions ----------------------------------------------------------


def sum_(a: Var, axis=None, keepdims: bool = False) -> Var:
    a = _wrap(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).astype(a.data.dtype, copy=True),)
        g_exp = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp, a.data.shape).copy(),)

    return _node(out, (a,), backward)


def mean(a: Var, axis=None, keepdims: bool = False) -> Var:
    a = _wrap(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size / out.size

    def backward(g):
        if axis is None:
            g_exp = g
        else:
            g_exp = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp / count, a.data.shape).astype(a.data.dtype, copy=True),)

    return _node(out, (a,), backward)


# -- nonlinearities -------------------------------------------------------


def tanh(a: Var) -> Var:
    a = _wrap(a)
    out = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return _node(out, (a,), backward)


def sigmoid(a: Var) -> Var:
    a = _wrap(a)
    out = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        return (g * out * (1.0 - out),)

    return _node(out, (a,), backward)


def exp(a: Var) -> Var:
    a = _wrap(a)
    out = np.exp(a.data)

    def backward(g):
        return (g * out,)

    return _node(out, (a,), backward)


_GELU_C = 0.7978845608028654  # sqrt(2/pi)


def gelu(a: Var) -> Var:
    """GELU, tanh approximation."""
    a = _wrap(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

    return _node(out, (a,), backward)


def silu(a: Var) -> Var:
    a = _wrap(a)
    s = 1.0 / (1.0 + np.exp(-a.data))
    out = a.data * s

    def backward(g):
        return (g * s * (1.0 + a.data * (1.0 - s)),)

    return _node(out, (a,), backward)


def softmax(a: Var, axis: int = -1) -> Var:
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _node(out, (a,), backward)


def layernorm(a: Var, eps: float = 1e-6) -> Var:
    """Normalize the last axis to zero mean / unit variance (no affine)."""
    a = _wrap(a)
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    out = xc * inv

    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * out).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - out * gy),)

    return _node(out, (a,), backward)


def rotate_pairs(a: Var) -> Var:
    """(x0, x1, x2, x3, ...) -> (-x1, x0, -x3, x2, ...) on the last axis.

    The 90-degree rotation used when applying rotary position embeddings.
    """
    a = _wrap(a)
    x = a.data
    out = np.empty_like(x)
    out[..., 0::2] = -x[..., 1::2]
    out[..., 1::2] = x[..., 0::2]

    def backward(g):
        ga = np.empty_like(g)
        ga[..., 1::2] = -g[..., 0::2]
        ga[..., 0::2] = g[..., 1::2]
        return (ga,)

    return _node(out, (a,), backward)


# -- convolution ----------------------------------------------------------


def im2col(a: Var, kernel: int, stride: int) -> Var:
    """Extract kernel x kernel patches from (B, C, H, W) into (B, oh*ow, C*k*k)."""
    a = _wrap(a)
    B, C, H, W = a.data.shape
    k, s = kernel, stride
    oh = (H - k) // s + 1
    ow = (W - k) // s + 1
    win = np.lib.stride_tricks.sliding_window_view(a.data, (k, k), axis=(2, 3))
    win = win[:, :, ::s, ::s]  # (B, C, oh, ow, k, k)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B, oh * ow, C * k * k)

    def backward(g):
        ga = np.zeros_like(a.data)
        gw = g.reshape(B, oh, ow, C, k, k)
        for di in range(k):
            for dj in range(k):
                ga[:, :, di : di + s * oh : s, dj : dj + s * ow : s] += gw[
                    :, :, :, :, di, dj
                ].transpose(0, 3, 1, 2)
        return (ga,)

    out = _node(np.ascontiguousarray(cols), (a,), backward)
    return out


def conv2d(x: Var, weight: Var, bias: Var, stride: int = 1, padding: int = 0) -> Var:
    """2-D convolution on (B, C, H, W) with an (Cout, Cin, k, k) kernel."""
    cout, cin, k, k2 = weight.shape
    if k != k2:
        raise ValueError("conv2d expects square kernels")
    xp = pad2d(x, padding)
    B, _, Hp, Wp = xp.shape
    oh = (Hp - k) // stride + 1
    ow = (Wp - k) // stride + 1
    cols = im2col(xp, k, stride)  # (B, oh*ow, cin*k*k)
    wmat = reshape(weight, (cout, cin * k * k))
    out = matmul(cols, transpose(wmat, (1, 0)))  # (B, oh*ow, cout)
    out = add(out, reshape(bias, (1, 1, cout)))
    out = transpose(reshape(out, (B, oh, ow, cout)), (0, 3, 1, 2))
    return out
