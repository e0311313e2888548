"""Dense float64 tensors with reverse-mode differentiation.

Every op is a plain function that computes its forward value with numpy and
records a closure mapping the output gradient to input gradients. Calling
:func:`backward` on a scalar walks the recorded graph in reverse topological
order (the tape), visiting each node once.

Broadcasting is deliberately narrow: elementwise ops accept identical shapes
or a tensor/scalar pair. Anything else goes through :func:`broadcast_to`.
Conv-style ops and matmul accept an optional leading batch axis.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class DomainError(ValueError):
    """Input lies outside the domain of the op (e.g. log of a non-positive)."""


class Tensor:
    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._op = ""

    @classmethod
    def _result(cls, data: np.ndarray, parents: Sequence["Tensor"], backward_fn, op: str) -> "Tensor":
        out = cls.__new__(Tensor)
        out.data = data
        out.grad = None
        out._op = op
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward_fn
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


class Parameter(Tensor):
    """A named, trainable tensor. ``frozen`` parameters are skipped by the optimizer."""

    def __init__(self, name: str, data, frozen: bool = False):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.frozen = frozen

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, frozen={self.frozen})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def _tape(root: Tensor) -> list[Tensor]:
    """Topological order of the graph below ``root`` (inputs before outputs)."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf that requires grad."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise RuntimeError("loss does not depend on any tensor that requires grad")
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_tape(loss)):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pg if key not in pending else pending[key] + pg


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def _pair(a, b) -> tuple[Tensor, Tensor]:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ShapeError(f"elementwise op needs equal shapes or a scalar, got {a.shape} and {b.shape}")
    return a, b


def _unscalar(g: np.ndarray, t: Tensor) -> np.ndarray:
    if g.shape == t.shape:
        return g
    return np.full(t.shape, g.sum())


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return Tensor._result(a.data + b.data, (a, b), lambda g: (_unscalar(g, a), _unscalar(g, b)), "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return Tensor._result(a.data - b.data, (a, b), lambda g: (_unscalar(g, a), _unscalar(-g, b)), "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    return Tensor._result(
        a.data * b.data, (a, b), lambda g: (_unscalar(g * b.data, a), _unscalar(g * a.data, b)), "mul"
    )


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data / b.data

    def bw(g):
        return _unscalar(g / b.data, a), _unscalar(-g * out / b.data, b)

    return Tensor._result(out, (a, b), bw, "div")


def neg(x: Tensor) -> Tensor:
    return Tensor._result(-x.data, (x,), lambda g: (-g,), "neg")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return Tensor._result(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor._result(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise DomainError("log of a non-positive value")
    return Tensor._result(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def clamp_min(x: Tensor, floor: float) -> Tensor:
    """max(x, floor); gradient passes only where x is above the floor."""
    keep = x.data > floor
    return Tensor._result(np.where(keep, x.data, floor), (x,), lambda g: (g * keep,), "clamp_min")


def elementwise(x, kind: str, other=None) -> Tensor:
    """Dispatch by name: relu, sigmoid, exp, log (unary) or add, mul, sub (binary)."""
    unary = {"relu": relu, "sigmoid": sigmoid, "exp": exp, "log": log}
    binary = {"add": add, "mul": mul, "sub": sub}
    if kind in unary:
        return unary[kind](as_tensor(x))
    if kind in binary:
        if other is None:
            raise ValueError(f"{kind} needs a second operand")
        return binary[kind](x, other)
    raise ValueError(f"unknown elementwise kind {kind!r}")


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------

def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._result(np.asarray(out, dtype=np.float64), (x,), bw, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([x.shape[a] for a in axes]))
    return tsum(x, axis, keepdims) * (1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = x.data.reshape(shape)
    return Tensor._result(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return Tensor._result(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),), "transpose")


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    axes = list(range(x.ndim))
    axes[a], axes[b] = axes[b], axes[a]
    return transpose(x, tuple(axes))


def getitem(x: Tensor, idx) -> Tensor:
    out = x.data[idx]

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor._result(np.array(out, dtype=np.float64), (x,), bw, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._result(out, tensors, bw, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return Tensor._result(out, tensors, bw, "stack")


def broadcast_to(x: Tensor, shape) -> Tensor:
    """Explicit numpy-style broadcast; the gradient sums over the expanded axes."""
    shape = tuple(shape)
    out = np.broadcast_to(x.data, shape).copy()
    lead = len(shape) - x.ndim

    def bw(g):
        g = g.sum(axis=tuple(range(lead))) if lead else g
        axes = tuple(i for i, n in enumerate(x.shape) if n == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
        return (g,)

    return Tensor._result(out, (x,), bw, "broadcast_to")


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` for 2-D operands, batched 3-D operands, or batched ``a`` with 2-D ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul batch dimensions disagree: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        if b.ndim == 2 and a.ndim > 2:
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return Tensor._result(out, (a, b), bw, "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map over the last axis: ``x @ w.T + b`` with ``w`` of shape (out, in)."""
    if x.shape[-1] != w.shape[1]:
        raise ShapeError(f"linear expects last axis {w.shape[1]}, got {x.shape}")
    out = x.data @ w.data.T
    if b is not None:
        out = out + b.data
    lead = x.shape[:-1]

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ w.data
        gw = g2.T @ x.data.reshape(-1, x.shape[-1])
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._result(out.reshape(*lead, w.shape[0]), parents, bw, "linear")


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _batched(x: Tensor) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x.data[None], True
    if x.ndim == 4:
        return x.data, False
    raise ShapeError(f"expected (C,H,W) or (N,C,H,W), got {x.shape}")


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation; ``w`` has shape (C_out, C_in, k, k)."""
    xd, single = _batched(x)
    n, c, h, wid = xd.shape
    co, ci, k, k2 = w.shape
    if ci != c or k != k2:
        raise ShapeError(f"conv2d weight {w.shape} incompatible with input {x.shape}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if k > h + 2 * pad or k > wid + 2 * pad:
        raise ShapeError(f"kernel {k} larger than padded input {(h, wid)}")
    ho = _kernels.conv_out_size(h, k, stride, pad)
    wo = _kernels.conv_out_size(wid, k, stride, pad)
    if ho <= 0 or wo <= 0:
        raise ShapeError("conv2d output would be empty")
    cols = _kernels.im2col(xd, k, stride, pad)  # (N, C*k*k, L)
    wm = w.data.reshape(co, -1)
    out = np.matmul(wm, cols)
    if b is not None:
        out += b.data[None, :, None]
    out = out.reshape(n, co, ho, wo)

    def bw(g):
        g = g.reshape(n, co, ho * wo)
        gw = np.tensordot(g, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
        gx = None
        if x.requires_grad:
            gx = _kernels.col2im(np.matmul(wm.T, g), xd.shape, k, stride, pad)
            gx = gx[0] if single else gx
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2))

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._result(out[0] if single else out, parents, bw, "conv2d")


def deconv2d(
    x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0, out_pad: int = 0
) -> Tensor:
    """Transposed convolution, the adjoint of :func:`conv2d` in ``x``.

    ``w`` has shape (C_in, C_out, k, k), i.e. the weight of the conv this op
    transposes. Output extent is ``(H-1)*stride - 2*pad + k + out_pad``.
    """
    xd, single = _batched(x)
    n, c, h, wid = xd.shape
    ci, co, k, k2 = w.shape
    if ci != c or k != k2:
        raise ShapeError(f"deconv2d weight {w.shape} incompatible with input {x.shape}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    ho = (h - 1) * stride - 2 * pad + k + out_pad
    wo = (wid - 1) * stride - 2 * pad + k + out_pad
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"deconv2d output extent {(ho, wo)} is not positive")
    wm = w.data.reshape(ci, co * k * k)
    cols = np.matmul(wm.T, xd.reshape(n, ci, h * wid))  # (N, C_out*k*k, H*W)
    out = _kernels.col2im(cols, (n, co, ho, wo), k, stride, pad)
    if b is not None:
        out += b.data[None, :, None, None]

    def bw(g):
        gcols = _kernels.im2col(g, k, stride, pad)  # (N, C_out*k*k, H*W)
        gw = np.tensordot(xd.reshape(n, ci, h * wid), gcols, axes=([0, 2], [0, 2])).reshape(w.shape)
        gx = None
        if x.requires_grad:
            gx = np.matmul(wm, gcols).reshape(xd.shape)
            gx = gx[0] if single else gx
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    def bw_shaped(g):
        return bw(g[None] if single else g)

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._result(out[0] if single else out, parents, bw_shaped, "deconv2d")


def avg_pool(x: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Area-average pooling of a (..., H, W) array to ``out_hw`` (H, W divisible). Not differentiable."""
    h, w = x.shape[-2:]
    oh, ow = out_hw
    if h % oh or w % ow:
        raise ShapeError(f"cannot area-pool {(h, w)} to {(oh, ow)}")
    return x.reshape(*x.shape[:-2], oh, h // oh, ow, w // ow).mean(axis=(-3, -1))


# ---------------------------------------------------------------------------
# normalisation
# ---------------------------------------------------------------------------

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise ValueError(f"axis {axis} invalid for shape {x.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._result(out, (x,), bw, "softmax")


def layer_norm(x: Tensor, axis: int, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    axis = axis % x.ndim
    n = x.shape[axis]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError(f"gain/bias must have shape ({n},), got {gain.shape}, {bias.shape}")
    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    shape = [1] * x.ndim
    shape[axis] = n
    gd = gain.data.reshape(shape)
    out = xhat * gd + bias.data.reshape(shape)
    other = tuple(i for i in range(x.ndim) if i != axis)

    def bw(g):
        gxhat = g * gd
        gx = inv * (
            gxhat
            - gxhat.mean(axis=axis, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=axis, keepdims=True)
        )
        return gx, (g * xhat).sum(axis=other), g.sum(axis=other)

    return Tensor._result(out, (x, gain, bias), bw, "layer_norm")


# ---------------------------------------------------------------------------
# optimiser
# ---------------------------------------------------------------------------

def adam_step(
    params: Sequence[Parameter],
    grads: Sequence[np.ndarray | None],
    state: dict,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    t: int = 1,
) -> None:
    """One bias-corrected Adam update in place. ``state`` maps parameter name -> (m, v)."""
    if t < 1:
        raise ValueError("Adam step counter t must be >= 1")
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g in zip(params, grads):
        if p.frozen:
            continue
        if g is None:
            g = np.zeros_like(p.data)
        m, v = state.get(p.name, (np.zeros_like(p.data), np.zeros_like(p.data)))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state[p.name] = (m, v)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


class Adam:
    def __init__(self, params: Iterable[Parameter], lr: float = 2.5e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.state: dict = {}

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        adam_step(self.params, [p.grad for p in self.params], self.state, self.lr,
                  self.beta1, self.beta2, self.eps, self.t)
