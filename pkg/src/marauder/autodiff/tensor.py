"""Dense tensors with reverse-mode differentiation.

Every op returns a new Tensor that remembers its parents and a closure that
pushes the output gradient back to them. ``backward`` walks the recorded
graph once in reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DEFAULT_DTYPE = np.float32


class AutodiffError(ValueError):
    pass


class ShapeMismatch(AutodiffError):
    pass


class NonFiniteInput(AutodiffError):
    pass


class IndexOutOfRange(AutodiffError):
    pass


class DetachedTensor(AutodiffError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None,
                 _parents: tuple = (), _backward: Callable | None = None, op: str = ""):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            dtype = data.dtype if isinstance(data, np.ndarray) and data.dtype.kind == "f" else DEFAULT_DTYPE
        self.data = np.asarray(data, dtype=dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op

    # -- basics ---------------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op or 'leaf'})"

    def backward(self, grad=None) -> None:
        backward(self, grad)

    # -- operators ------------------------------------------------------------
    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __truediv__(self, o): return div(self, o)
    def __neg__(self): return neg(self)
    def __matmul__(self, o): return matmul(self, o)
    def __getitem__(self, idx): return index(self, idx)

    def sum(self, axis=None, keepdims=False): return tsum(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return mean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)
    def transpose(self, *axes): return transpose(self, axes or None)

    @property
    def T(self): return transpose(self, None)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype or DEFAULT_DTYPE))


def _make(data, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, dtype=data.dtype,
                  _parents=tuple(parents) if needs else (),
                  _backward=backward_fn if needs else None, op=op)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(np.broadcast_to(g, t.shape), dtype=t.dtype)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def backward(loss: Tensor, grad=None) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every tracked leaf.

    Interior nodes drop their gradient and closure once consumed, so the
    graph is released as the pass proceeds.
    """
    if not loss.requires_grad:
        raise DetachedTensor("backward() on a tensor that is not part of a recorded graph")
    if grad is None:
        if loss.data.size != 1:
            raise ShapeMismatch("backward() without a seed gradient needs a scalar")
        grad = np.ones_like(loss.data)
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
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
    seed = np.asarray(grad, dtype=loss.dtype).reshape(loss.shape)
    if loss._backward is None:
        _accum(loss, seed)
        return
    loss.grad = seed
    for node in reversed(order):
        if node._backward is None:
            continue
        g = node.grad
        if g is not None:
            node._backward(g)
        node.grad = None
        node._backward = None
        node._parents = ()


# -- elementwise arithmetic ---------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))
    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))
    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))
    return _make(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))
    return _make(a.data / b.data, (a, b), bw, "div")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: _accum(a, -g), "neg")


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    elif not isinstance(a, Tensor):
        a, b = as_tensor(a), as_tensor(b)
    return a, b


# -- nonlinearities -------------------------------------------------------------

def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: _accum(x, g * (1.0 - y * y)), "tanh")


def sigmoid(x: Tensor) -> Tensor:
    # tanh form avoids overflow in exp for large |x|
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _make(y, (x,), lambda g: _accum(x, g * y * (1.0 - y)), "sigmoid")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: _accum(x, g * mask), "relu")


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _make(y, (x,), lambda g: _accum(x, g * y), "exp")


def log(x: Tensor) -> Tensor:
    return _make(np.log(x.data), (x,), lambda g: _accum(x, g / x.data), "log")


def _check_finite(x: Tensor, op: str) -> None:
    if not np.all(np.isfinite(x.data)):
        raise NonFiniteInput(f"{op} received non-finite values")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_finite(x, "softmax")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    def bw(g):
        _accum(x, y * (g - (g * y).sum(axis=axis, keepdims=True)))
    return _make(y, (x,), bw, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_finite(x, "log_softmax")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse
    def bw(g):
        _accum(x, g - np.exp(y) * g.sum(axis=axis, keepdims=True))
    return _make(y, (x,), bw, "log_softmax")


def cross_entropy(logits: Tensor, target) -> Tensor:
    """Mean of -log softmax(logits)[target] over the batch.

    ``logits`` is (K,) with an int target or (B, K) with B targets.
    """
    _check_finite(logits, "cross_entropy")
    single = logits.ndim == 1
    L = logits.data[None] if single else logits.data
    tgt = np.atleast_1d(np.asarray(target, dtype=np.int64))
    B, K = L.shape
    if tgt.shape != (B,):
        raise ShapeMismatch(f"{B} logit rows but {tgt.shape} targets")
    if np.any(tgt < 0) or np.any(tgt >= K):
        raise IndexOutOfRange(f"targets must lie in [0, {K})")
    z = L - L.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    loss = np.asarray((lse - z[np.arange(B), tgt]).mean(), dtype=logits.dtype)
    def bw(g):
        p = np.exp(z - lse[:, None])
        p[np.arange(B), tgt] -= 1.0
        p *= g / B
        _accum(logits, p[0] if single else p)
    return _make(loss, (logits,), bw, "cross_entropy")


# -- reductions & shape ---------------------------------------------------------

def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    y = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))
    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.shape))
    return _make(y, (x,), bw, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis, keepdims), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    return _make(x.data.reshape(shape), (x,), lambda g: _accum(x, g.reshape(x.shape)), "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    inv = None if axes is None else np.argsort(axes)
    return _make(x.data.transpose(axes), (x,), lambda g: _accum(x, g.transpose(inv)), "transpose")


def index(x: Tensor, idx) -> Tensor:
    """Basic or integer-array indexing; gradients scatter-add back."""
    if isinstance(idx, Tensor):
        idx = idx.data
    y = x.data[idx]
    basic = all(isinstance(i, (slice, int, type(Ellipsis), type(None)))
                for i in (idx if isinstance(idx, tuple) else (idx,)))
    def bw(g):
        full = np.zeros_like(x.data)
        if basic:
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        _accum(x, full)
    return _make(np.array(y), (x,), bw, "index")


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = list(xs)
    if not xs:
        raise ShapeMismatch("concat of nothing")
    ax = axis % xs[0].ndim
    sizes = [t.shape[ax] for t in xs]
    try:
        y = np.concatenate([t.data for t in xs], axis=ax)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from None
    def bw(g):
        for t, part in zip(xs, np.split(g, np.cumsum(sizes)[:-1], axis=ax)):
            _accum(t, part)
    return _make(y, xs, bw, "concat")


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = list(xs)
    y = np.stack([t.data for t in xs], axis=axis)
    def bw(g):
        for i, t in enumerate(xs):
            _accum(t, np.take(g, i, axis=axis))
    return _make(y, xs, bw, "stack")


# -- linear algebra ---------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(…, m, k) @ (…, k, n) with numpy broadcasting over leading dims."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch("matmul needs operands of rank >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
    y = np.matmul(a.data, b.data)
    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))
    return _make(y, (a, b), bw, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ weight.T + bias, weight shaped (out, in)."""
    y = matmul(x, transpose(weight))
    return add(y, bias) if bias is not None else y


# -- convolution & pooling ----------------------------------------------------------

def conv2d(x: Tensor, k: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation. x is (N, C, H, W) or (C, H, W); k is (O, C, kh, kw)."""
    single = x.ndim == 3
    X = x.data[None] if single else x.data
    if X.ndim != 4 or k.ndim != 4:
        raise ShapeMismatch(f"conv2d input {x.shape}, kernel {k.shape}")
    N, C, H, W = X.shape
    O, Ck, kh, kw = k.shape
    if Ck != C:
        raise ShapeMismatch(f"kernel expects {Ck} channels, input has {C}")
    if (H + 2 * padding - kh) % stride or (W + 2 * padding - kw) % stride:
        raise ShapeMismatch("output size is not integral for this stride/padding")
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    if Ho < 1 or Wo < 1:
        raise ShapeMismatch("kernel larger than padded input")
    Xp = np.pad(X, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else X
    win = sliding_window_view(Xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # (N, Ho, Wo, C, kh, kw) -> rows of patches
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(N * Ho * Wo, C * kh * kw)
    Km = k.data.reshape(O, -1)
    out = (cols @ Km.T).reshape(N, Ho, Wo, O).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, O, 1, 1)
    out = np.ascontiguousarray(out[0] if single else out)
    parents = (x, k) if bias is None else (x, k, bias)

    def bw(g):
        G = g[None] if single else g
        Gm = G.transpose(0, 2, 3, 1).reshape(N * Ho * Wo, O)
        if k.requires_grad:
            _accum(k, (Gm.T @ cols).reshape(k.shape))
        if bias is not None and bias.requires_grad:
            _accum(bias, G.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dcols = (Gm @ Km).reshape(N, Ho, Wo, C, kh, kw)
            dXp = np.zeros_like(Xp)
            for i in range(kh):
                for j in range(kw):
                    dXp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += \
                        dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            dX = dXp[:, :, padding:padding + H, padding:padding + W] if padding else dXp
            _accum(x, dX[0] if single else dX)
    return _make(out, parents, bw, "conv2d")


def _pool_view(X: np.ndarray, size: int, fill: float):
    N, C, H, W = X.shape
    Ho, Wo = -(-H // size), -(-W // size)
    ph, pw = Ho * size - H, Wo * size - W
    if ph or pw:
        X = np.pad(X, ((0, 0), (0, 0), (0, ph), (0, pw)), constant_values=fill)
    v = X.reshape(N, C, Ho, size, Wo, size).transpose(0, 1, 2, 4, 3, 5).reshape(N, C, Ho, Wo, size * size)
    return v, Ho, Wo


def maxpool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping max pooling; ragged edges use a truncated window.
    Gradient goes to the first maximal element in row-major scan order."""
    single = x.ndim == 3
    X = x.data[None] if single else x.data
    N, C, H, W = X.shape
    v, Ho, Wo = _pool_view(X, size, -np.inf)
    arg = v.argmax(axis=-1)
    y = np.take_along_axis(v, arg[..., None], axis=-1)[..., 0]

    def bw(g):
        G = g[None] if single else g
        dv = np.zeros((N, C, Ho, Wo, size * size), dtype=X.dtype)
        np.put_along_axis(dv, arg[..., None], G[..., None], axis=-1)
        d = dv.reshape(N, C, Ho, Wo, size, size).transpose(0, 1, 2, 4, 3, 5).reshape(N, C, Ho * size, Wo * size)
        d = d[:, :, :H, :W]
        _accum(x, d[0] if single else d)
    return _make(np.ascontiguousarray(y[0] if single else y), (x,), bw, "maxpool2d")


def avgpool2d(x: Tensor, size: int = 2) -> Tensor:
    single = x.ndim == 3
    X = x.data[None] if single else x.data
    N, C, H, W = X.shape
    v, Ho, Wo = _pool_view(X, size, 0.0)
    ones, _, _ = _pool_view(np.ones((1, 1, H, W), dtype=X.dtype), size, 0.0)
    count = ones.sum(axis=-1)  # (1, 1, Ho, Wo)
    y = v.sum(axis=-1) / count

    def bw(g):
        G = (g[None] if single else g) / count
        d = np.broadcast_to(G[..., None], (N, C, Ho, Wo, size * size))
        d = d.reshape(N, C, Ho, Wo, size, size).transpose(0, 1, 2, 4, 3, 5).reshape(N, C, Ho * size, Wo * size)
        d = np.ascontiguousarray(d[:, :, :H, :W])
        _accum(x, d[0] if single else d)
    return _make(np.ascontiguousarray(y[0] if single else y), (x,), bw, "avgpool2d")


# -- recurrent cell ---------------------------------------------------------------

def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, weight: Tensor, bias: Tensor):
    """One LSTM step.

    ``weight`` is (D + H, 4H) acting on [x; h_prev]; gate blocks are ordered
    i, f, g, o. Works on a single vector or a (B, ·) batch.
    """
    Hd = h_prev.shape[-1]
    if weight.shape != (x.shape[-1] + Hd, 4 * Hd) or bias.shape != (4 * Hd,):
        raise ShapeMismatch(f"lstm weight {weight.shape} / bias {bias.shape} for input {x.shape[-1]}, hidden {Hd}")
    single = x.ndim == 1
    xh = concat([x, h_prev], axis=-1)
    if single:
        xh = reshape(xh, (1, -1))
    gates = add(matmul(xh, weight), bias)
    if single:
        gates = reshape(gates, (-1,))
    i = sigmoid(gates[..., 0:Hd])
    f = sigmoid(gates[..., Hd:2 * Hd])
    g = tanh(gates[..., 2 * Hd:3 * Hd])
    o = sigmoid(gates[..., 3 * Hd:4 * Hd])
    c = add(mul(f, c_prev), mul(i, g))
    h = mul(o, tanh(c))
    return h, c


def parameters_of(tensors: Iterable[Tensor]) -> list[Tensor]:
    return [t for t in tensors if t.requires_grad]
