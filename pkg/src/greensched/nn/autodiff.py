"""Minimal reverse-mode autodiff over numpy arrays (float64).

Covers exactly the operations the scheduling networks need: broadcasting
arithmetic, matmul, conv2d (via im2col), tanh/exp/log, axis reductions,
reshape/concat, gathering action columns, and stop_gradient.  Backward
passes are exact; every op is validated against central finite differences
in the gradient-check harness.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np


class GraphError(Exception):
    """Raised when backward is requested on a detached graph."""


class Tensor:
    __slots__ = ("data", "grad", "parents", "bwd", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, parents: tuple = (), bwd=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.parents = parents
        self.bwd = bwd
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, grad: np.ndarray, own: bool = False) -> None:
        """Add `grad` to the stored gradient.

        `own=True` promises the caller hands over a freshly allocated array
        (no views into other gradients or scratch buffers), letting the
        first accumulation skip a defensive copy.
        """
        if self.grad is None:
            if own and isinstance(grad, np.ndarray) and grad.shape == self.data.shape:
                self.grad = grad
            else:
                self.grad = np.array(grad, dtype=np.float64)
                if self.grad.shape != self.data.shape:
                    self.grad = np.broadcast_to(self.grad, self.data.shape).copy()
        else:
            self.grad += grad

    def backward(self) -> None:
        if self.data.size != 1:
            raise GraphError("backward requires a scalar loss")
        if not self.requires_grad:
            raise GraphError("backward on a detached graph: no parameters require grad")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in seen:
                continue
            if expanded:
                seen.add(id(node))
                order.append(node)
                continue
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node.bwd is not None and node.grad is not None:
                node.bwd(node.grad)

    # operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __pow__(self, exponent):
        return power(self, exponent)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def stop_gradient(x: Tensor) -> Tensor:
    """Detach: same values, zero gradient contribution upstream."""
    return Tensor(x.data, requires_grad=False)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _binary(a: Tensor, b: Tensor, out_data, da, db, own: bool = False) -> Tensor:
    def bwd(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(da(grad), a.data.shape), own=own)
        if b.requires_grad:
            b._accumulate(_unbroadcast(db(grad), b.data.shape), own=own)
    return Tensor(out_data, parents=(a, b), bwd=bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, a.data + b.data, lambda g: g, lambda g: g)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, a.data - b.data, lambda g: g, lambda g: -g)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, a.data * b.data, lambda g: g * b.data, lambda g: g * a.data,
                   own=True)


def div(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, a.data / b.data,
                   lambda g: g / b.data,
                   lambda g: -g * a.data / (b.data ** 2), own=True)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data @ b.data

    def bwd(grad):
        if a.requires_grad:
            a._accumulate(grad @ b.data.T, own=True)
        if b.requires_grad:
            b._accumulate(a.data.T @ grad, own=True)
    return Tensor(out, parents=(a, b), bwd=bwd)


def power(a: Tensor, exponent: float) -> Tensor:
    out = a.data ** exponent

    def bwd(grad):
        if a.requires_grad:
            a._accumulate(grad * exponent * a.data ** (exponent - 1), own=True)
    return Tensor(out, parents=(a,), bwd=bwd)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def bwd(grad):
        if a.requires_grad:
            a._accumulate(grad * out, own=True)
    return Tensor(out, parents=(a,), bwd=bwd)


def log(a: Tensor) -> Tensor:
    def bwd(grad):
        if a.requires_grad:
            a._accumulate(grad / a.data, own=True)
    return Tensor(np.log(a.data), parents=(a,), bwd=bwd)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bwd(grad):
        if a.requires_grad:
            from .convkernels import dtanh
            a._accumulate(dtanh(np.ascontiguousarray(grad), out), own=True)
    return Tensor(out, parents=(a,), bwd=bwd)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(grad):
        if not a.requires_grad:
            return
        g = np.asarray(grad)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape).copy(), own=True)
    return Tensor(out, parents=(a,), bwd=bwd)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), _wrap(1.0 / count))


def reshape(a: Tensor, shape) -> Tensor:
    def bwd(grad):
        if a.requires_grad:
            a._accumulate(grad.reshape(a.data.shape))
    return Tensor(a.data.reshape(shape), parents=(a,), bwd=bwd)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(grad):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * grad.ndim
                index[axis] = slice(lo, hi)
                t._accumulate(grad[tuple(index)])
    return Tensor(out, parents=tuple(tensors), bwd=bwd)


def take_actions(a: Tensor, actions: np.ndarray) -> Tensor:
    """Select one column per row: out[i] = a[i, actions[i]]."""
    actions = np.asarray(actions, dtype=int)
    rows = np.arange(a.data.shape[0])
    out = a.data[rows, actions]

    def bwd(grad):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[rows, actions] = grad
            a._accumulate(full, own=True)
    return Tensor(out, parents=(a,), bwd=bwd)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, padding: int = 1,
           workspace=None) -> Tensor:
    """Stride-1 2D convolution; x is (B, Cin, H, W), weight (Cout, Cin, kh, kw).

    Runs as GEMMs over a position-major patch matrix; `workspace` (a
    ConvWorkspace) lets repeated calls reuse the large scratch buffers.
    """
    from .convkernels import ConvWorkspace, col2im_add, im2col

    batch, cin, height, width = x.data.shape
    cout, cin_w, kh, kw = weight.data.shape
    if cin != cin_w:
        raise ValueError(f"conv2d channel mismatch: {cin} vs {cin_w}")
    out_h = height + 2 * padding - kh + 1
    out_w = width + 2 * padding - kw + 1
    if out_h < 1 or out_w < 1:
        raise ValueError("conv2d kernel larger than padded input")
    ws = workspace if workspace is not None else ConvWorkspace()
    positions = batch * out_h * out_w
    patch = cin * kh * kw
    padded = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = ws.get("cols", (positions, patch))
    im2col(padded, kh, kw, out_h, out_w, cols)
    w2 = weight.data.reshape(cout, patch)
    out2 = ws.get("out", (positions, cout))
    np.matmul(cols, w2.T, out=out2)
    out2 += bias.data
    out = out2.reshape(batch, out_h, out_w, cout).transpose(0, 3, 1, 2)

    def bwd(grad):
        g2 = grad.transpose(0, 2, 3, 1).reshape(positions, cout)
        if bias.requires_grad:
            bias._accumulate(g2.sum(axis=0), own=True)
        if weight.requires_grad:
            weight._accumulate((g2.T @ cols).reshape(weight.data.shape), own=True)
        if x.requires_grad:
            dcols = ws.get("dcols", (positions, patch))
            np.matmul(g2, w2, out=dcols)
            dpad = ws.get("dpad", padded.shape)
            dpad.fill(0.0)
            col2im_add(dcols, dpad, kh, kw, out_h, out_w)
            if padding:
                dpad = dpad[:, :, padding:-padding, padding:-padding]
            # dpad aliases workspace storage: hand over a real copy
            x._accumulate(np.array(dpad) if x.grad is None else dpad, own=True)
    return Tensor(np.ascontiguousarray(out), parents=(x, weight, bias), bwd=bwd)


def softmax(logits: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax; the max shift carries no gradient."""
    shift = stop_gradient(Tensor(logits.data.max(axis=axis, keepdims=True)))
    exps = exp(sub(logits, shift))
    return div(exps, reduce_sum(exps, axis=axis, keepdims=True))


def log_softmax(logits: Tensor, axis: int = -1) -> Tensor:
    shift = stop_gradient(Tensor(logits.data.max(axis=axis, keepdims=True)))
    shifted = sub(logits, shift)
    lse = log(reduce_sum(exp(shifted), axis=axis, keepdims=True))
    return sub(shifted, lse)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift."""
    mean = reduce_mean(x, axis=-1, keepdims=True)
    centered = sub(x, mean)
    var = reduce_mean(mul(centered, centered), axis=-1, keepdims=True)
    inv = power(add(var, _wrap(eps)), -0.5)
    return add(mul(mul(centered, inv), gamma), beta)
