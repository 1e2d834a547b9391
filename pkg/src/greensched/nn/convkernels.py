"""Patch-matrix kernels for the convolution layers.

The planning-grid images are tiny (tens of columns), so convolution cost is
dominated by memory layout rather than arithmetic.  Two measures keep the
from-scratch training loop fast on a plain CPU:

- im2col/col2im run as JIT-compiled loops (numba) writing into caller-owned
  scratch buffers, in a position-major layout whose GEMMs have good BLAS
  shapes.  A pure-numpy fallback keeps everything working without numba.
- glibc's mmap threshold is raised so the large float64 temporaries the
  autodiff graph allocates every update are recycled from the heap instead
  of faulting in fresh pages.
"""

from __future__ import annotations

import ctypes
import os

import numpy as np

try:  # process-local malloc tuning; harmless to skip on non-glibc platforms
    _libc = ctypes.CDLL("libc.so.6")
    _M_MMAP_THRESHOLD = -3
    _libc.mallopt(_M_MMAP_THRESHOLD, 1 << 29)
except OSError:  # pragma: no cover
    pass

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


def _im2col_py(padded: np.ndarray, kh: int, kw: int, out_h: int, out_w: int,
               cols: np.ndarray) -> None:
    batch, cin = padded.shape[:2]
    shaped = cols.reshape(batch, out_h, out_w, cin, kh, kw)
    for i in range(kh):
        for j in range(kw):
            shaped[:, :, :, :, i, j] = padded[:, :, i:i + out_h, j:j + out_w].transpose(
                0, 2, 3, 1)


def _col2im_py(dcols: np.ndarray, dpad: np.ndarray, kh: int, kw: int,
               out_h: int, out_w: int) -> None:
    batch, cin = dpad.shape[:2]
    shaped = dcols.reshape(batch, out_h, out_w, cin, kh, kw)
    for i in range(kh):
        for j in range(kw):
            dpad[:, :, i:i + out_h, j:j + out_w] += shaped[:, :, :, :, i, j].transpose(
                0, 3, 1, 2)


if HAVE_NUMBA:
    from numba import prange

    @njit(cache=True, parallel=True)
    def _im2col_nb(padded, kh, kw, out_h, out_w, cols):  # pragma: no cover - jit
        batch, cin = padded.shape[0], padded.shape[1]
        for bi in prange(batch):
            for h in range(out_h):
                for w in range(out_w):
                    pos = (bi * out_h + h) * out_w + w
                    r = 0
                    for ci in range(cin):
                        for i in range(kh):
                            for j in range(kw):
                                cols[pos, r] = padded[bi, ci, h + i, w + j]
                                r += 1

    @njit(cache=True, parallel=True)
    def _col2im_nb(dcols, dpad, kh, kw, out_h, out_w):  # pragma: no cover - jit
        batch, cin = dpad.shape[0], dpad.shape[1]
        for bi in prange(batch):
            for h in range(out_h):
                for w in range(out_w):
                    pos = (bi * out_h + h) * out_w + w
                    r = 0
                    for ci in range(cin):
                        for i in range(kh):
                            for j in range(kw):
                                dpad[bi, ci, h + i, w + j] += dcols[pos, r]
                                r += 1

    @njit(cache=True)
    def _adam_nb(data, grad, m, v, beta1, beta2, eps, scale, inv_sqrt_bc2):
        # pragma: no cover - jit
        for i in range(data.size):
            g = grad[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            data[i] -= scale * m[i] / (np.sqrt(v[i]) * inv_sqrt_bc2 + eps)

    @njit(cache=True, parallel=True)
    def _dtanh_nb(grad, out, result):  # pragma: no cover - jit
        for i in prange(grad.size):
            result[i] = grad[i] * (1.0 - out[i] * out[i])

    @njit(cache=True)
    def _polyak_nb(dst, src, tau):  # pragma: no cover - jit
        for i in range(dst.size):
            dst[i] = (1.0 - tau) * dst[i] + tau * src[i]


def im2col(padded: np.ndarray, kh: int, kw: int, out_h: int, out_w: int,
           cols: np.ndarray) -> None:
    """Fill `cols` (B*out_h*out_w, Cin*kh*kw) with patches of `padded`."""
    if HAVE_NUMBA:
        _im2col_nb(padded, kh, kw, out_h, out_w, cols)
    else:
        _im2col_py(padded, kh, kw, out_h, out_w, cols)


def col2im_add(dcols: np.ndarray, dpad: np.ndarray, kh: int, kw: int,
               out_h: int, out_w: int) -> None:
    """Scatter-add patch gradients back onto the padded input gradient."""
    if HAVE_NUMBA:
        _col2im_nb(dcols, dpad, kh, kw, out_h, out_w)
    else:
        _col2im_py(dcols, dpad, kh, kw, out_h, out_w)


def adam_update(data: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
                beta1: float, beta2: float, eps: float, scale: float,
                inv_sqrt_bc2: float) -> None:
    """Fused in-place Adam update on flat views of one parameter tensor."""
    if HAVE_NUMBA:
        _adam_nb(data, grad, m, v, beta1, beta2, eps, scale, inv_sqrt_bc2)
    else:
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        data -= scale * m / (np.sqrt(v) * inv_sqrt_bc2 + eps)


def polyak(dst: np.ndarray, src: np.ndarray, tau: float) -> None:
    """dst <- (1 - tau) * dst + tau * src, fused in place."""
    if HAVE_NUMBA:
        _polyak_nb(dst, src, tau)
    else:
        dst *= 1.0 - tau
        dst += tau * src


def dtanh(grad: np.ndarray, out: np.ndarray) -> np.ndarray:
    """grad * (1 - out^2) without intermediate temporaries."""
    if HAVE_NUMBA and grad.size > 4096:
        result = np.empty_like(grad)
        _dtanh_nb(grad.reshape(-1), out.reshape(-1), result.reshape(-1))
        return result
    return grad * (1.0 - out ** 2)


class ConvWorkspace:
    """Reusable scratch buffers keyed by shape, owned by each conv layer.

    Buffers that outlive the forward call (the patch matrix is reused by the
    backward pass) rotate between two slots, so up to two forward passes per
    layer may be in flight before a backward pass consumes them.
    """

    ROTATING = ("cols",)

    def __init__(self):
        self._buffers: dict[tuple, np.ndarray] = {}
        self._turn: dict[tuple, int] = {}

    def get(self, key: str, shape: tuple[int, ...]) -> np.ndarray:
        slot = 0
        if key in self.ROTATING:
            turn_key = (key, shape)
            slot = self._turn.get(turn_key, 0)
            self._turn[turn_key] = 1 - slot
        buf_key = (key, shape, slot)
        buf = self._buffers.get(buf_key)
        if buf is None:
            buf = np.empty(shape, dtype=np.float64)
            self._buffers[buf_key] = buf
        return buf
