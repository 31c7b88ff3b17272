"""Dense numeric kernels: matmul, 2-D convolution, 2x2 max pooling.

Tensors are plain ``numpy.ndarray`` values in row-major (C) layout, NCHW for
image batches. The kernels preserve the floating dtype of their inputs, so the
same code runs in float32 for training and in float64 inside gradient checks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

Tensor = np.ndarray
DTYPE = np.float32

# Above this many output elements the per-k loop beats the accumulate path.
_LOOP_MIN_OUTPUT = 2048
# Upper bound on the temporary used by the accumulate path.
_CHUNK_ELEMS = 1 << 22


def as_tensor(x, dtype=DTYPE) -> Tensor:
    """Return ``x`` as a contiguous array of ``dtype`` with rank 1 to 4."""
    arr = np.asarray(x, dtype=dtype)
    if not 1 <= arr.ndim <= 4:
        raise ShapeError(f"tensor rank must be 1-4, got shape {arr.shape}")
    if any(d < 1 for d in arr.shape):
        raise ShapeError(f"tensor extents must be positive, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


def _float_dtype(*arrays):
    dt = np.result_type(*arrays)
    return dt if np.issubdtype(dt, np.floating) else np.dtype(DTYPE)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with a fixed summation order.

    Every output element is accumulated as ``((0 + a[i,0]b[0,j]) + a[i,1]b[1,j]) + ...``
    in the working dtype, which makes the result bit-identical to a naive
    triple loop and independent of BLAS threading.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    dtype = _float_dtype(a, b)
    a = a.astype(dtype, copy=False)
    b = b.astype(dtype, copy=False)
    m, k = a.shape
    n = b.shape[1]
    if m * n >= _LOOP_MIN_OUTPUT:
        return _matmul_kloop(a, b)
    return _matmul_accumulate(a, b)


def _matmul_kloop(a, b):
    m, k = a.shape
    out = np.zeros((m, b.shape[1]), dtype=a.dtype)
    tmp = np.empty_like(out)
    for p in range(k):
        np.multiply(a[:, p, None], b[None, p, :], out=tmp)
        out += tmp
    return out


def _matmul_accumulate(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.empty((m, n), dtype=a.dtype)
    rows = max(1, _CHUNK_ELEMS // max(1, k * n))
    for i0 in range(0, m, rows):
        prod = a[i0:i0 + rows, :, None] * b[None, :, :]
        # add.accumulate is strictly sequential along the axis
        out[i0:i0 + rows] = np.add.accumulate(prod, axis=1)[:, -1, :]
    # the loop path starts from +0.0; normalise a -0.0 result to match it
    out += 0.0
    return out


@dataclass(frozen=True)
class ConvGeometry:
    in_channels: int
    out_channels: int
    kernel_h: int = 3
    kernel_w: int = 3
    stride: int = 1
    padding: int = 1

    def __post_init__(self):
        for name in ("in_channels", "out_channels", "kernel_h", "kernel_w", "stride"):
            if getattr(self, name) < 1:
                raise ShapeError(f"ConvGeometry.{name} must be >= 1")
        if self.padding < 0:
            raise ShapeError("ConvGeometry.padding must be >= 0")

    def output_size(self, h: int, w: int) -> tuple[int, int]:
        oh = (h + 2 * self.padding - self.kernel_h) // self.stride + 1
        ow = (w + 2 * self.padding - self.kernel_w) // self.stride + 1
        if h + 2 * self.padding < self.kernel_h or w + 2 * self.padding < self.kernel_w:
            raise ShapeError(f"kernel {self.kernel_h}x{self.kernel_w} larger than padded input {h}x{w}")
        return oh, ow

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels, self.kernel_h, self.kernel_w)


def _check_conv(x, weights, bias, geom):
    if x.ndim != 4:
        raise ShapeError(f"conv2d: input must be NCHW, got shape {x.shape}")
    if x.shape[1] != geom.in_channels:
        raise ShapeError(f"conv2d: input has {x.shape[1]} channels, geometry expects {geom.in_channels}")
    if weights.shape != geom.weight_shape:
        raise ShapeError(f"conv2d: weights {weights.shape} do not match geometry {geom.weight_shape}")
    if bias is not None and bias.shape != (geom.out_channels,):
        raise ShapeError(f"conv2d: bias {bias.shape} does not match {geom.out_channels} filters")
    return geom.output_size(x.shape[2], x.shape[3])


def im2col(x: Tensor, geom: ConvGeometry) -> Tensor:
    """Unroll patches into rows of shape ``(N*OH*OW, C*kh*kw)``."""
    n, c, h, w = x.shape
    oh, ow = geom.output_size(h, w)
    kh, kw, s, p = geom.kernel_h, geom.kernel_w, geom.stride, geom.padding
    img = np.pad(x, [(0, 0), (0, 0), (p, p), (p, p)]) if p else x
    col = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for y in range(kh):
        y_max = y + s * oh
        for z in range(kw):
            z_max = z + s * ow
            col[:, :, y, z, :, :] = img[:, :, y:y_max:s, z:z_max:s]
    return col.transpose(0, 4, 5, 1, 2, 3).reshape(n * oh * ow, -1)


def col2im(col: Tensor, input_shape, geom: ConvGeometry) -> Tensor:
    """Adjoint of :func:`im2col`: scatter-add rows back into an NCHW array."""
    n, c, h, w = input_shape
    oh, ow = geom.output_size(h, w)
    kh, kw, s, p = geom.kernel_h, geom.kernel_w, geom.stride, geom.padding
    col = col.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    img = np.zeros((n, c, h + 2 * p + s - 1, w + 2 * p + s - 1), dtype=col.dtype)
    for y in range(kh):
        y_max = y + s * oh
        for z in range(kw):
            z_max = z + s * ow
            img[:, :, y:y_max:s, z:z_max:s] += col[:, :, y, z, :, :]
    return np.ascontiguousarray(img[:, :, p:p + h, p:p + w])


def conv2d_forward(x: Tensor, weights: Tensor, bias: Tensor, geom: ConvGeometry) -> Tensor:
    """Zero-padded cross-correlation via im2col + :func:`matmul`."""
    oh, ow = _check_conv(x, weights, bias, geom)
    n = x.shape[0]
    cols = im2col(x, geom)
    out = matmul(cols, weights.reshape(geom.out_channels, -1).T)
    out += bias
    return np.ascontiguousarray(out.reshape(n, oh, ow, -1).transpose(0, 3, 1, 2))


def conv2d_backward(grad_out: Tensor, x: Tensor, weights: Tensor, geom: ConvGeometry):
    """Return ``(grad_input, grad_weights, grad_bias)`` for :func:`conv2d_forward`."""
    oh, ow = _check_conv(x, weights, None, geom)
    expected = (x.shape[0], geom.out_channels, oh, ow)
    if grad_out.shape != expected:
        raise ShapeError(f"conv2d_backward: grad_out {grad_out.shape}, expected {expected}")
    f = geom.out_channels
    g2 = grad_out.transpose(0, 2, 3, 1).reshape(-1, f)
    cols = im2col(x, geom)
    grad_w = matmul(cols.T, g2).T.reshape(weights.shape)
    grad_b = g2.sum(axis=0)
    grad_cols = matmul(g2, weights.reshape(f, -1))
    grad_x = col2im(grad_cols, x.shape, geom)
    return grad_x, np.ascontiguousarray(grad_w), grad_b


def conv2d_forward_naive(x: Tensor, weights: Tensor, bias: Tensor, geom: ConvGeometry) -> Tensor:
    """Seven nested loops; the reference the fast path is checked against."""
    oh, ow = _check_conv(x, weights, bias, geom)
    n, c, h, w = x.shape
    s, p = geom.stride, geom.padding
    out = np.zeros((n, geom.out_channels, oh, ow), dtype=x.dtype)
    for b in range(n):
        for f in range(geom.out_channels):
            for i in range(oh):
                for j in range(ow):
                    acc = float(bias[f])
                    for ch in range(c):
                        for u in range(geom.kernel_h):
                            for v in range(geom.kernel_w):
                                r = i * s + u - p
                                q = j * s + v - p
                                if 0 <= r < h and 0 <= q < w:
                                    acc += float(x[b, ch, r, q]) * float(weights[f, ch, u, v])
                    out[b, f, i, j] = acc
    return out


def conv2d_backward_naive(grad_out: Tensor, x: Tensor, weights: Tensor, geom: ConvGeometry):
    oh, ow = _check_conv(x, weights, None, geom)
    n, c, h, w = x.shape
    s, p = geom.stride, geom.padding
    gx = np.zeros(x.shape, dtype=np.float64)
    gw = np.zeros(weights.shape, dtype=np.float64)
    gb = np.zeros(geom.out_channels, dtype=np.float64)
    for b in range(n):
        for f in range(geom.out_channels):
            for i in range(oh):
                for j in range(ow):
                    g = float(grad_out[b, f, i, j])
                    gb[f] += g
                    for ch in range(c):
                        for u in range(geom.kernel_h):
                            for v in range(geom.kernel_w):
                                r = i * s + u - p
                                q = j * s + v - p
                                if 0 <= r < h and 0 <= q < w:
                                    gx[b, ch, r, q] += g * float(weights[f, ch, u, v])
                                    gw[f, ch, u, v] += g * float(x[b, ch, r, q])
    dt = x.dtype
    return gx.astype(dt), gw.astype(dt), gb.astype(dt)


def maxpool2x2_forward(x: Tensor):
    """2x2/stride-2 max pooling.

    Returns ``(output, argmax)`` where ``argmax`` holds the winning position
    0..3 inside each window in row-major order; ties go to the first one.
    """
    if x.ndim != 4:
        raise ShapeError(f"maxpool2x2: input must be NCHW, got shape {x.shape}")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2x2: spatial dims must be even, got {h}x{w}")
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool2x2_backward(grad_out: Tensor, argmax: np.ndarray) -> Tensor:
    if grad_out.shape != argmax.shape:
        raise ShapeError(f"maxpool2x2_backward: grad {grad_out.shape} vs argmax {argmax.shape}")
    n, c, h2, w2 = grad_out.shape
    win = np.zeros((n, c, h2, w2, 4), dtype=grad_out.dtype)
    np.put_along_axis(win, argmax[..., None], grad_out[..., None], axis=-1)
    grad = win.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2 * 2, w2 * 2)
    return np.ascontiguousarray(grad)
