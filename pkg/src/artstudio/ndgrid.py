"""Dense tensor kernels: 2-D convolution, ReLU and 2x2 max-pool, with exact
vector-Jacobian products for each.

All kernels are pure functions over channel-first arrays. Images and feature
maps are (C, H, W); the batched variants used by training take (N, C, H, W).
float32 is the production dtype; every kernel also runs in float64, which is
what the finite-difference gradient checks use. Convolution is
cross-correlation (no kernel flip). Max-pool ties break to the smallest
row-major index inside the window so gradients are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ValidationError
from .validation import FLOAT_DTYPES


class GridError(ValidationError):
    """Shape mismatch, non-exact output size, or non-finite values."""


def check_finite(arr: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise GridError(f"{name} contains NaN or Inf")
    return arr


def tensor(data, dtype=np.float32) -> np.ndarray:
    """Build a dense float tensor, rejecting NaN/Inf at construction."""
    if dtype not in FLOAT_DTYPES:
        raise GridError(f"dtype must be float32 or float64, got {dtype}")
    return check_finite(np.ascontiguousarray(data, dtype=dtype), "tensor")


@dataclass(frozen=True)
class KernelParams:
    """Convolution parameters: weights (out_ch, in_ch, kh, kw), bias (out_ch,)."""

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights)
        b = np.asarray(self.bias)
        if w.ndim != 4:
            raise GridError(f"weights must be rank 4, got shape {w.shape}")
        out_ch, _, kh, kw = w.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise GridError(f"kernel extents must be odd, got {kh}x{kw}")
        if b.shape != (out_ch,):
            raise GridError(f"bias shape {b.shape} does not match out_ch={out_ch}")
        if self.stride < 1:
            raise GridError(f"stride must be positive, got {self.stride}")
        if self.padding < 0:
            raise GridError(f"padding must be non-negative, got {self.padding}")
        check_finite(w, "weights")
        check_finite(b, "bias")

    def astype(self, dtype) -> "KernelParams":
        return KernelParams(
            self.weights.astype(dtype), self.bias.astype(dtype),
            self.stride, self.padding,
        )


def conv_output_hw(h: int, w: int, params: KernelParams) -> tuple[int, int]:
    """Output extents; raises unless (extent + 2p - k) divides the stride exactly."""
    _, _, kh, kw = params.weights.shape
    s, p = params.stride, params.padding
    for extent, k in ((h, kh), (w, kw)):
        if extent + 2 * p < k:
            raise GridError(f"input extent {extent} smaller than kernel {k} after padding")
        if (extent + 2 * p - k) % s != 0:
            raise GridError(
                f"non-exact output size: ({extent} + 2*{p} - {k}) not divisible by stride {s}"
            )
    return (h + 2 * p - kh) // s + 1, (w + 2 * p - kw) // s + 1


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(N, C, Hp, Wp) padded input -> (N*oh*ow, C*kh*kw) patch matrix."""
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride, :, :]
    n, c, oh, ow = windows.shape[:4]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols)


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def conv2d_nchw(x: np.ndarray, params: KernelParams) -> np.ndarray:
    """Batched cross-correlation on (N, C, H, W)."""
    n, c, h, w = x.shape
    out_ch, in_ch, kh, kw = params.weights.shape
    if c != in_ch:
        raise GridError(f"input has {c} channels, kernel expects {in_ch}")
    oh, ow = conv_output_hw(h, w, params)
    cols = _im2col(_pad(x, params.padding), kh, kw, params.stride)
    wmat = params.weights.reshape(out_ch, -1).astype(cols.dtype, copy=False)
    out = cols @ wmat.T + params.bias.astype(cols.dtype, copy=False)
    out = out.reshape(n, oh, ow, out_ch).transpose(0, 3, 1, 2)
    return check_finite(np.ascontiguousarray(out), "conv2d output")


def conv2d_backward_nchw(x: np.ndarray, params: KernelParams, upstream: np.ndarray):
    """Returns (d_input, d_weights, d_bias) for the batched forward pass."""
    n, c, h, w = x.shape
    out_ch, in_ch, kh, kw = params.weights.shape
    oh, ow = conv_output_hw(h, w, params)
    if upstream.shape != (n, out_ch, oh, ow):
        raise GridError(
            f"upstream shape {upstream.shape} != forward output {(n, out_ch, oh, ow)}"
        )
    s, p = params.stride, params.padding
    cols = _im2col(_pad(x, p), kh, kw, s)
    u2 = upstream.transpose(0, 2, 3, 1).reshape(n * oh * ow, out_ch)
    u2 = np.ascontiguousarray(u2)

    d_weights = (u2.T @ cols).reshape(out_ch, in_ch, kh, kw)
    d_bias = u2.sum(axis=0)

    wmat = params.weights.reshape(out_ch, -1).astype(u2.dtype, copy=False)
    dcols = (u2 @ wmat).reshape(n, oh, ow, in_ch, kh, kw)
    dcols = dcols.transpose(0, 3, 4, 5, 1, 2)  # (N, C, kh, kw, oh, ow)

    dxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=u2.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + oh * s:s, j:j + ow * s:s] += dcols[:, :, i, j]
    d_input = dxp[:, :, p:p + h, p:p + w] if p else dxp
    return (
        check_finite(np.ascontiguousarray(d_input), "conv2d input grad"),
        check_finite(d_weights, "conv2d weight grad"),
        check_finite(d_bias, "conv2d bias grad"),
    )


def conv2d(x: np.ndarray, params: KernelParams) -> np.ndarray:
    """Cross-correlate a single (C, H, W) image."""
    _check_chw(x)
    return conv2d_nchw(x[None], params)[0]


def conv2d_backward(x: np.ndarray, params: KernelParams, upstream: np.ndarray):
    _check_chw(x)
    d_input, d_w, d_b = conv2d_backward_nchw(x[None], params, upstream[None])
    return d_input[0], d_w, d_b


def relu(x: np.ndarray) -> np.ndarray:
    check_finite(x, "relu input")
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    if upstream.shape != x.shape:
        raise GridError(f"upstream shape {upstream.shape} != input {x.shape}")
    return check_finite(upstream * (x > 0), "relu input grad")


def maxpool2_nchw(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise GridError(f"maxpool2 requires even extents, got {h}x{w}")
    xr = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    xr = xr.reshape(n, c, h // 2, w // 2, 4)
    idx = np.argmax(xr, axis=-1)  # first max = smallest row-major index
    out = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
    return check_finite(np.ascontiguousarray(out), "maxpool2 output"), idx


def maxpool2_backward_nchw(input_shape, idx: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    n, c, h, w = input_shape
    if upstream.shape != (n, c, h // 2, w // 2):
        raise GridError(
            f"upstream shape {upstream.shape} != pooled output {(n, c, h // 2, w // 2)}"
        )
    d4 = np.zeros((n, c, h // 2, w // 2, 4), dtype=upstream.dtype)
    np.put_along_axis(d4, idx[..., None], upstream[..., None], axis=-1)
    d = d4.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(d.reshape(n, c, h, w))


def maxpool2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 max-pool of a (C, H, W) map; also returns the per-window argmax
    (0..3, row-major inside the window, so 3 means the bottom-right cell)."""
    _check_chw(x)
    out, idx = maxpool2_nchw(x[None])
    return out[0], idx[0]


def maxpool2_backward(input_shape, idx: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    if len(input_shape) != 3:
        raise GridError(f"expected (C, H, W) input shape, got {input_shape}")
    return maxpool2_backward_nchw((1, *input_shape), idx[None], upstream[None])[0]


def backward(op_kind: str, saved: dict, upstream: np.ndarray):
    """Generic reverse dispatcher over the fixed layer vocabulary.

    saved state per op:
      conv2d:   {"input", "params"} -> (d_input, d_weights, d_bias)
      relu:     {"input"}           -> d_input
      maxpool2: {"input_shape", "argmax"} -> d_input
    """
    try:
        if op_kind == "conv2d":
            return conv2d_backward(saved["input"], saved["params"], upstream)
        if op_kind == "relu":
            return relu_backward(saved["input"], upstream)
        if op_kind == "maxpool2":
            return maxpool2_backward(saved["input_shape"], saved["argmax"], upstream)
    except KeyError as exc:
        raise GridError(f"missing saved state {exc} for op {op_kind!r}") from None
    raise GridError(f"unknown op kind {op_kind!r}")


def _check_chw(x: np.ndarray):
    if np.asarray(x).ndim != 3:
        raise GridError(f"expected a (C, H, W) tensor, got shape {np.shape(x)}")
