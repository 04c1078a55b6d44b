"""Small self-contained raster helpers shared by tiling, octaves and strokes."""

from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resample a (C, H, W) image with half-pixel-centre bilinear weights."""
    if out_h < 1 or out_w < 1:
        raise ValidationError(f"bad target extents {out_h}x{out_w}")
    c, h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()

    def axis_weights(in_n, out_n):
        pos = (np.arange(out_n, dtype=np.float64) + 0.5) * (in_n / out_n) - 0.5
        pos = np.clip(pos, 0.0, in_n - 1.0)
        i0 = np.floor(pos).astype(np.int64)
        i1 = np.minimum(i0 + 1, in_n - 1)
        frac = pos - i0
        return i0, i1, frac

    y0, y1, fy = axis_weights(h, out_h)
    x0, x1, fx = axis_weights(w, out_w)
    fy = fy.astype(img.dtype)[None, :, None]
    fx = fx.astype(img.dtype)[None, None, :]

    rows0 = img[:, y0, :]
    rows1 = img[:, y1, :]
    top = rows0[:, :, x0] * (1 - fx) + rows0[:, :, x1] * fx
    bot = rows1[:, :, x0] * (1 - fx) + rows1[:, :, x1] * fx
    return np.ascontiguousarray(top * (1 - fy) + bot * fy)


def _correlate2d_reflect(gray: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Dense 2-D correlation with reflect padding; kernel extents odd."""
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    padded = np.pad(gray, ((ph, ph), (pw, pw)), mode="reflect")
    out = np.zeros_like(gray, dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            k = kernel[i, j]
            if k != 0.0:
                out += k * padded[i:i + gray.shape[0], j:j + gray.shape[1]]
    return out


SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
SOBEL_Y = SOBEL_X.T


def gaussian_blur(gray: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian with radius ceil(3*sigma) and reflect padding."""
    if sigma <= 0:
        return gray.astype(np.float64, copy=True)
    radius = int(math.ceil(3.0 * sigma))
    taps = np.exp(-0.5 * (np.arange(-radius, radius + 1) / sigma) ** 2)
    taps /= taps.sum()
    out = _correlate2d_reflect(gray, taps[:, None])
    return _correlate2d_reflect(out, taps[None, :])


def box_mean(gray: np.ndarray, size: int) -> np.ndarray:
    """Mean over a size x size window (odd size), reflect padding."""
    if size % 2 == 0:
        raise ValidationError(f"box size must be odd, got {size}")
    kernel = np.full((size, size), 1.0 / (size * size))
    return _correlate2d_reflect(gray, kernel)


def luminance(image_chw: np.ndarray) -> np.ndarray:
    """Rec.709 luma of a (3, H, W) image."""
    r, g, b = image_chw[0], image_chw[1], image_chw[2]
    return 0.2126 * r + 0.7152 * g + 0.0722 * b


def read_image(path) -> np.ndarray:
    """Load an image file as a (3, H, W) float32 array in [0, 1]."""
    from PIL import Image

    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.float32)
    return np.ascontiguousarray(rgb.transpose(2, 0, 1) / np.float32(255.0))


def write_image(path, image_chw: np.ndarray) -> None:
    """Save a (3, H, W) float image in [0, 1] as 8-bit PNG (round half up)."""
    from PIL import Image

    scaled = np.clip(np.asarray(image_chw, dtype=np.float64) * 255.0, 0.0, 255.0)
    arr = np.floor(scaled + 0.5).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(arr, mode="RGB").save(path)
