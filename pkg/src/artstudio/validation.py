"""Input validation helpers used across the package.

Conventions: images and feature maps are channel-first float arrays
(C, H, W) with values meant to live in [0, 1] for displayable images;
stored video frames are (H, W, 3) uint8.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

FLOAT_DTYPES = (np.float32, np.float64)


def check_finite(arr: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf")
    return arr


def as_float_array(data, dtype=np.float32, name: str = "array") -> np.ndarray:
    """Coerce to a contiguous float array and reject non-finite values."""
    if dtype not in FLOAT_DTYPES:
        raise ValidationError(f"{name}: dtype must be float32 or float64, got {dtype}")
    arr = np.ascontiguousarray(data, dtype=dtype)
    return check_finite(arr, name)


def check_image(arr, name: str = "image", channels: int | None = 3) -> np.ndarray:
    """Validate a (C, H, W) float image; returns the array unchanged."""
    arr = np.asarray(arr)
    if arr.ndim != 3:
        raise ValidationError(f"{name}: expected (C, H, W), got shape {arr.shape}")
    if channels is not None and arr.shape[0] != channels:
        raise ValidationError(
            f"{name}: expected {channels} channels, got {arr.shape[0]}"
        )
    if arr.dtype not in FLOAT_DTYPES:
        raise ValidationError(f"{name}: expected float dtype, got {arr.dtype}")
    return check_finite(arr, name)


def check_unit_range(arr: np.ndarray, name: str = "image", tol: float = 1e-6) -> np.ndarray:
    lo, hi = float(arr.min()), float(arr.max())
    if lo < -tol or hi > 1.0 + tol:
        raise ValidationError(f"{name}: values outside [0, 1] (min={lo}, max={hi})")
    return arr


def check_frame(arr, name: str = "frame") -> np.ndarray:
    """Validate an (H, W, 3) uint8 video frame."""
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError(f"{name}: expected (H, W, 3), got shape {arr.shape}")
    if arr.dtype != np.uint8:
        raise ValidationError(f"{name}: expected uint8, got {arr.dtype}")
    return arr


def frame_to_image(frame: np.ndarray, dtype=np.float32) -> np.ndarray:
    """(H, W, 3) uint8 frame -> (3, H, W) float image in [0, 1]."""
    check_frame(frame)
    return (frame.astype(dtype) / dtype(255.0)).transpose(2, 0, 1)


def image_to_frame(image: np.ndarray) -> np.ndarray:
    """(3, H, W) float image in [0, 1] -> (H, W, 3) uint8 frame (round half up)."""
    check_image(image)
    scaled = np.clip(np.asarray(image, dtype=np.float64) * 255.0, 0.0, 255.0)
    return np.floor(scaled + 0.5).astype(np.uint8).transpose(1, 2, 0)
