"""Stroke-based rendering applied after dreaming: palette extraction,
structure-tensor orientation field, particle stroke placement, compositing.

The renderer is a two-pass (by default) particle system. Coarse strokes lay
down the bulk of the canvas; fine passes spawn only where the canvas still
differs from the source by more than an error threshold. Strokes follow the
local orientation field, take the nearest palette color of the pixel under
them, and are rasterized in draw order as anti-aliased rounded rectangles,
so interior stroke pixels are exactly palette colors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, ValidationError
from .imageops import SOBEL_X, SOBEL_Y, _correlate2d_reflect, box_mean, gaussian_blur, luminance
from .validation import check_image

KMEANS_MAX_ITER = 50
KMEANS_MOVE_TOL = 1e-4


class PainterlyError(ValidationError):
    pass


@dataclass(frozen=True)
class Palette:
    colors: np.ndarray  # (n, 3) in [0, 1], sorted by luminance
    seed: int
    padded: bool = False

    def __post_init__(self):
        if self.colors.ndim != 2 or self.colors.shape[1] != 3 or len(self.colors) == 0:
            raise PainterlyError(f"palette colors must be (n, 3), got {self.colors.shape}")

    def __len__(self):
        return len(self.colors)

    def nearest_index(self, rgb: np.ndarray) -> np.ndarray:
        """Index of the closest palette color for each (..., 3) pixel."""
        flat = rgb.reshape(-1, 3)
        d = ((flat[:, None, :] - self.colors[None, :, :]) ** 2).sum(-1)
        return np.argmin(d, axis=1).reshape(rgb.shape[:-1])


@dataclass(frozen=True)
class OrientationField:
    theta: np.ndarray      # (H, W), radians in [0, pi)
    coherence: np.ndarray  # (H, W), 0 flat .. 1 strongly oriented


@dataclass(frozen=True)
class Stroke:
    x: float
    y: float
    angle: float
    length: float
    width: float
    color_index: int
    pass_index: int
    order: int


@dataclass(frozen=True)
class StrokeSet:
    strokes: tuple
    palette: Palette
    extent: tuple  # (h, w)

    def __len__(self):
        return len(self.strokes)


@dataclass(frozen=True)
class RenderParams:
    """Defaults are desk-calibrated so that two passes cover >= 95% of pixels."""

    k: int = 12
    passes: int = 2
    lengths: tuple = ((26.0, 40.0), (8.0, 14.0))
    widths: tuple = ((13.0, 20.0), (3.5, 6.0))
    density: tuple = (8.0, 24.0)  # strokes per 1000 px^2 per pass
    position_noise: float = 1.0
    angle_noise: float = 0.25
    error_threshold: float = 0.08
    seed: int = 0

    def __post_init__(self):
        if self.passes < 1:
            raise PainterlyError("passes must be >= 1")
        for name in ("lengths", "widths", "density"):
            if len(getattr(self, name)) != self.passes:
                raise PainterlyError(f"{name} must have one entry per pass")
        for lo, hi in (*self.lengths, *self.widths):
            if lo <= 0 or hi < lo:
                raise PainterlyError(f"bad stroke size range ({lo}, {hi})")
        if any(d < 0 for d in self.density):
            raise PainterlyError("density must be >= 0")
        if self.position_noise < 0 or self.angle_noise < 0:
            raise PainterlyError("noise amplitudes must be >= 0")


# -- palette ---------------------------------------------------------------


def extract_palette(image: np.ndarray, k: int, seed: int) -> Palette:
    """k-means (k-means++ seeding) over pixel RGB; centroids sorted by luma.

    An image with fewer than k distinct colors yields just those colors with
    the `padded` flag set.
    """
    check_image(image)
    if not 2 <= k <= 64:
        raise PainterlyError(f"k must be in 2..64, got {k}")
    pixels = image.reshape(3, -1).T.astype(np.float64)
    distinct = np.unique(pixels, axis=0)
    if len(distinct) <= k:
        return Palette(_sort_by_luma(distinct), seed, padded=len(distinct) < k)

    rng = np.random.default_rng(seed)
    centroids = np.empty((k, 3))
    centroids[0] = pixels[int(rng.integers(len(pixels)))]
    d2 = ((pixels - centroids[0]) ** 2).sum(1)
    for j in range(1, k):
        probs = d2 / d2.sum()
        centroids[j] = pixels[int(rng.choice(len(pixels), p=probs))]
        d2 = np.minimum(d2, ((pixels - centroids[j]) ** 2).sum(1))

    for _ in range(KMEANS_MAX_ITER):
        dists = ((pixels[:, None, :] - centroids[None, :, :]) ** 2).sum(-1)
        assign = np.argmin(dists, axis=1)
        moved = 0.0
        new_centroids = centroids.copy()
        for j in range(k):
            members = pixels[assign == j]
            if len(members) == 0:
                far = int(np.argmax(dists[np.arange(len(pixels)), assign]))
                new_centroids[j] = pixels[far]
            else:
                new_centroids[j] = members.mean(axis=0)
            moved = max(moved, float(np.linalg.norm(new_centroids[j] - centroids[j])))
        centroids = new_centroids
        if moved < KMEANS_MOVE_TOL:
            break

    centroids = np.unique(centroids, axis=0)
    return Palette(_sort_by_luma(centroids), seed, padded=len(centroids) < k)


def _sort_by_luma(colors: np.ndarray) -> np.ndarray:
    luma = colors @ np.array([0.2126, 0.7152, 0.0722])
    return np.ascontiguousarray(colors[np.argsort(luma, kind="stable")])


# -- orientation -------------------------------------------------------------


def orientation_field(image: np.ndarray, sigma: float = 2.0) -> OrientationField:
    """Structure-tensor orientation: 3x3 Sobel gradients, Gaussian-smoothed
    tensor, theta perpendicular to the dominant gradient direction."""
    check_image(image)
    gray = luminance(image.astype(np.float64))
    gx = _correlate2d_reflect(gray, SOBEL_X)
    gy = _correlate2d_reflect(gray, SOBEL_Y)
    jxx = gaussian_blur(gx * gx, sigma)
    jyy = gaussian_blur(gy * gy, sigma)
    jxy = gaussian_blur(gx * gy, sigma)

    trace = jxx + jyy
    disc = np.sqrt(((jxx - jyy) / 2.0) ** 2 + jxy ** 2)
    flat = trace < 1e-12
    with np.errstate(invalid="ignore", divide="ignore"):
        coherence = np.where(flat, 0.0, 2.0 * disc / trace)
    coherence = np.clip(coherence, 0.0, 1.0)

    grad_dir = 0.5 * np.arctan2(2.0 * jxy, jxx - jyy)
    theta = np.mod(grad_dir + np.pi / 2.0, np.pi)
    theta = np.where(flat, 0.0, theta)
    return OrientationField(theta, coherence)


# -- placement ---------------------------------------------------------------


def place_strokes(image: np.ndarray, palette: Palette, field: OrientationField,
                  params: RenderParams, background=None) -> StrokeSet:
    """Spawn floor(density * area / 1000) particles per pass; fine passes keep
    only particles where the 5x5 mean |canvas - source| exceeds the threshold.
    Deterministic per (inputs, params, seed)."""
    check_image(image)
    if len(palette) == 0:
        raise PainterlyError("empty palette")
    _, h, w = image.shape
    if field.theta.shape != (h, w):
        raise PainterlyError("orientation field extent does not match image")

    rng = np.random.default_rng(params.seed)
    canvas = _background_canvas(background, h, w)
    source64 = image.astype(np.float64)
    strokes = []
    order = 0
    for pass_i in range(params.passes):
        # spawn over a margin of half a stroke so the nominal density holds
        # all the way to the border; the count scales with the spawn region
        margin = params.lengths[pass_i][1] / 2.0
        span = np.array([w + 2 * margin, h + 2 * margin])
        n = int(math.floor(params.density[pass_i] * (span[0] * span[1]) / 1000.0))
        if n == 0:
            continue
        pos = rng.uniform(0.0, 1.0, size=(n, 2)) * span - margin
        pos += params.position_noise * rng.standard_normal((n, 2))
        dangle = params.angle_noise * rng.standard_normal(n)
        lengths = rng.uniform(*params.lengths[pass_i], size=n)
        widths = np.minimum(rng.uniform(*params.widths[pass_i], size=n), lengths)

        xi = np.clip(pos[:, 0].astype(int), 0, w - 1)
        yi = np.clip(pos[:, 1].astype(int), 0, h - 1)
        if pass_i > 0:
            err = box_mean(np.mean(np.abs(canvas - source64), axis=0), 5)
            keep = err[yi, xi] > params.error_threshold
        else:
            keep = np.ones(n, dtype=bool)

        colors = palette.nearest_index(source64[:, yi, xi].T)
        pass_strokes = []
        for i in range(n):
            if not keep[i]:
                continue
            stroke = Stroke(
                x=float(pos[i, 0]), y=float(pos[i, 1]),
                angle=float(np.mod(field.theta[yi[i], xi[i]] + dangle[i], np.pi)),
                length=float(lengths[i]), width=float(widths[i]),
                color_index=int(colors[i]), pass_index=pass_i, order=order,
            )
            pass_strokes.append(stroke)
            order += 1
        strokes.extend(pass_strokes)
        if pass_i + 1 < params.passes:
            for stroke in pass_strokes:
                _stamp(canvas, stroke, palette)
    return StrokeSet(tuple(strokes), palette, (h, w))


def _background_canvas(background, h: int, w: int) -> np.ndarray:
    if background is None:
        return np.full((3, h, w), 0.5, dtype=np.float64)
    if np.isscalar(background):
        return np.full((3, h, w), float(background), dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    if background.shape != (3, h, w):
        raise PainterlyError(f"background shape {background.shape} != (3, {h}, {w})")
    return background.copy()


# -- compositing ----------------------------------------------------------------


def _stroke_alpha(stroke: Stroke, h: int, w: int):
    """Anti-aliased rounded-rectangle coverage inside the bounding box."""
    reach = stroke.length / 2.0 + 1.5
    x0 = max(0, int(math.floor(stroke.x - reach)))
    x1 = min(w - 1, int(math.ceil(stroke.x + reach)))
    y0 = max(0, int(math.floor(stroke.y - reach)))
    y1 = min(h - 1, int(math.ceil(stroke.y + reach)))
    if x0 > x1 or y0 > y1:
        return None
    ys = np.arange(y0, y1 + 1, dtype=np.float64)[:, None] - stroke.y
    xs = np.arange(x0, x1 + 1, dtype=np.float64)[None, :] - stroke.x
    c, s = math.cos(stroke.angle), math.sin(stroke.angle)
    # screen y grows downward; angle is measured counter-clockwise in x/y
    along = xs * c + ys * s
    across = -xs * s + ys * c
    half_core = max(stroke.length - stroke.width, 0.0) / 2.0
    t = np.clip(along, -half_core, half_core)
    dist = np.hypot(along - t, across)
    alpha = np.clip(0.5 - (dist - stroke.width / 2.0), 0.0, 1.0)
    return (slice(y0, y1 + 1), slice(x0, x1 + 1)), alpha


def _stamp(canvas: np.ndarray, stroke: Stroke, palette: Palette):
    hit = _stroke_alpha(stroke, canvas.shape[1], canvas.shape[2])
    if hit is None:
        return
    (ys, xs), alpha = hit
    color = palette.colors[stroke.color_index][:, None, None]
    canvas[:, ys, xs] = alpha * color + (1.0 - alpha) * canvas[:, ys, xs]


def composite(stroke_set: StrokeSet, extent=None, background=None) -> np.ndarray:
    """Rasterize strokes in draw order (painter's algorithm); output in [0, 1]."""
    h, w = extent if extent is not None else stroke_set.extent
    canvas = _background_canvas(background, h, w)
    for stroke in sorted(stroke_set.strokes, key=lambda s: (s.pass_index, s.order)):
        _stamp(canvas, stroke, stroke_set.palette)
    return np.clip(canvas, 0.0, 1.0).astype(np.float32)


def coverage(stroke_set: StrokeSet, extent=None) -> float:
    """Fraction of pixels whose centre is inside at least one stroke."""
    h, w = extent if extent is not None else stroke_set.extent
    covered = np.zeros((h, w), dtype=bool)
    for stroke in stroke_set.strokes:
        hit = _stroke_alpha(stroke, h, w)
        if hit is not None:
            (ys, xs), alpha = hit
            covered[ys, xs] |= alpha >= 0.5
    return float(covered.mean())


def render(image: np.ndarray, params: RenderParams, background=None,
           return_strokes: bool = False):
    """Full painterly pass: palette -> orientation field -> strokes -> composite."""
    palette = extract_palette(image, params.k, params.seed)
    field = orientation_field(image)
    strokes = place_strokes(image, palette, field, params, background=background)
    out = composite(strokes, background=background)
    if return_strokes:
        return out, strokes
    return out


# -- stroke CSV ---------------------------------------------------------------

STROKE_CSV_HEADER = ["pass", "order", "x", "y", "angle", "length", "width", "palette_index"]


def strokes_to_csv(stroke_set: StrokeSet, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(STROKE_CSV_HEADER)
        for s in stroke_set.strokes:
            writer.writerow([s.pass_index, s.order, f"{s.x:.4f}", f"{s.y:.4f}",
                             f"{s.angle:.6f}", f"{s.length:.4f}", f"{s.width:.4f}",
                             s.color_index])


def strokes_from_csv(path, palette: Palette, extent) -> StrokeSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != STROKE_CSV_HEADER:
            raise DataFormatError(f"bad stroke CSV header: {header}")
        strokes = []
        for row in reader:
            if not row:
                continue
            strokes.append(Stroke(
                x=float(row[2]), y=float(row[3]), angle=float(row[4]),
                length=float(row[5]), width=float(row[6]),
                color_index=int(row[7]), pass_index=int(row[0]), order=int(row[1]),
            ))
    return StrokeSet(tuple(strokes), palette, extent)
