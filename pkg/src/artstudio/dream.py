"""Gradient-ascent image transformation over a trained network.

Two modes. Free hallucination climbs J = 1/2 * ||A||^2, the squared
activations of the chosen layer, so whatever the layer already responds to
gets amplified. Guided mode extracts feature patches from a guide image
once, matches every canvas patch to its best guide patch, and climbs either
J = sum_i <f_i, g_m(i)>            (dot_max)
or
J = -sum_i ||f_i - g_m(i)||^2      (dist_min),
re-matching every step. Updates are normalized-gradient pixel steps,
x <- clamp(x + step * dJ/dx / mean|dJ/dx|), with an optional seeded jitter
roll applied before the forward pass and undone afterwards.

Runs are organised as a coarse-to-fine octave pyramid: the accumulated
detail (canvas minus downscaled source) is upsampled and re-applied at each
finer scale. With jitter disabled the whole run is a pure function of the
recipe (minus seed) and the source image.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from . import artnet
from .errors import ValidationError
from .imageops import read_image, resize_bilinear
from .seeding import derive_seed
from .validation import check_image

MODES = ("free", "guided")
OBJECTIVES = ("dot_max", "dist_min")

ZERO_GRAD_EPS = 1e-12
MIN_OCTAVE_EXTENT = 16
MIN_SOURCE_EXTENT = 32


class DreamError(ValidationError):
    pass


@dataclass(frozen=True)
class DreamRecipe:
    """One stylization: model/guide refs plus the ascent hyperparameters.

    `iterations` may be 0, which makes the run an identity transform.
    """

    model: str | None = None
    mode: str = "free"
    guide: str | None = None
    layer_id: str = "L3"
    iterations: int = 10
    octaves: int = 1
    octave_scale: float = 1.4
    step_size: float = 1.5
    objective: str = "dot_max"
    patch_size: int = 1
    jitter: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise DreamError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.objective not in OBJECTIVES:
            raise DreamError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.iterations < 0:
            raise DreamError("iterations must be >= 0")
        if self.octaves < 1:
            raise DreamError("octaves must be >= 1")
        if self.octave_scale <= 1.0:
            raise DreamError("octave_scale must be > 1")
        if self.step_size < 0:
            raise DreamError("step_size must be >= 0")
        if self.patch_size < 1:
            raise DreamError("patch_size must be >= 1")
        if self.jitter < 0:
            raise DreamError("jitter must be >= 0")

    @classmethod
    def from_dict(cls, data: dict) -> "DreamRecipe":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise DreamError(f"unknown recipe keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "DreamRecipe":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise DreamError("recipe JSON must be an object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class GuideFeatures:
    """Non-overlapping feature patches of the guide at one layer, flattened
    to vectors of length channels * p^2, with their patch-grid origins."""

    layer_id: str
    patch_size: int
    patches: np.ndarray  # (M, D)
    origins: np.ndarray  # (M, 2) patch-grid (row, col)

    def __post_init__(self):
        if self.patches.ndim != 2 or len(self.patches) == 0:
            raise DreamError("guide features need at least one patch vector")


@dataclass(frozen=True)
class CanvasState:
    """The evolving pixel buffer plus step bookkeeping."""

    image: np.ndarray
    octave_index: int = 0
    iteration_index: int = 0
    skipped_steps: int = 0
    last_objective: float | None = None


def split_patches(fmap: np.ndarray, p: int):
    """Split a (C, H, W) map into flattened p x p patches; ragged edges drop."""
    c, h, w = fmap.shape
    nh, nw = h // p, w // p
    if nh == 0 or nw == 0:
        raise DreamError(f"feature map {h}x{w} smaller than one {p}x{p} patch")
    trimmed = fmap[:, : nh * p, : nw * p]
    blocks = trimmed.reshape(c, nh, p, nw, p).transpose(1, 3, 0, 2, 4)
    patches = np.ascontiguousarray(blocks.reshape(nh * nw, c * p * p))
    rows, cols = np.divmod(np.arange(nh * nw), nw)
    return patches, np.stack([rows, cols], axis=1)


def extract_guide_features(model, guide_image: np.ndarray, layer_id: str,
                           patch_size: int = 1) -> GuideFeatures:
    check_image(guide_image, "guide image")
    fmap = model.forward_to_layer(guide_image, layer_id)
    patches, origins = split_patches(fmap, patch_size)
    return GuideFeatures(layer_id, patch_size, patches, origins)


def match_patches(canvas_patches, guide: GuideFeatures | np.ndarray, objective: str) -> np.ndarray:
    """Best guide index per canvas patch; ties go to the smallest index."""
    if objective not in OBJECTIVES:
        raise DreamError(f"unknown objective {objective!r}")
    f = canvas_patches.patches if isinstance(canvas_patches, GuideFeatures) else canvas_patches
    g = guide.patches if isinstance(guide, GuideFeatures) else guide
    if f.ndim != 2 or g.ndim != 2 or f.shape[1] != g.shape[1]:
        raise DreamError(f"patch vector lengths differ: {f.shape} vs {g.shape}")
    f64 = f.astype(np.float64, copy=False)
    g64 = g.astype(np.float64, copy=False)
    if objective == "dot_max":
        return np.argmax(f64 @ g64.T, axis=1)
    d = (f64 * f64).sum(1)[:, None] - 2.0 * (f64 @ g64.T) + (g64 * g64).sum(1)[None, :]
    return np.argmin(d, axis=1)


def _feature_upstream(fmap: np.ndarray, guide: GuideFeatures, objective: str):
    """Patch-matched dJ/d(feature map) and the objective value J."""
    c, h, w = fmap.shape
    p = guide.patch_size
    patches, _ = split_patches(fmap, p)
    matched = guide.patches[match_patches(patches, guide, objective)]
    matched = matched.astype(fmap.dtype, copy=False)
    if objective == "dot_max":
        grad_patches = matched
        value = float(np.sum(patches.astype(np.float64) * matched))
    else:
        diff = patches - matched
        grad_patches = -2.0 * diff
        value = -float(np.sum(diff.astype(np.float64) ** 2))
    nh, nw = h // p, w // p
    upstream = np.zeros_like(fmap)
    blocks = grad_patches.reshape(nh, nw, c, p, p).transpose(2, 0, 3, 1, 4)
    upstream[:, : nh * p, : nw * p] = blocks.reshape(c, nh * p, nw * p)
    return upstream, value


def _jitter_for(recipe: DreamRecipe, state: CanvasState):
    if recipe.jitter == 0:
        return 0, 0
    rng = np.random.default_rng(
        derive_seed(recipe.seed, state.octave_index, state.iteration_index)
    )
    dy, dx = rng.integers(-recipe.jitter, recipe.jitter + 1, size=2)
    return int(dy), int(dx)


def _ascend(model, state: CanvasState, recipe: DreamRecipe, upstream_fn) -> CanvasState:
    dy, dx = _jitter_for(recipe, state)
    img = np.roll(state.image, (dy, dx), axis=(1, 2))
    fmap = model.forward_to_layer(img, recipe.layer_id)
    upstream, value = upstream_fn(fmap)
    grad = model.grad_wrt_input(img, recipe.layer_id, upstream)
    mean_abs = float(np.mean(np.abs(grad)))
    if mean_abs < ZERO_GRAD_EPS:
        return replace(
            state,
            iteration_index=state.iteration_index + 1,
            skipped_steps=state.skipped_steps + 1,
            last_objective=value,
        )
    img = img + grad * (state.image.dtype.type(recipe.step_size) / grad.dtype.type(mean_abs))
    img = np.clip(np.roll(img, (-dy, -dx), axis=(1, 2)), 0.0, 1.0)
    return replace(
        state,
        image=img.astype(state.image.dtype, copy=False),
        iteration_index=state.iteration_index + 1,
        last_objective=value,
    )


def free_step(model, state: CanvasState, recipe: DreamRecipe) -> CanvasState:
    """One ascent step on J = 1/2 ||A||^2 (upstream gradient = activations)."""

    def upstream_fn(fmap):
        return fmap, 0.5 * float(np.sum(fmap.astype(np.float64) ** 2))

    return _ascend(model, state, recipe, upstream_fn)


def guided_step(model, state: CanvasState, guide: GuideFeatures,
                recipe: DreamRecipe) -> CanvasState:
    """One ascent step on the patch-matched guided objective."""
    return _ascend(
        model, state, recipe,
        lambda fmap: _feature_upstream(fmap, guide, recipe.objective),
    )


def free_objective(model, image: np.ndarray, layer_id: str) -> float:
    fmap = model.forward_to_layer(image, layer_id)
    return 0.5 * float(np.sum(fmap.astype(np.float64) ** 2))


def guided_objective(model, image: np.ndarray, guide: GuideFeatures,
                     objective: str) -> float:
    fmap = model.forward_to_layer(image, guide.layer_id)
    return _feature_upstream(fmap, guide, objective)[1]


def _octave_extents(h: int, w: int, recipe: DreamRecipe, divisor: int):
    """Coarse-to-fine extent plan; intermediate octaves snap to the layer's
    pooling divisor, the native (finest) extents are used as-is."""

    def snap(v):
        return max(divisor, int(round(v / divisor)) * divisor)

    plan = []
    for o in range(recipe.octaves):
        factor = recipe.octave_scale ** (recipe.octaves - 1 - o)
        if o == recipe.octaves - 1:
            plan.append((h, w))
        else:
            plan.append((snap(h / factor), snap(w / factor)))
    if min(plan[0]) < MIN_OCTAVE_EXTENT:
        raise DreamError(
            f"image too small at coarsest octave: {plan[0][0]}x{plan[0][1]} < {MIN_OCTAVE_EXTENT}"
        )
    return plan


def resolve_model(recipe: DreamRecipe, model=None):
    if model is not None:
        return model
    if recipe.model is None:
        raise DreamError("recipe has no model reference and none was supplied")
    return artnet.load_weights(recipe.model)


def run_dream(recipe: DreamRecipe, source_image: np.ndarray, model=None,
              guide_image=None, guide_features: GuideFeatures | None = None,
              init_image: np.ndarray | None = None) -> np.ndarray:
    """Run the full octave pyramid; deterministic per (recipe, source).

    The canvas starts from the source image itself (override with
    `init_image` to start elsewhere, e.g. from noise).
    """
    check_image(source_image, "source image")
    _, h, w = source_image.shape
    if h < MIN_SOURCE_EXTENT or w < MIN_SOURCE_EXTENT:
        raise DreamError(f"source must be at least 32x32, got {h}x{w}")
    model = resolve_model(recipe, model)
    divisor = model.spec.layer_divisor(recipe.layer_id)
    if h % divisor or w % divisor:
        raise DreamError(
            f"source extents {h}x{w} not divisible by {divisor} required for {recipe.layer_id}"
        )

    guide = guide_features
    if recipe.mode == "guided" and guide is None:
        if guide_image is None:
            if recipe.guide is None:
                raise DreamError("guided recipe needs a guide image")
            guide_image = read_image(recipe.guide)
        guide = extract_guide_features(model, guide_image, recipe.layer_id,
                                       recipe.patch_size)

    base_source = np.clip(
        (source_image if init_image is None else check_image(init_image, "init image")),
        0.0, 1.0,
    ).astype(source_image.dtype)

    detail = None
    state = None
    for o, (th, tw) in enumerate(_octave_extents(h, w, recipe, divisor)):
        base = resize_bilinear(base_source, th, tw)
        if detail is None:
            canvas = base.copy()
        else:
            canvas = np.clip(base + resize_bilinear(detail, th, tw), 0.0, 1.0)
        state = CanvasState(canvas, octave_index=o,
                            skipped_steps=0 if state is None else state.skipped_steps)
        for _ in range(recipe.iterations):
            if recipe.mode == "free":
                state = free_step(model, state, recipe)
            else:
                state = guided_step(model, state, guide, recipe)
        detail = state.image - base
    return state.image
