"""Frame-sequence I/O, playback retiming, and per-frame stylization.

Sequences are directories of zero-padded PNG frames plus a `sequence.json`
manifest carrying the fps (as an exact rational), frame count, cumulative
retime factor and the stylization recipe hash. Retiming scales presentation
timestamps and duplicates frames (nearest previous frame), never
synthesizing pixels. Stylization maps every frame independently through the
dream engine and the painterly renderer with per-frame derived seeds, so
frames can be processed in any order or in parallel with bit-identical
results.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

from .dream import DreamRecipe, extract_guide_features, resolve_model, run_dream
from .errors import DataFormatError, StudioError, ValidationError
from .imageops import read_image
from .painterly import RenderParams, render
from .seeding import derive_seed
from .validation import check_frame, frame_to_image, image_to_frame

MANIFEST_NAME = "sequence.json"
FRAME_RE = re.compile(r"frame_(\d{6})\.png$")


class SequenceError(DataFormatError):
    pass


def as_fraction(value) -> Fraction:
    """Exact rational from int, Fraction, 'num/den' string, or dyadic float."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValidationError(f"not a rational: {value!r}")
    if isinstance(value, (int, str)):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value)
    raise ValidationError(f"not a rational: {value!r}")


def fraction_str(f: Fraction) -> str:
    return f"{f.numerator}/{f.denominator}"


@dataclass
class FrameSequence:
    frames: list  # (H, W, 3) uint8 arrays, all the same extent
    fps: Fraction
    retime_factor: Fraction = Fraction(1)
    recipe_hash: str | None = None

    def __post_init__(self):
        self.fps = as_fraction(self.fps)
        self.retime_factor = as_fraction(self.retime_factor)
        if self.fps <= 0:
            raise ValidationError(f"fps must be positive, got {self.fps}")
        if len(self.frames) < 1:
            raise ValidationError("sequence needs at least one frame")
        extent = None
        for i, frame in enumerate(self.frames):
            check_frame(frame, f"frame {i}")
            if extent is None:
                extent = frame.shape
            elif frame.shape != extent:
                raise ValidationError(
                    f"frame {i} extent {frame.shape} != first frame {extent}"
                )

    @property
    def duration(self) -> Fraction:
        return Fraction(len(self.frames)) / self.fps

    @property
    def extent(self):
        return self.frames[0].shape[:2]


@dataclass(frozen=True)
class RetimeSpec:
    factor: Fraction
    output_fps: Fraction | None = None

    def __post_init__(self):
        object.__setattr__(self, "factor", as_fraction(self.factor))
        if self.factor <= 0:
            raise ValidationError(f"retime factor must be positive, got {self.factor}")
        if self.output_fps is not None:
            object.__setattr__(self, "output_fps", as_fraction(self.output_fps))
            if self.output_fps <= 0:
                raise ValidationError("output fps must be positive")


# -- directory I/O -----------------------------------------------------------


def write_sequence(seq: FrameSequence, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(seq.frames):
        Image.fromarray(frame, mode="RGB").save(directory / f"frame_{i:06d}.png")
    manifest = {
        "fps": fraction_str(seq.fps),
        "frame_count": len(seq.frames),
        "retime_factor": fraction_str(seq.retime_factor),
        "recipe_hash": seq.recipe_hash,
    }
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n")


def load_sequence(directory) -> FrameSequence:
    directory = Path(directory)
    if not directory.is_dir():
        raise SequenceError(f"not a directory: {directory}")
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.exists():
        raise SequenceError(f"missing manifest {MANIFEST_NAME} in {directory}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise SequenceError(f"unreadable manifest in {directory}: {exc}") from exc

    indexed = {}
    for path in directory.iterdir():
        m = FRAME_RE.search(path.name)
        if m:
            indexed[int(m.group(1))] = path
    if not indexed:
        raise SequenceError(f"no frames in {directory}")
    count = len(indexed)
    missing = sorted(set(range(count)) - set(indexed))
    if missing:
        raise SequenceError(f"gap in frame numbering: missing index {missing[0]}")
    if manifest.get("frame_count") != count:
        raise SequenceError(
            f"manifest frame_count {manifest.get('frame_count')} != {count} files"
        )

    frames = []
    for i in range(count):
        with Image.open(indexed[i]) as im:
            frames.append(np.asarray(im.convert("RGB"), dtype=np.uint8))
    try:
        return FrameSequence(
            frames,
            fps=as_fraction(manifest["fps"]),
            retime_factor=as_fraction(manifest.get("retime_factor", 1)),
            recipe_hash=manifest.get("recipe_hash"),
        )
    except (KeyError, ValidationError, ZeroDivisionError) as exc:
        raise SequenceError(f"invalid sequence in {directory}: {exc}") from exc


# -- retiming -----------------------------------------------------------------


def retime(seq: FrameSequence, spec: RetimeSpec) -> FrameSequence:
    """Scale presentation timestamps by `factor` and resample at the output
    fps. Output frame j shows input frame floor(j * in_fps / (factor *
    out_fps)); the output count is ceil(in_count * factor * out_fps /
    in_fps), so the last partial display interval is never truncated.
    """
    out_fps = spec.output_fps if spec.output_fps is not None else seq.fps
    n_in = len(seq.frames)
    n_out = math.ceil(n_in * spec.factor * out_fps / seq.fps)
    step = seq.fps / (spec.factor * out_fps)
    frames = [seq.frames[math.floor(j * step)] for j in range(n_out)]
    return FrameSequence(
        frames,
        fps=out_fps,
        retime_factor=seq.retime_factor * spec.factor,
        recipe_hash=seq.recipe_hash,
    )


def source_index(j: int, in_fps: Fraction, spec: RetimeSpec) -> int:
    """Input frame shown at output frame j."""
    out_fps = spec.output_fps if spec.output_fps is not None else in_fps
    return math.floor(j * in_fps / (spec.factor * out_fps))


# -- stylization ---------------------------------------------------------------


def recipe_hash(recipe: DreamRecipe, params: RenderParams) -> str:
    blob = recipe.to_json() + "|" + json.dumps(
        {f: getattr(params, f) for f in params.__dataclass_fields__}, sort_keys=True
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def stylize_sequence(seq: FrameSequence, recipe: DreamRecipe,
                     params: RenderParams, model=None, workers: int = 1) -> FrameSequence:
    """Dream then paint every frame independently.

    Per-frame seeds are derived from (base seed, frame index), so the result
    does not depend on processing order or worker count. The painterly pass
    composites over the dreamed frame, which makes iterations=0 plus
    density=0 an exact identity.
    """
    model = resolve_model(recipe, model)
    guide = None
    if recipe.mode == "guided":
        if recipe.guide is None:
            raise ValidationError("guided recipe needs a guide image reference")
        guide = extract_guide_features(
            model, read_image(recipe.guide), recipe.layer_id, recipe.patch_size
        )

    def one_frame(i: int) -> np.ndarray:
        try:
            image = frame_to_image(seq.frames[i])
            recipe_i = replace(recipe, seed=derive_seed(recipe.seed, "dream", i))
            dreamed = run_dream(recipe_i, image, model=model, guide_features=guide)
            params_i = replace(params, seed=derive_seed(params.seed, "render", i))
            painted = render(dreamed, params_i, background=dreamed)
            return image_to_frame(painted)
        except StudioError as exc:
            raise type(exc)(f"frame {i}: {exc}") from exc

    indices = range(len(seq.frames))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            frames = list(pool.map(one_frame, indices))
    else:
        frames = [one_frame(i) for i in indices]
    return FrameSequence(
        frames,
        fps=seq.fps,
        retime_factor=seq.retime_factor,
        recipe_hash=recipe_hash(recipe, params),
    )
