"""Command-line entry point.

Subcommands map 1:1 onto the library stages: tile, train, dream, render,
retime, stylize-seq, stats, plan, serve. Exit codes: 0 success, 1 validation
error (including bad flags), 2 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

from . import artnet, painterly, psychstats
from .artnet import (ArtNet, LabelTree, ModelSpec, TileRecord, TrainConfig,
                     load_weights, read_manifest, save_weights, tile_image,
                     train, write_manifest)
from .dream import DreamRecipe, run_dream
from .errors import DataFormatError, StudioError, ValidationError
from .imageops import read_image, write_image
from .motionlab import (RetimeSpec, as_fraction, load_sequence, retime,
                        stylize_sequence, write_sequence)
from .painterly import RenderParams, render, strokes_to_csv
from .psychstats import (DIMENSIONS, PAIRS, format_summary_table,
                         ingest_ratings, preference_partition, speed_contrast,
                         summarize)
from .seeding import derive_seed
from .service import StudyService
from .study import StudyConfig, make_plan

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


class CliError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # unknown flags are validation errors, exit 1
        raise CliError(f"{self.prog}: {message}")


def build_parser() -> _Parser:
    parser = _Parser(prog="artstudio", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tile", parents=[], help="cut labeled source images into training tiles")
    p.add_argument("source_dir", help="directory of label-dir/.../image.png sources")
    p.add_argument("output_dir")
    p.add_argument("--tiles", type=int, default=50, help="tiles per source image")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--scales", default="1/2,1/3,1/4")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_tile)

    p = sub.add_parser("train", help="train the style network on a tile manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="weight file to write")
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--learning-rate", type=float, default=0.02)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("dream", help="stylize one image")
    p.add_argument("--recipe", help="recipe JSON file")
    p.add_argument("--model", help="weight file (overrides the recipe)")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    for name, kind in (("mode", str), ("guide", str), ("layer-id", str),
                       ("iterations", int), ("octaves", int),
                       ("octave-scale", float), ("step-size", float),
                       ("objective", str), ("patch-size", int),
                       ("jitter", int), ("seed", int)):
        p.add_argument(f"--{name}", type=kind, default=None)
    p.set_defaults(func=cmd_dream)

    p = sub.add_parser("render", help="painterly-render one image")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--k", type=int, default=12, help="palette size")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--strokes-csv", help="also write the stroke list")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("retime", help="retime a frame sequence")
    p.add_argument("input_dir")
    p.add_argument("output_dir")
    p.add_argument("--factor", required=True, help="e.g. 3.5 or 7/2")
    p.add_argument("--output-fps", default=None)
    p.set_defaults(func=cmd_retime)

    p = sub.add_parser("stylize-seq", help="dream+render every frame of a sequence")
    p.add_argument("input_dir")
    p.add_argument("output_dir")
    p.add_argument("--recipe", help="recipe JSON file")
    p.add_argument("--model", help="weight file (overrides the recipe)")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--k", type=int, default=12)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_stylize_seq)

    p = sub.add_parser("stats", help="summarize and test a ratings CSV")
    p.add_argument("ratings")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("plan", help="print the presentation plan for a participant")
    p.add_argument("--participant", required=True)
    p.add_argument("--seed", type=int, help="study seed (or use --config)")
    p.add_argument("--config", help="study config JSON")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("serve", help="run the study service")
    p.add_argument("--config", required=True)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(func=cmd_serve)
    return parser


# -- commands -----------------------------------------------------------------


def cmd_tile(args) -> int:
    src = Path(args.source_dir)
    if not src.is_dir():
        raise DataFormatError(f"source directory not found: {src}")
    images = sorted(p for p in src.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES)
    if not images:
        raise ValidationError(f"no images under {src}")
    scales = tuple(float(Fraction(s)) for s in args.scales.split(","))
    out = Path(args.output_dir)
    (out / "tiles").mkdir(parents=True, exist_ok=True)
    rows = []
    count = 0
    for path in images:
        rel = path.relative_to(src)
        label = "/".join(rel.parts[:-1])
        if not label:
            raise ValidationError(
                f"{path} is not under a label directory (need label/.../image.png)"
            )
        tiles = tile_image(
            read_image(path), args.tiles, seed=derive_seed(args.seed, str(rel)),
            scale_set=scales, size=args.size, source_id=str(rel), label_path=label,
        )
        for t in tiles:
            name = f"tiles/{count:06d}.png"
            write_image(out / name, t.tile)
            rows.append((name, t.label_path))
            count += 1
    write_manifest(out / "manifest.csv", rows)
    print(f"wrote {count} tiles from {len(images)} images to {out}")
    return 0


def cmd_train(args) -> int:
    manifest = Path(args.manifest)
    rows = read_manifest(manifest)
    if not rows:
        raise ValidationError(f"empty manifest {manifest}")
    base = manifest.parent
    tiles = []
    for tile_path, label in rows:
        img = read_image(base / tile_path)
        side = img.shape[1]
        tiles.append(TileRecord(tile_path, 0, 0, side, img, label))
    labels = LabelTree(sorted({label for _, label in rows}))
    net = ArtNet.init(ModelSpec(n_classes=len(labels)), seed=args.seed)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                      learning_rate=args.learning_rate, momentum=args.momentum,
                      seed=args.seed)
    trained, curve = train(net, tiles, labels, cfg)
    save_weights(trained, args.out)
    acc = artnet.accuracy(trained, tiles, labels)
    print(f"trained {len(tiles)} tiles / {len(labels)} classes over {cfg.epochs} epochs")
    print(f"loss {curve[0]:.4f} -> {curve[-1]:.4f}, train accuracy {acc:.3f}")
    print(f"weights written to {args.out}")
    return 0


def _recipe_from_args(args) -> DreamRecipe:
    if args.recipe:
        recipe = DreamRecipe.from_json(Path(args.recipe).read_text())
    else:
        recipe = DreamRecipe()
    overrides = {}
    for field in ("mode", "guide", "layer_id", "iterations", "octaves",
                  "octave_scale", "step_size", "objective", "patch_size",
                  "jitter", "seed"):
        value = getattr(args, field, None)
        if value is not None:
            overrides[field] = value
    if getattr(args, "model", None):
        overrides["model"] = args.model
    return replace(recipe, **overrides)


def cmd_dream(args) -> int:
    recipe = _recipe_from_args(args)
    image = read_image(args.input)
    out = run_dream(recipe, image)
    write_image(args.output, out)
    print(f"dreamed {args.input} -> {args.output} ({recipe.mode}, {recipe.layer_id})")
    return 0


def cmd_render(args) -> int:
    image = read_image(args.input)
    params = RenderParams(k=args.k, seed=args.seed)
    out, strokes = render(image, params, return_strokes=True)
    write_image(args.output, out)
    if args.strokes_csv:
        strokes_to_csv(strokes, args.strokes_csv)
    print(f"rendered {args.input} -> {args.output} with {len(strokes)} strokes")
    return 0


def cmd_retime(args) -> int:
    seq = load_sequence(args.input_dir)
    spec = RetimeSpec(
        factor=as_fraction(args.factor),
        output_fps=as_fraction(args.output_fps) if args.output_fps else None,
    )
    out = retime(seq, spec)
    write_sequence(out, args.output_dir)
    print(f"retimed {len(seq.frames)} frames -> {len(out.frames)} frames, "
          f"duration {float(out.duration):g} s at {out.fps} fps")
    return 0


def cmd_stylize_seq(args) -> int:
    seq = load_sequence(args.input_dir)
    recipe = _recipe_from_args(args)
    model = load_weights(args.model) if args.model else None
    params = RenderParams(k=args.k, seed=args.seed)
    out = stylize_sequence(seq, recipe, params, model=model, workers=args.workers)
    write_sequence(out, args.output_dir)
    print(f"stylized {len(out.frames)} frames -> {args.output_dir} "
          f"(recipe hash {out.recipe_hash})")
    return 0


def cmd_stats(args) -> int:
    result = ingest_ratings(args.ratings)
    for line_no, reason in result.rejected:
        print(f"rejected line {line_no}: {reason}", file=sys.stderr)
    for pid in sorted(result.excluded):
        print(f"excluded participant {pid}: incomplete cells", file=sys.stderr)
    records = result.complete_records
    if not records:
        raise ValidationError("no complete participants to analyze")
    print(format_summary_table(summarize(records)))
    print()
    print("paired t (slow vs fast):")
    for pair in (None, *PAIRS):
        for dim in DIMENSIONS:
            label = f"{dim}/{pair or 'both'}"
            try:
                res = speed_contrast(records, dim, pair)
                print(f"  {label:<42} t({res.df}) = {res.t:+.2f}, p = {res.p:.5f}")
            except ValidationError as exc:
                print(f"  {label:<42} not computable: {exc}")
    print()
    try:
        counts = preference_partition(records)
        print("preference partition:", json.dumps(counts))
    except ValidationError as exc:
        print(f"preference partition not computable: {exc}")
    return 1 if result.rejected else 0


def cmd_plan(args) -> int:
    if args.config:
        seed = StudyConfig.from_file(args.config).study_seed
    elif args.seed is not None:
        seed = args.seed
    else:
        raise CliError("plan: provide --seed or --config")
    plan = make_plan(seed, args.participant)
    print(json.dumps(plan.to_dict(), indent=2))
    return 0


def cmd_serve(args) -> int:
    config = StudyConfig.from_file(args.config)
    service = StudyService(config)
    host = args.host or config.host
    port = config.port if args.port is None else args.port
    server = service.make_server(host, port)
    actual_host, actual_port = server.server_address[:2]
    print(f"study service listening on http://{actual_host}:{actual_port}", flush=True)
    try:
        server.serve_forever()
    finally:
        server.server_close()
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StudioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
