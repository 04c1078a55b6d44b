import json

import numpy as np
import pytest

from artstudio.cli import main
from artstudio.imageops import read_image, write_image
from artstudio.motionlab import FrameSequence, load_sequence, write_sequence
from artstudio.psychstats import write_ratings_csv

from fixtures import partition_records


def write_sources(root, n_per_label=2, size=160):
    rng = np.random.default_rng(1)
    for label in ("van_gogh/early", "van_gogh/late"):
        d = root / label
        d.mkdir(parents=True)
        for i in range(n_per_label):
            img = rng.random((3, size, size)).astype(np.float32)
            write_image(d / f"src{i}.png", img)


def test_tile_then_train_then_dream(tmp_path, capsys):
    src = tmp_path / "sources"
    src.mkdir()
    write_sources(src)
    tiles_dir = tmp_path / "tiles"
    assert main(["tile", str(src), str(tiles_dir), "--tiles", "6",
                 "--size", "32", "--seed", "3"]) == 0
    manifest = tiles_dir / "manifest.csv"
    assert manifest.exists()
    assert len(list((tiles_dir / "tiles").glob("*.png"))) == 24

    weights = tmp_path / "model.artn"
    assert main(["train", str(manifest), "--out", str(weights), "--epochs", "2",
                 "--batch-size", "8", "--learning-rate", "0.01", "--seed", "5"]) == 0
    assert weights.exists()

    img_path = tmp_path / "in.png"
    write_image(img_path, np.random.default_rng(2).random((3, 64, 64)).astype(np.float32))
    out_path = tmp_path / "out.png"
    assert main(["dream", "--model", str(weights), "--input", str(img_path),
                 "--output", str(out_path), "--iterations", "0",
                 "--layer-id", "L2", "--seed", "0"]) == 0
    np.testing.assert_array_equal(read_image(out_path), read_image(img_path))

    assert main(["dream", "--model", str(weights), "--input", str(img_path),
                 "--output", str(out_path), "--iterations", "2",
                 "--layer-id", "L2", "--seed", "0"]) == 0
    assert read_image(out_path).shape == (3, 64, 64)


def test_render_command(tmp_path):
    img_path = tmp_path / "in.png"
    write_image(img_path, np.random.default_rng(3).random((3, 48, 48)).astype(np.float32))
    out_path = tmp_path / "painted.png"
    strokes_csv = tmp_path / "strokes.csv"
    assert main(["render", "--input", str(img_path), "--output", str(out_path),
                 "--seed", "7", "--strokes-csv", str(strokes_csv)]) == 0
    assert out_path.exists()
    assert strokes_csv.read_text().splitlines()[0] == \
        "pass,order,x,y,angle,length,width,palette_index"


def test_retime_command(tmp_path, capsys):
    rng = np.random.default_rng(4)
    frames = [rng.integers(0, 256, (8, 8, 3), dtype=np.uint8) for _ in range(90)]
    write_sequence(FrameSequence(frames, fps=10), tmp_path / "in")
    assert main(["retime", str(tmp_path / "in"), str(tmp_path / "out"),
                 "--factor", "3.5"]) == 0
    out = load_sequence(tmp_path / "out")
    assert len(out.frames) == 315
    assert float(out.duration) == 31.5
    manifest = json.loads((tmp_path / "out" / "sequence.json").read_text())
    assert manifest["retime_factor"] == "7/2"


def test_stylize_seq_identity(tmp_path):
    rng = np.random.default_rng(5)
    frames = [rng.integers(0, 256, (32, 32, 3), dtype=np.uint8) for _ in range(2)]
    write_sequence(FrameSequence(frames, fps=10), tmp_path / "in")
    recipe = {"layer_id": "L2", "iterations": 2, "octaves": 1, "jitter": 1, "seed": 3}
    (tmp_path / "r.json").write_text(json.dumps(recipe))

    from artstudio.artnet import ArtNet, ModelSpec, save_weights
    save_weights(ArtNet.init(ModelSpec(n_classes=2), seed=1), tmp_path / "m.artn")
    assert main(["stylize-seq", str(tmp_path / "in"), str(tmp_path / "out"),
                 "--recipe", str(tmp_path / "r.json"), "--model", str(tmp_path / "m.artn"),
                 "--seed", "3", "--workers", "2"]) == 0
    out = load_sequence(tmp_path / "out")
    assert len(out.frames) == 2
    assert out.recipe_hash


def test_stats_command(tmp_path, capsys):
    path = tmp_path / "ratings.csv"
    write_ratings_csv(path, partition_records())
    assert main(["stats", str(path)]) == 0
    printed = capsys.readouterr().out
    assert "aesthetic_pleasantness" in printed
    assert '"always_slow": 21' in printed
    assert "t(37)" in printed


def test_stats_on_single_participant_file(tmp_path, capsys):
    from artstudio.psychstats import RatingRecord
    records = [
        RatingRecord("P1", pair, speed, i, 5, 6, 5, "2026-01-15T10:00:00+00:00")
        for i, (pair, speed) in enumerate(
            (p, s) for p in ("abstract", "portrait") for s in ("slow", "fast"))
    ]
    path = tmp_path / "ratings.csv"
    write_ratings_csv(path, records)
    assert main(["stats", str(path)]) == 0
    out = capsys.readouterr().out
    assert "n<2" in out  # per-pair cells have a single observation


def test_stats_flags_bad_rows(tmp_path, capsys):
    path = tmp_path / "ratings.csv"
    write_ratings_csv(path, partition_records())
    with open(path, "a", newline="") as fh:
        fh.write("P00,abstract,slow,0,9,5,5,2026-01-15T10:00:00+00:00\r\n")
    assert main(["stats", str(path)]) == 1
    err = capsys.readouterr().err
    assert "rejected line" in err


def test_plan_command(capsys):
    assert main(["plan", "--participant", "P01", "--seed", "42"]) == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan["participant_id"] == "P01"
    assert len(plan["trials"]) == 4
    assert main(["plan", "--participant", "no spaces allowed", "--seed", "1"]) == 1


def test_unknown_flag_and_missing_file_exit_codes(tmp_path, capsys):
    assert main(["retime", "in", "out", "--factor", "2", "--sneaky"]) == 1
    assert main(["retime", str(tmp_path / "absent"), str(tmp_path / "out"),
                 "--factor", "2"]) == 2
    assert main(["train", str(tmp_path / "absent.csv"), "--out", "w", "--seed", "1"]) == 2
