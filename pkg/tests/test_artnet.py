import numpy as np
import pytest

from artstudio import artnet
from artstudio.artnet import (
    ArtNet, LabelTree, ModelSpec, TileRecord, TrainConfig,
    load_weights, save_weights, tile_image, train,
)
from artstudio.errors import DataFormatError, ValidationError

from oracles import fd_grad, max_rel_err


@pytest.fixture(scope="module")
def net():
    return ArtNet.init(ModelSpec(n_classes=3), seed=11)


def test_layer_shapes_for_64px_input(net):
    img = np.random.default_rng(0).random((3, 64, 64), dtype=np.float32)
    assert net.forward_to_layer(img, "L1").shape == (16, 32, 32)
    assert net.forward_to_layer(img, "L2").shape == (32, 16, 16)
    assert net.forward_to_layer(img, "L3").shape == (64, 8, 8)
    assert net.forward_to_layer(img, "L4").shape == (128, 8, 8)


def test_zero_image_zero_biases_propagates_zero(net):
    img = np.zeros((3, 64, 64), dtype=np.float32)
    for layer in artnet.DREAM_LAYERS:
        assert not net.forward_to_layer(img, layer).any()


def test_unknown_layer_and_indivisible_extents(net):
    img = np.zeros((3, 64, 64), dtype=np.float32)
    with pytest.raises(ValidationError):
        net.forward_to_layer(img, "L9")
    with pytest.raises(ValidationError):
        net.forward_to_layer(np.zeros((3, 60, 64), dtype=np.float32), "L3")


def test_grad_zero_upstream_and_vjp_linearity(net):
    rng = np.random.default_rng(1)
    img = rng.random((3, 32, 32), dtype=np.float32)
    zero = np.zeros((32, 8, 8), dtype=np.float32)
    assert not net.grad_wrt_input(img, "L2", zero).any()
    net64 = net.astype(np.float64)
    u = rng.normal(size=(32, 8, 8))
    g1 = net64.grad_wrt_input(img.astype(np.float64), "L2", u)
    g3 = net64.grad_wrt_input(img.astype(np.float64), "L2", 3.0 * u)
    assert max_rel_err(g3, 3.0 * g1) < 1e-12


def test_grad_wrt_input_matches_finite_differences():
    net64 = ArtNet.init(ModelSpec(n_classes=2), seed=3).astype(np.float64)
    rng = np.random.default_rng(2)
    img = rng.random((3, 8, 8))
    upstream = rng.normal(size=(16, 4, 4))

    def objective(arr):
        return float(np.sum(net64.forward_to_layer(arr, "L1") * upstream))

    grad = net64.grad_wrt_input(img, "L1", upstream)
    assert max_rel_err(grad, fd_grad(objective, img)) <= 1e-4


def test_predict_proba_is_probability_vector(net):
    x = np.random.default_rng(4).random((5, 3, 32, 32), dtype=np.float32)
    probs = net.predict_proba(x)
    assert np.all(probs >= 0)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-5)


# -- tiling -------------------------------------------------------------------

def make_source(seed, h=192, w=192):
    return np.random.default_rng(seed).random((3, h, w), dtype=np.float32)


def test_tile_image_counts_and_bounds():
    img = make_source(0)
    tiles = tile_image(img, 50, seed=9, source_id="img0", label_path="a/b")
    assert len(tiles) == 50
    for t in tiles:
        assert t.tile.shape == (3, 64, 64)
        assert t.side >= 32
        assert 0 <= t.x <= 192 - t.side
        assert 0 <= t.y <= 192 - t.side
        assert t.label_path == "a/b"


def test_tile_image_empty_and_deterministic():
    img = make_source(1)
    assert tile_image(img, 0, seed=0) == []
    a = tile_image(img, 10, seed=42)
    b = tile_image(img, 10, seed=42)
    assert [(t.x, t.y, t.side) for t in a] == [(t.x, t.y, t.side) for t in b]


def test_tile_image_too_small_errors():
    with pytest.raises(ValidationError):
        tile_image(make_source(2, 100, 100), 5, seed=0)  # 100/4 = 25 < 32


def test_tile_positions_cover_valid_offsets():
    img = make_source(3, 128, 128)
    tiles = tile_image(img, 10000, seed=5, scale_set=(0.5,))
    xs = np.array([t.x for t in tiles])
    # side = 64, offsets 0..64 inclusive: every offset should appear
    counts = np.bincount(xs, minlength=65)
    assert counts.min() > 0
    expected = 10000 / 65
    assert abs(counts.max() - expected) < 6 * np.sqrt(expected)


# -- training -------------------------------------------------------------------

def one_tile_dataset():
    rng = np.random.default_rng(6)
    tile = rng.random((3, 32, 32), dtype=np.float32)
    return [TileRecord("s", 0, 0, 32, tile, "van_gogh/early")]


def test_train_memorizes_single_tile():
    labels = LabelTree(["van_gogh/early", "van_gogh/late"])
    net = ArtNet.init(ModelSpec(n_classes=2), seed=0)
    cfg = TrainConfig(epochs=50, batch_size=1, learning_rate=0.05, momentum=0.9, seed=1)
    trained, curve = train(net, one_tile_dataset(), labels, cfg)
    assert curve[-1] < curve[0]
    assert artnet.accuracy(trained, one_tile_dataset(), labels) == 1.0


def test_train_deterministic_per_seed():
    labels = LabelTree(["a", "b"])
    rng = np.random.default_rng(7)
    tiles = [
        TileRecord("s", 0, 0, 32, rng.random((3, 16, 16), dtype=np.float32), lbl)
        for lbl in ["a", "b", "a", "b"]
    ]
    net = ArtNet.init(ModelSpec(n_classes=2), seed=0)
    cfg = TrainConfig(epochs=3, batch_size=2, learning_rate=0.01, momentum=0.9, seed=5)
    t1, c1 = train(net, tiles, labels, cfg)
    t2, c2 = train(net, tiles, labels, cfg)
    assert c1 == c2
    for a, b in zip(t1.tensors(), t2.tensors()):
        assert a.tobytes() == b.tobytes()


def test_train_rejects_empty_and_unknown_label():
    labels = LabelTree(["a", "b"])
    net = ArtNet.init(ModelSpec(n_classes=2), seed=0)
    cfg = TrainConfig(epochs=1, batch_size=1, learning_rate=0.1, momentum=0.9, seed=0)
    with pytest.raises(ValidationError):
        train(net, [], labels, cfg)
    bad = [TileRecord("s", 0, 0, 16, np.zeros((3, 16, 16), np.float32), "c")]
    with pytest.raises(ValidationError):
        train(net, bad, labels, cfg)


# -- label tree -------------------------------------------------------------------

def test_label_tree_leaves_and_lookup():
    tree = LabelTree(["x/1", "x/2", "y"])
    assert len(tree) == 3
    assert tree.leaf_index("x/2") == 1
    with pytest.raises(ValidationError):
        tree.leaf_index("x")


def test_label_tree_rejects_leaf_under_leaf():
    with pytest.raises(ValidationError):
        LabelTree(["a", "a/b"])


# -- weight files -------------------------------------------------------------------

def test_weights_roundtrip(tmp_path, net):
    path = tmp_path / "model.artn"
    save_weights(net, path)
    loaded = load_weights(path)
    assert loaded.spec == net.spec
    for a, b in zip(net.tensors(), loaded.tensors()):
        assert a.tobytes() == b.tobytes()


def test_weights_truncated_file(tmp_path, net):
    path = tmp_path / "model.artn"
    save_weights(net, path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(DataFormatError):
        load_weights(path)


def test_weights_bad_magic(tmp_path, net):
    path = tmp_path / "model.artn"
    save_weights(net, path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(bytes(raw))
    with pytest.raises(DataFormatError):
        load_weights(path)


def test_manifest_roundtrip(tmp_path):
    path = tmp_path / "tiles.csv"
    rows = [("tiles/t0.png", "van_gogh/early"), ("tiles/t1.png", "monet/haystacks")]
    artnet.write_manifest(path, rows)
    assert artnet.read_manifest(path) == rows
    path.write_text("wrong,header\n")
    with pytest.raises(DataFormatError):
        artnet.read_manifest(path)
