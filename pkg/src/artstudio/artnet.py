"""The fixed small style network: four conv blocks with named dream-target
layers L1..L4, a global-average-pool classifier head, stochastic multi-scale
tiling for corpus augmentation, SGD training, and weight (de)serialization.

Architecture (defaults):
    B1: conv3x3(3->16)  + relu + pool2     L1 = block output, 16 x h/2 x w/2
    B2: conv3x3(16->32) + relu + pool2     L2 = block output, 32 x h/4 x w/4
    B3: conv3x3(32->64) + relu + pool2     L3 = block output, 64 x h/8 x w/8
    B4: conv3x3(64->128) + relu            L4 = block output, 128 x h/8 x w/8
    head: global average pool -> linear -> C classes

Inputs are (3, H, W) floats normalized to [0, 1]; no mean subtraction.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from . import ndgrid
from .errors import DataFormatError, ValidationError
from .imageops import resize_bilinear
from .ndgrid import KernelParams
from .validation import check_finite, check_image

DREAM_LAYERS = ("L1", "L2", "L3", "L4")

DEFAULT_BLOCKS = ((3, 16), (16, 32), (32, 64), (64, 128))
DEFAULT_POOLED = (True, True, True, False)

WEIGHTS_MAGIC = b"ARTN"
WEIGHTS_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    """Layer plan of the network; blocks are (in_ch, out_ch) conv3x3 pairs."""

    n_classes: int
    blocks: tuple = DEFAULT_BLOCKS
    pooled: tuple = DEFAULT_POOLED

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValidationError(f"need at least 2 classes, got {self.n_classes}")
        if len(self.blocks) != len(self.pooled) or not self.blocks:
            raise ValidationError("blocks and pooled plans are inconsistent")
        for i in range(len(self.blocks) - 1):
            if self.blocks[i][1] != self.blocks[i + 1][0]:
                raise ValidationError(
                    f"block {i} outputs {self.blocks[i][1]} channels but "
                    f"block {i + 1} expects {self.blocks[i + 1][0]}"
                )

    @property
    def feature_dim(self) -> int:
        return self.blocks[-1][1]

    def layer_index(self, layer_id: str) -> int:
        if layer_id not in DREAM_LAYERS[: len(self.blocks)]:
            raise ValidationError(f"unknown layer {layer_id!r}")
        return int(layer_id[1:]) - 1

    def layer_divisor(self, layer_id: str) -> int:
        """Input extents must be divisible by this to reach the layer."""
        k = self.layer_index(layer_id)
        return 2 ** sum(self.pooled[: k + 1])


class ArtNet:
    """Weights container plus forward / gradient passes.

    Trained weights are immutable by convention: training returns a new net,
    and a net can be shared read-only across threads.
    """

    def __init__(self, spec: ModelSpec, conv_params, fc_weight, fc_bias):
        if len(conv_params) != len(spec.blocks):
            raise ValidationError("conv parameter count does not match spec")
        for kp, (cin, cout) in zip(conv_params, spec.blocks):
            if kp.weights.shape[:2] != (cout, cin):
                raise ValidationError(
                    f"conv weights {kp.weights.shape} do not match block ({cin}->{cout})"
                )
        fc_weight = np.asarray(fc_weight)
        fc_bias = np.asarray(fc_bias)
        if fc_weight.shape != (spec.n_classes, spec.feature_dim):
            raise ValidationError(f"classifier weights shape {fc_weight.shape} invalid")
        if fc_bias.shape != (spec.n_classes,):
            raise ValidationError(f"classifier bias shape {fc_bias.shape} invalid")
        self.spec = spec
        self.conv_params = list(conv_params)
        self.fc_weight = check_finite(fc_weight, "fc weights")
        self.fc_bias = check_finite(fc_bias, "fc bias")

    @classmethod
    def init(cls, spec: ModelSpec, seed: int, dtype=np.float32) -> "ArtNet":
        """He-initialized conv stacks, Xavier classifier, zero biases."""
        rng = np.random.default_rng(seed)
        convs = []
        for cin, cout in spec.blocks:
            std = np.sqrt(2.0 / (cin * 9))
            w = rng.normal(0.0, std, size=(cout, cin, 3, 3)).astype(dtype)
            convs.append(KernelParams(w, np.zeros(cout, dtype=dtype), stride=1, padding=1))
        std = np.sqrt(1.0 / spec.feature_dim)
        fc_w = rng.normal(0.0, std, size=(spec.n_classes, spec.feature_dim)).astype(dtype)
        fc_b = np.zeros(spec.n_classes, dtype=dtype)
        return cls(spec, convs, fc_w, fc_b)

    def astype(self, dtype) -> "ArtNet":
        return ArtNet(
            self.spec,
            [kp.astype(dtype) for kp in self.conv_params],
            self.fc_weight.astype(dtype),
            self.fc_bias.astype(dtype),
        )

    @property
    def dtype(self):
        return self.conv_params[0].weights.dtype

    def tensors(self) -> list[np.ndarray]:
        """Flat weight list in serialization order."""
        out = []
        for kp in self.conv_params:
            out.extend([kp.weights, kp.bias])
        out.extend([self.fc_weight, self.fc_bias])
        return out

    # -- forward / backward ------------------------------------------------

    def _check_extents(self, image, layer_id):
        _, h, w = image.shape[-3:]
        d = self.spec.layer_divisor(layer_id)
        if h % d or w % d:
            raise ValidationError(
                f"extents {h}x{w} not divisible by {d} required for {layer_id}"
            )

    def _trace_to_layer(self, x_nchw: np.ndarray, upto: int):
        """Run blocks 0..upto, keeping what the backward pass needs."""
        saves = []
        h = x_nchw
        for k in range(upto + 1):
            z = ndgrid.conv2d_nchw(h, self.conv_params[k])
            a = ndgrid.relu(z)
            idx = None
            if self.spec.pooled[k]:
                a, idx = ndgrid.maxpool2_nchw(a)
            saves.append((h, z, idx))
            h = a
        return h, saves

    def _backward_trace(self, saves, upstream: np.ndarray, want_param_grads=False):
        g = upstream
        param_grads = []
        for k in range(len(saves) - 1, -1, -1):
            x, z, idx = saves[k]
            if idx is not None:
                g = ndgrid.maxpool2_backward_nchw(z.shape, idx, g)
            g = ndgrid.relu_backward(z, g)
            g, dw, db = ndgrid.conv2d_backward_nchw(x, self.conv_params[k], g)
            if want_param_grads:
                param_grads.append((dw, db))
        if want_param_grads:
            return g, param_grads[::-1]
        return g

    def forward_to_layer(self, image: np.ndarray, layer_id: str) -> np.ndarray:
        """Activations of the named layer for a (3, H, W) image."""
        check_image(image)
        self._check_extents(image, layer_id)
        upto = self.spec.layer_index(layer_id)
        out, _ = self._trace_to_layer(image[None], upto)
        return out[0]

    def grad_wrt_input(self, image: np.ndarray, layer_id: str, upstream: np.ndarray) -> np.ndarray:
        """Vector-Jacobian product of the prefix network, back to the pixels."""
        check_image(image)
        self._check_extents(image, layer_id)
        upto = self.spec.layer_index(layer_id)
        out, saves = self._trace_to_layer(image[None], upto)
        if upstream.shape != out.shape[1:]:
            raise ValidationError(
                f"upstream shape {upstream.shape} != layer output {out.shape[1:]}"
            )
        return self._backward_trace(saves, upstream[None])[0]

    def features(self, images_nchw: np.ndarray) -> np.ndarray:
        """Global-average-pooled top-block features, (N, feature_dim)."""
        out, _ = self._trace_to_layer(images_nchw, len(self.spec.blocks) - 1)
        return out.mean(axis=(2, 3))

    def logits(self, images_nchw: np.ndarray) -> np.ndarray:
        v = self.features(images_nchw)
        return v @ self.fc_weight.T.astype(v.dtype, copy=False) + self.fc_bias

    def predict_proba(self, images_nchw: np.ndarray) -> np.ndarray:
        return _softmax(self.logits(images_nchw))

    def predict(self, images_nchw: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(images_nchw), axis=1)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward_to_layer(model: ArtNet, image: np.ndarray, layer_id: str) -> np.ndarray:
    return model.forward_to_layer(image, layer_id)


def grad_wrt_input(model: ArtNet, image: np.ndarray, layer_id: str, upstream: np.ndarray) -> np.ndarray:
    return model.grad_wrt_input(image, layer_id, upstream)


# -- label trees -----------------------------------------------------------


class LabelTree:
    """Rooted tree of '/'-separated category paths; leaves are the classes."""

    def __init__(self, leaf_paths):
        leaves = sorted(set(leaf_paths))
        if not leaves:
            raise ValidationError("label tree needs at least one leaf")
        for a in leaves:
            for b in leaves:
                if a != b and b.startswith(a + "/"):
                    raise ValidationError(f"label {a!r} is both a leaf and an interior node")
        self.leaves = leaves
        self._index = {path: i for i, path in enumerate(leaves)}
        self.root: dict = {}
        for path in leaves:
            node = self.root
            for part in path.split("/"):
                if not part:
                    raise ValidationError(f"empty component in label path {path!r}")
                node = node.setdefault(part, {})

    def __len__(self):
        return len(self.leaves)

    def leaf_index(self, path: str) -> int:
        try:
            return self._index[path]
        except KeyError:
            raise ValidationError(f"label {path!r} is not a leaf of the tree") from None


# -- tiling ----------------------------------------------------------------

DEFAULT_TILE_SIZE = 64
DEFAULT_SCALE_SET = (0.5, 1 / 3, 0.25)


@dataclass(frozen=True)
class TileRecord:
    source_id: str
    x: int
    y: int
    side: int
    tile: np.ndarray  # (3, S, S) float32
    label_path: str = ""


def tile_image(
    image: np.ndarray,
    tiles_per_image: int,
    seed: int,
    scale_set=DEFAULT_SCALE_SET,
    size: int = DEFAULT_TILE_SIZE,
    source_id: str = "",
    label_path: str = "",
) -> list[TileRecord]:
    """Sample square crops at random scales/positions, resampled to size x size.

    Crop side is drawn uniformly from scale_set * min(h, w), the position
    uniformly among valid offsets. Deterministic per seed.
    """
    check_image(image)
    if tiles_per_image < 0:
        raise ValidationError("tiles_per_image must be >= 0")
    if tiles_per_image == 0:
        return []
    _, h, w = image.shape
    min_dim = min(h, w)
    if min_dim < size:
        raise ValidationError(f"image {h}x{w} smaller than tile size {size}")
    sides = [int(round(f * min_dim)) for f in scale_set]
    if min(sides) < (size + 1) // 2:
        raise ValidationError(
            f"image too small for smallest scale: crop side {min(sides)} < {size}/2"
        )
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(tiles_per_image):
        side = sides[int(rng.integers(0, len(sides)))]
        x = int(rng.integers(0, w - side + 1))
        y = int(rng.integers(0, h - side + 1))
        crop = image[:, y:y + side, x:x + side]
        tile = resize_bilinear(crop.astype(np.float32), size, size)
        records.append(TileRecord(source_id, x, y, side, tile, label_path))
    return records


# -- training ----------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    momentum: float
    seed: int

    def __post_init__(self):
        for name in ("epochs", "batch_size", "learning_rate", "momentum"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.seed is None:
            raise ValidationError("seed is mandatory")


def _loss_and_grads(net: ArtNet, xb: np.ndarray, yb: np.ndarray):
    """Softmax cross-entropy loss and gradients for one minibatch."""
    feats, saves = net._trace_to_layer(xb, len(net.spec.blocks) - 1)
    n, c, sh, sw = feats.shape
    v = feats.mean(axis=(2, 3))
    logits = v @ net.fc_weight.T.astype(v.dtype, copy=False) + net.fc_bias
    zmax = logits.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(logits - zmax).sum(axis=1))
    loss = float(np.mean(lse - logits[np.arange(n), yb]))

    probs = _softmax(logits)
    dlogits = probs
    dlogits[np.arange(n), yb] -= 1.0
    dlogits /= n
    dfc_w = dlogits.T @ v
    dfc_b = dlogits.sum(axis=0)
    dv = dlogits @ net.fc_weight.astype(dlogits.dtype, copy=False)
    dfeat = np.broadcast_to(dv[:, :, None, None] / (sh * sw), feats.shape)
    _, conv_grads = net._backward_trace(saves, np.ascontiguousarray(dfeat), True)
    return loss, conv_grads, dfc_w, dfc_b


def train(net: ArtNet, tiles, labels: LabelTree, cfg: TrainConfig):
    """SGD with momentum on softmax cross-entropy over leaf classes.

    Returns (trained ArtNet, per-epoch mean loss). Deterministic per seed:
    the same net, tiles and config produce bit-identical weights.
    """
    if not tiles:
        raise ValidationError("empty training dataset")
    if len(labels) != net.spec.n_classes:
        raise ValidationError(
            f"label tree has {len(labels)} leaves, classifier expects {net.spec.n_classes}"
        )
    x = np.stack([t.tile for t in tiles]).astype(net.dtype)
    y = np.array([labels.leaf_index(t.label_path) for t in tiles])

    work = ArtNet(net.spec, list(net.conv_params), net.fc_weight.copy(),
                  net.fc_bias.copy())

    vel = [np.zeros_like(t) for t in work.tensors()]
    rng = np.random.default_rng(cfg.seed)
    mu, lr = net.dtype.type(cfg.momentum), net.dtype.type(cfg.learning_rate)
    loss_curve = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(tiles))
        epoch_loss = 0.0
        for start in range(0, len(tiles), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, conv_grads, dfc_w, dfc_b = _loss_and_grads(work, x[batch], y[batch])
            epoch_loss += loss * len(batch)
            new_params = []
            for i, (kp, (dw, db)) in enumerate(zip(work.conv_params, conv_grads)):
                vel[2 * i] = mu * vel[2 * i] - lr * dw.astype(net.dtype)
                vel[2 * i + 1] = mu * vel[2 * i + 1] - lr * db.astype(net.dtype)
                new_params.append(
                    KernelParams(kp.weights + vel[2 * i], kp.bias + vel[2 * i + 1],
                                 kp.stride, kp.padding)
                )
            vel[-2] = mu * vel[-2] - lr * dfc_w.astype(net.dtype)
            vel[-1] = mu * vel[-1] - lr * dfc_b.astype(net.dtype)
            work = ArtNet(net.spec, new_params, work.fc_weight + vel[-2],
                          work.fc_bias + vel[-1])
        loss_curve.append(epoch_loss / len(tiles))
    return work, loss_curve


def accuracy(net: ArtNet, tiles, labels: LabelTree) -> float:
    x = np.stack([t.tile for t in tiles]).astype(net.dtype)
    y = np.array([labels.leaf_index(t.label_path) for t in tiles])
    return float(np.mean(net.predict(x) == y))


# -- weight files ------------------------------------------------------------


def save_weights(net: ArtNet, path) -> None:
    """Write the ARTN weight file: magic, u32 version, u32 tensor count, then
    per tensor u32 rank, u32 extents, little-endian float32 payload."""
    tensors = net.tensors()
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<II", WEIGHTS_VERSION, len(tensors)))
        for t in tensors:
            fh.write(struct.pack("<I", t.ndim))
            fh.write(struct.pack(f"<{t.ndim}I", *t.shape))
            fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DataFormatError(f"truncated weight file while reading {what}")
    return buf


def load_weights(path) -> ArtNet:
    """Read an ARTN weight file; the block plan is recovered from the shapes."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != WEIGHTS_MAGIC:
            raise DataFormatError(f"bad magic in weight file {path}")
        version, count = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != WEIGHTS_VERSION:
            raise DataFormatError(f"unsupported weight file version {version}")
        tensors = []
        for i in range(count):
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, f"tensor {i} rank"))
            if rank < 1 or rank > 4:
                raise DataFormatError(f"tensor {i}: implausible rank {rank}")
            shape = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, f"tensor {i} shape"))
            n = int(np.prod(shape))
            raw = _read_exact(fh, 4 * n, f"tensor {i} payload")
            tensors.append(np.frombuffer(raw, dtype="<f4").reshape(shape).copy())
        if fh.read(1):
            raise DataFormatError("trailing bytes after last tensor")

    if len(tensors) % 2 or len(tensors) < 4:
        raise DataFormatError(f"unexpected tensor count {len(tensors)}")
    n_blocks = (len(tensors) - 2) // 2
    blocks = []
    for k in range(n_blocks):
        w = tensors[2 * k]
        if w.ndim != 4:
            raise DataFormatError(f"conv weight {k} has rank {w.ndim}")
        blocks.append((w.shape[1], w.shape[0]))
    fc_w, fc_b = tensors[-2], tensors[-1]
    if fc_w.ndim != 2 or fc_b.ndim != 1:
        raise DataFormatError("classifier tensors have wrong rank")
    spec = ModelSpec(
        n_classes=fc_w.shape[0],
        blocks=tuple(blocks),
        pooled=DEFAULT_POOLED[:n_blocks],
    )
    convs = [
        KernelParams(tensors[2 * k], tensors[2 * k + 1], stride=1, padding=1)
        for k in range(n_blocks)
    ]
    try:
        return ArtNet(spec, convs, fc_w, fc_b)
    except ValidationError as exc:
        raise DataFormatError(f"inconsistent shape table: {exc}") from exc


# -- dataset manifests -------------------------------------------------------


def write_manifest(path, rows) -> None:
    """rows: iterable of (tile_path, label_path)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tile_path", "label_path"])
        for tile_path, label_path in rows:
            writer.writerow([tile_path, label_path])


def read_manifest(path) -> list[tuple[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["tile_path", "label_path"]:
            raise DataFormatError(f"bad manifest header in {path}: {header}")
        return [(row[0], row[1]) for row in reader if row]
