"""scikit-learn style wrappers around the functional core, so the pipeline
composes with the wider ecosystem (Pipeline, clone, grid search).

ArtStyleClassifier : fit tiles + label paths, predict leaf labels
DreamStylizer      : transformer; fit() learns guide features (guided mode)
PainterlyRenderer  : stateless transformer around the stroke renderer

Hyperparameters live in __init__ under their own names; learned state uses
trailing-underscore attributes, per sklearn convention.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from .artnet import ArtNet, LabelTree, ModelSpec, TileRecord, TrainConfig, load_weights, train
from .dream import DreamRecipe, extract_guide_features, run_dream
from .errors import ValidationError
from .painterly import RenderParams, render
from .validation import check_image


def _as_image_batch(X, name="X"):
    arr = np.asarray(X, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[1] != 3:
        raise ValidationError(f"{name} must be (n, 3, h, w) images, got {arr.shape}")
    return arr


class ArtStyleClassifier(BaseEstimator, ClassifierMixin):
    """Small conv net trained on style tiles labeled with '/'-separated paths."""

    def __init__(self, epochs=60, batch_size=16, learning_rate=0.02,
                 momentum=0.9, seed=0):
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.seed = seed

    def fit(self, X, y):
        X = _as_image_batch(X)
        y = [str(label) for label in y]
        if len(y) != len(X):
            raise ValidationError(f"got {len(X)} tiles but {len(y)} labels")
        self.label_tree_ = LabelTree(sorted(set(y)))
        self.classes_ = np.array(self.label_tree_.leaves)
        side = X.shape[-1]
        tiles = [
            TileRecord("", 0, 0, side, tile, label) for tile, label in zip(X, y)
        ]
        net = ArtNet.init(ModelSpec(n_classes=len(self.label_tree_)), seed=self.seed)
        cfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                          learning_rate=self.learning_rate, momentum=self.momentum,
                          seed=self.seed)
        self.net_, self.loss_curve_ = train(net, tiles, self.label_tree_, cfg)
        return self

    def predict_proba(self, X):
        self._check_fitted()
        return self.net_.predict_proba(_as_image_batch(X))

    def predict(self, X):
        self._check_fitted()
        return self.classes_[self.net_.predict(_as_image_batch(X))]

    def _check_fitted(self):
        if not hasattr(self, "net_"):
            raise ValidationError("classifier is not fitted")


class DreamStylizer(BaseEstimator, TransformerMixin):
    """Gradient-ascent stylization as a transformer.

    In guided mode, fit(guide_image) extracts and stores the guide features;
    in free mode fit is a no-op. transform() dreams each input image.
    """

    def __init__(self, model=None, mode="free", layer_id="L3",
                 objective="dot_max", iterations=10, octaves=1,
                 octave_scale=1.4, step_size=1.5, patch_size=1, jitter=2,
                 seed=0):
        self.model = model
        self.mode = mode
        self.layer_id = layer_id
        self.objective = objective
        self.iterations = iterations
        self.octaves = octaves
        self.octave_scale = octave_scale
        self.step_size = step_size
        self.patch_size = patch_size
        self.jitter = jitter
        self.seed = seed

    def _recipe(self):
        return DreamRecipe(
            model=self.model if isinstance(self.model, str) else None,
            mode=self.mode, layer_id=self.layer_id, objective=self.objective,
            iterations=self.iterations, octaves=self.octaves,
            octave_scale=self.octave_scale, step_size=self.step_size,
            patch_size=self.patch_size, jitter=self.jitter, seed=self.seed,
        )

    def _resolve_model(self):
        if isinstance(self.model, ArtNet):
            return self.model
        if isinstance(self.model, str):
            return load_weights(self.model)
        raise ValidationError("model must be an ArtNet or a weight-file path")

    def fit(self, X=None, y=None):
        self.model_ = self._resolve_model()
        self.guide_features_ = None
        if self.mode == "guided":
            if X is None:
                raise ValidationError("guided stylizer needs the guide image as X")
            guide = np.asarray(X, dtype=np.float32)
            if guide.ndim == 4:
                if len(guide) != 1:
                    raise ValidationError("guided fit takes exactly one guide image")
                guide = guide[0]
            check_image(guide, "guide image")
            self.guide_features_ = extract_guide_features(
                self.model_, guide, self.layer_id, self.patch_size
            )
        return self

    def transform(self, X):
        if not hasattr(self, "model_"):
            self.fit(None if self.mode == "free" else X)
        batch = _as_image_batch(X)
        recipe = self._recipe()
        out = np.stack([
            run_dream(recipe, img, model=self.model_,
                      guide_features=self.guide_features_)
            for img in batch
        ])
        return out if np.asarray(X).ndim == 4 else out[0]


class PainterlyRenderer(BaseEstimator, TransformerMixin):
    """Stroke renderer as a stateless transformer.

    background="source" composites over the input image (the video pipeline
    default); background="gray" uses a neutral canvas.
    """

    def __init__(self, k=12, passes=2, lengths=((26.0, 40.0), (8.0, 14.0)),
                 widths=((13.0, 20.0), (3.5, 6.0)), density=(8.0, 24.0),
                 position_noise=1.0, angle_noise=0.25, error_threshold=0.08,
                 background="gray", seed=0):
        self.k = k
        self.passes = passes
        self.lengths = lengths
        self.widths = widths
        self.density = density
        self.position_noise = position_noise
        self.angle_noise = angle_noise
        self.error_threshold = error_threshold
        self.background = background
        self.seed = seed

    def _params(self):
        return RenderParams(
            k=self.k, passes=self.passes, lengths=self.lengths,
            widths=self.widths, density=self.density,
            position_noise=self.position_noise, angle_noise=self.angle_noise,
            error_threshold=self.error_threshold, seed=self.seed,
        )

    def fit(self, X=None, y=None):
        self.params_ = self._params()  # surface bad configurations at fit time
        return self

    def transform(self, X):
        if self.background not in ("gray", "source"):
            raise ValidationError("background must be 'gray' or 'source'")
        batch = _as_image_batch(X)
        params = self._params()
        out = np.stack([
            render(img, params,
                   background=img if self.background == "source" else None)
            for img in batch
        ])
        return out if np.asarray(X).ndim == 4 else out[0]
