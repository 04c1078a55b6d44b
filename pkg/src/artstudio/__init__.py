"""artstudio: dream-style image/video stylization plus the rating-study
service and statistics used to evaluate the output with human observers."""

from .artnet import ArtNet, LabelTree, ModelSpec, TileRecord, TrainConfig
from .dream import DreamRecipe, GuideFeatures, run_dream
from .errors import DataFormatError, StudioError, ValidationError
from .estimators import ArtStyleClassifier, DreamStylizer, PainterlyRenderer
from .motionlab import FrameSequence, RetimeSpec, retime, stylize_sequence
from .painterly import Palette, RenderParams, render
from .psychstats import RatingRecord, TTestResult, paired_t, t_two_sided_p

__version__ = "0.1.0"

__all__ = [
    "ArtNet", "ArtStyleClassifier", "DataFormatError", "DreamRecipe",
    "DreamStylizer", "FrameSequence", "GuideFeatures", "LabelTree",
    "ModelSpec", "Palette", "PainterlyRenderer", "RatingRecord",
    "RenderParams", "RetimeSpec", "StudioError", "TTestResult", "TileRecord",
    "TrainConfig", "ValidationError", "paired_t", "render", "retime",
    "run_dream", "stylize_sequence", "t_two_sided_p",
]
