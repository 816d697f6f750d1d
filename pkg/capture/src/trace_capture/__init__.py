"""Trace capture adapter: records masked-diffusion sampling runs into the
line-delimited trace format the stdd harness replays."""

from .capture import CaptureSession, capture
from .predictor import CaptureSetupError, MaskPredictor, ToyDiffusionModel, load_predictor

__version__ = "0.1.0"
