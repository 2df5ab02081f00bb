"""Bit-faithful model of a streaming fixed-point HOG+SVM pedestrian detector.

The fixed-point path reproduces the hardware datapath value-for-value:
shift-add gradient magnitude, tangent-comparison orientation binning with
uniform bin splitting, two-pass L2-hys normalization built on the
0x5F3759DF inverse square root, and block-streamed linear SVM scoring of
64x128 windows. The oracle path recomputes every stage in exact floating
point so each approximation can be measured in isolation.
"""

from .detector import Detection, detect_frame, nms
from .fixedpoint import DEFAULT_PROFILE, Fx, FxFormat, PrecisionProfile, SaturationStats
from .oracle import compare_paths
from .stream import Frame
from .svm import SvmModel, load_model, save_model
from .trainer import FloatModel, quantize_model, train

__all__ = [
    "Detection",
    "detect_frame",
    "nms",
    "DEFAULT_PROFILE",
    "Fx",
    "FxFormat",
    "PrecisionProfile",
    "SaturationStats",
    "compare_paths",
    "Frame",
    "SvmModel",
    "load_model",
    "save_model",
    "FloatModel",
    "quantize_model",
    "train",
]

__version__ = "0.1.0"
