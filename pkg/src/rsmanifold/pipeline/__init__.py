"""Data containers, file I/O, synthetic scenes, classification and the CLI."""

from .classify import EvalReport, evaluate, knn_classify
from .cube import HsiCube, LabelRaster, check_companion, first_n_split
from .envi import read_envi, read_labels, write_envi, write_labels
from .synth import synth_detection, synth_hsi

__all__ = ["EvalReport", "evaluate", "knn_classify", "HsiCube", "LabelRaster",
           "check_companion", "first_n_split", "read_envi", "read_labels", "write_envi",
           "write_labels", "synth_detection", "synth_hsi"]
