"""Obstruction grading for sewer inspection footage.

The package covers the full loop: selecting stable frames from raw CCTV
sequences, training a small CNN on 150x150 crops, explaining its verdicts
with relevance heatmaps, scoring whole videos by majority vote, and
running the triage service that routes inspections to cleaning crews or
human review.
"""

from . import lrp
from .checkpoint import ModelCheckpoint, load_checkpoint, save_checkpoint
from .dataset import (
    MergedLabel,
    RawLabel,
    VideoRecord,
    assemble_image_dataset,
    merge_classes,
    merge_label,
    read_manifest,
    split_by_video,
    undersample,
    write_manifest,
)
from .evaluation import classify_video, confusion_matrix, evaluation_report
from .frames import FrameSequence, StableSegment, load_frames, process_sequence
from .lrp import RelevanceMap, explain_video, render_heatmap
from .model import Prediction, SewerNet, build_sewernet, predict, predict_batch
from .service import TriageRules, TriageService, triage
from .synthetic import SyntheticSpec, generate_dataset, render_video
from .training import TrainConfig, TrainReport, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "ModelCheckpoint",
    "save_checkpoint",
    "load_checkpoint",
    "RawLabel",
    "MergedLabel",
    "VideoRecord",
    "read_manifest",
    "write_manifest",
    "merge_label",
    "merge_classes",
    "undersample",
    "split_by_video",
    "assemble_image_dataset",
    "classify_video",
    "confusion_matrix",
    "evaluation_report",
    "FrameSequence",
    "StableSegment",
    "load_frames",
    "process_sequence",
    "RelevanceMap",
    "lrp",
    "explain_video",
    "render_heatmap",
    "SewerNet",
    "Prediction",
    "build_sewernet",
    "predict",
    "predict_batch",
    "TriageService",
    "TriageRules",
    "triage",
    "SyntheticSpec",
    "render_video",
    "generate_dataset",
    "TrainConfig",
    "TrainReport",
    "train",
    "evaluate",
    "__version__",
]
