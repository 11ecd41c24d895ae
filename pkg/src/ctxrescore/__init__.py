"""Detection post-processing toolkit: AP evaluation, AP-maximizing rescoring
targets, detection error analysis, and a learned contextual rescorer that
reassigns confidences using only confidences, classes and box geometry."""

from .boxes import BBox, CategoryTable, Detection, GroundTruth, ImageRecord, iou, iou_matrix
from .checkpoint import load_checkpoint, save_checkpoint
from .cooccurrence import CooccurrenceMatrix, cooccurrence_matrix
from .errors import ERROR_CATEGORIES, ErrorBreakdown, classify_detections, confidence_shares
from .estimator import ContextualRescorer
from .evaluation import ApReport, EvalParams, PRCurve, evaluate, interpolate_precision, match_for_ap
from .features import MAX_SEQ_LEN, FeatureSequence, extract_features
from .io import load_annotations, load_detections, save_annotations, save_detections
from .matching import (
    Matching,
    TargetConfig,
    apply_targets,
    assign_targets,
    greedy_match_by_confidence,
    greedy_match_by_overlap,
    target_ap_report,
)
from .network import ModelConfig, attention, backward, forward, init_params, sequence_loss
from .optim import AdamState, adam_step
from .ranking import RankEntry, rank_images
from .synth import SynthParams, brute_force_best_ap, generate_dataset, generate_scene
from .training import TrainConfig, TrainResult, rescore_dataset, shuffle_augment, train_loop

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "CategoryTable",
    "Detection",
    "GroundTruth",
    "ImageRecord",
    "iou",
    "iou_matrix",
    "load_annotations",
    "load_detections",
    "save_annotations",
    "save_detections",
    "EvalParams",
    "PRCurve",
    "ApReport",
    "evaluate",
    "interpolate_precision",
    "match_for_ap",
    "Matching",
    "TargetConfig",
    "greedy_match_by_overlap",
    "greedy_match_by_confidence",
    "assign_targets",
    "apply_targets",
    "target_ap_report",
    "ERROR_CATEGORIES",
    "ErrorBreakdown",
    "classify_detections",
    "confidence_shares",
    "CooccurrenceMatrix",
    "cooccurrence_matrix",
    "MAX_SEQ_LEN",
    "FeatureSequence",
    "extract_features",
    "ModelConfig",
    "init_params",
    "forward",
    "backward",
    "attention",
    "sequence_loss",
    "save_checkpoint",
    "load_checkpoint",
    "AdamState",
    "adam_step",
    "TrainConfig",
    "TrainResult",
    "train_loop",
    "rescore_dataset",
    "shuffle_augment",
    "ContextualRescorer",
    "SynthParams",
    "generate_scene",
    "generate_dataset",
    "brute_force_best_ap",
    "RankEntry",
    "rank_images",
]
