"""Automated scene-structure, realism, likelihood and detection metrics."""
from .ap import DEFAULT_THRESHOLDS, average_precision, average_precision_dataset, iou_matrix
from .classifier import ClassifierMissing, PatchCNN, load_classifier, save_classifier, train_patch_classifier
from .detect import DetectedObject, DetectedScene, detect_and_classify, structure_accuracy
from .dsteps import Discriminator, discriminability, noise_stream, pool_stream
from .iwae import NonFiniteWeight, ToyMixture, log_likelihood_iwae
from .probe import NoActiveCells, probe_accuracy, what_probe
from .report import METRICS, EvalReport, evaluate, parse_metrics

__all__ = [
    "ClassifierMissing", "DEFAULT_THRESHOLDS", "DetectedObject", "DetectedScene", "Discriminator", "EvalReport",
    "METRICS", "NoActiveCells", "NonFiniteWeight", "PatchCNN", "ToyMixture", "average_precision",
    "average_precision_dataset", "detect_and_classify", "discriminability", "evaluate", "iou_matrix",
    "load_classifier", "log_likelihood_iwae", "noise_stream", "parse_metrics", "pool_stream", "probe_accuracy",
    "save_classifier", "structure_accuracy", "train_patch_classifier", "what_probe",
]
