"""Loudness-dynamics modeling of ensemble performances.

The package turns symbolic scores into time-by-feature matrices of
score descriptors, measures perceptual loudness of recordings, learns
predictors mapping score descriptors to normalized loudness, and
explains differences between two performances of one piece through
gradient-based contribution graphs.
"""

__version__ = "0.1.0"

from .score import Score, PartScore, NoteEvent, Pitch, DynamicMarking, parse_score, score_onsets
from .basis import BasisId, BasisMatrix, BasisStats, build_basis_matrix, standardize
from .loudness import AudioBuffer, LoudnessCurve, AlignmentMap, TargetCurve, k_weighting, momentary_loudness, normalize_curve, sample_at_score_times
from .models import TrainConfig, TrainedModel, train, predict, fit_to_performance, mse_loss, save_model, load_model
from .evaluate import MetricReport, r_squared, pearson_r, loo_cross_validation
from .sensitivity import SensitivityGraph, SDGraph, input_gradients, sensitivity_graph, sd_graph, rank_influential, render_heatmap

__all__ = [
    "Score", "PartScore", "NoteEvent", "Pitch", "DynamicMarking",
    "parse_score", "score_onsets",
    "BasisId", "BasisMatrix", "BasisStats", "build_basis_matrix", "standardize",
    "AudioBuffer", "LoudnessCurve", "AlignmentMap", "TargetCurve",
    "k_weighting", "momentary_loudness", "normalize_curve", "sample_at_score_times",
    "TrainConfig", "TrainedModel", "train", "predict", "fit_to_performance",
    "mse_loss", "save_model", "load_model",
    "MetricReport", "r_squared", "pearson_r", "loo_cross_validation",
    "SensitivityGraph", "SDGraph", "input_gradients", "sensitivity_graph",
    "sd_graph", "rank_influential", "render_heatmap",
]
