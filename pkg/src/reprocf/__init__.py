"""Predict binary reproducibility matrices with ALS under file-creation-order constraints."""

from .evaluate import ConfusionCounts, MetricsRecord, confusion, dummy_predict, metrics
from .experiment import DatasetSource, ExperimentConfig, ResultRow, hyper_study, roc_table, run_cell, sweep
from .factorize import AlsConfig, FactorModel, fit_als, predict_binary, predict_cell, solve_entity
from .matrix import (
    CellMask,
    UtilityMatrix,
    load_mask_csv,
    load_matrix_csv,
    save_mask_csv,
    save_matrix_csv,
    training_ratio,
    validate_time_constraint,
)
from .render import render_matrix, render_overlay
from .sampling import Method, SamplingSpec, sample_mask
from .synthgen import SyntheticSpec, generate_synthetic, type_pattern

__version__ = "0.1.0"
