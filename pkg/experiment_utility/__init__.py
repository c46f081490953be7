"""
Beam Management Experiment Utility Package

Command-line driver for the closed loop: generate datasets, train
predictors, evaluate them against the baselines, run the experiment
matrix and turn the results into tables.

Usage:
    python -m experiment_utility generate-data --config configs/sbp2.json
    python -m experiment_utility train --config configs/sbp2.json --dataset data/datasets/SBP2_16_64.jsonl
    python -m experiment_utility evaluate --config configs/sbp2.json --weights data/weights/SBP2_16_64.json
    python -m experiment_utility matrix --config configs/base.json --preset sbp-sweep --preset tbp-sweep
"""

__version__ = "1.0.0"

from .config import ExperimentPaths
from .matrix import PRESETS, build_matrix
from .report import write_report
from .runner import main

__all__ = ["ExperimentPaths", "PRESETS", "build_matrix", "write_report", "main"]
