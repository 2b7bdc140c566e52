"""Shallow sigmoid networks trained by KPI-driven backpropagation or a variant particle swarm."""

__version__ = "0.1.0"

from .metrics import ConfusionCounts, KpiReport, auc_roc, confusion, kpi_suite, mean_error
from .network import (SnnModel, decode_particle, dimension_count, encode_particle, feedforward,
                      gradients, sigmoid)
from .pdbp import PdbpConfig, TrainedResult, pdbp_step, train_pdbp
from .vpso import VpsoConfig, optimize_vpso

__all__ = [
    "ConfusionCounts", "KpiReport", "PdbpConfig", "SnnModel", "TrainedResult", "VpsoConfig",
    "auc_roc", "confusion", "decode_particle", "dimension_count", "encode_particle", "feedforward",
    "gradients", "kpi_suite", "mean_error", "optimize_vpso", "pdbp_step", "sigmoid", "train_pdbp",
]
