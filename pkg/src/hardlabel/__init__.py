"""Extraction of ReLU networks from hard-label (decision-only) query access."""
from .boundary import BoundaryPoint, SearchConfig, collect_boundary_points, find_boundary
from .extraction import (AttackConfig, AttackResult, ExtractionCandidate, FilterConfig, InsufficientDataError,
                         count_max_patterns, pmr, run_attack)
from .linalg import CompareConfig, DegenerateSystemError, solve, vectors_equal
from .model import (Architecture, HardLabelOracle, ModelParameters, ShapeError, UnsupportedArchitectureError,
                    affine_for_pattern, forward, forward_batch, from_two_logits, hard_label, load_model, model_signature,
                    normalize_tuple, save_model)
from .recovery import RecoveredTuple, RecoveryConfig, dedup_tuples, recover_all, recover_at
from .verification import EquivalenceReport, align, error_bound, estimate_scale, theoretical_parameters, verify

__version__ = "0.1.0"

__all__ = [
    "Architecture", "AttackConfig", "AttackResult", "BoundaryPoint", "CompareConfig", "DegenerateSystemError",
    "EquivalenceReport", "ExtractionCandidate", "FilterConfig", "HardLabelOracle", "InsufficientDataError",
    "ModelParameters", "RecoveredTuple", "RecoveryConfig", "SearchConfig", "ShapeError",
    "UnsupportedArchitectureError", "affine_for_pattern", "align", "collect_boundary_points",
    "count_max_patterns", "dedup_tuples", "error_bound", "estimate_scale", "find_boundary", "forward",
    "forward_batch", "from_two_logits", "hard_label", "load_model", "model_signature", "normalize_tuple", "pmr", "recover_all",
    "recover_at", "run_attack", "save_model", "solve", "theoretical_parameters", "vectors_equal", "verify",
]
