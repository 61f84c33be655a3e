"""Exact on/off detection statistics of Gaussian photonic circuits.

The core works with covariance matrices and displacement vectors; click
probabilities come from signed vacuum overlaps, so no photon-number
truncation is involved. A truncated Fock simulator is kept as an oracle.
"""
from .clicks import DetectorSpec, Evaluation, Outcome, evaluate_pattern, pattern_probability
from .errors import InvalidArgument, NumericalDegeneracy, UndefinedVisibility
from .gaussian import GaussianState

__all__ = [
    "DetectorSpec",
    "Evaluation",
    "GaussianState",
    "InvalidArgument",
    "NumericalDegeneracy",
    "Outcome",
    "UndefinedVisibility",
    "evaluate_pattern",
    "pattern_probability",
]
