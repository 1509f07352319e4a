"""Self-affine measures on Lalley-Gatzouras carpets: word combinatorics,
dimension solvers, anti-chain constructions and empirical quantization."""

from .carpet_model import (
    BudgetExceededError,
    CarpetError,
    CarpetSpec,
    CarpetValidationError,
    NumericError,
    PreconditionError,
    bedford_mcmullen,
    derived_constants,
    load_spec,
    moments,
    validate,
)
from .words import SplitWord, format_word, parse_word

__version__ = "0.1.0"

__all__ = [
    "BudgetExceededError",
    "CarpetError",
    "CarpetSpec",
    "CarpetValidationError",
    "NumericError",
    "PreconditionError",
    "SplitWord",
    "bedford_mcmullen",
    "derived_constants",
    "format_word",
    "load_spec",
    "moments",
    "parse_word",
    "validate",
]
