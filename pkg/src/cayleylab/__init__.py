"""cayleylab: exact lazy random walks on finitely generated groups.

Computes n-step distributions by sparse exact convolution, the derived
observables (return probability, entropy, speed, off-diagonal profiles), an
explicit equivariant-cocycle compression lower bound, and a machine-checked
suite of inequalities among the walk exponents.
"""

__version__ = "0.1.0"

from .balls import BallTable, compute_ball
from .compression import (CocycleConfig, CocycleProfile, CompressionEstimate,
                          cocycle_norm_sq, cocycle_weights,
                          compression_bound_predicted, compression_profile,
                          select_step)
from .errors import (BudgetError, CacheError, CayleyLabError, ConfigError,
                     GroupError, TraceError)
from .exponents import (CheckResult, ExponentFit, SubadditiveSeries, concave_hull,
                        exponent_chain_report, fit_exponents)
from .groups import Family, GroupSpec, parse_group
from .homs import Homomorphism, pushforward_hom
from .measures import SparseMeasure, convolve, delta, lazy_step_measure
from .observables import (ObservableSeries, displacement_norm_sq, entropy,
                          gradient_norm_sq, off_diagonal_profile, speed)
from .verify import run_verify
from .walks import WalkTrace, cache_load, cache_store, sample_speed, walk_sequence

__all__ = [
    "BallTable", "BudgetError", "CacheError", "CayleyLabError", "CheckResult",
    "CocycleConfig", "CocycleProfile", "CompressionEstimate", "ConfigError",
    "ExponentFit", "Family", "GroupError", "GroupSpec", "Homomorphism",
    "ObservableSeries", "SparseMeasure", "SubadditiveSeries", "TraceError",
    "WalkTrace", "cache_load", "cache_store", "cocycle_norm_sq",
    "cocycle_weights", "compression_bound_predicted", "compression_profile",
    "compute_ball", "concave_hull", "convolve", "delta", "displacement_norm_sq",
    "entropy", "exponent_chain_report", "fit_exponents", "gradient_norm_sq",
    "lazy_step_measure", "off_diagonal_profile", "parse_group",
    "pushforward_hom", "run_verify", "sample_speed", "select_step", "speed",
    "walk_sequence",
]
