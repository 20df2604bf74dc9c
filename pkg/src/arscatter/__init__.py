"""arscatter: robust Toeplitz/AR scatter-matrix estimation for
compound-Gaussian radar clutter, with adaptive detection and a Monte-Carlo
evaluation harness."""

__version__ = "0.1.0"

from .ar import (ARCoefficients, ReflectionParams, ar_spectrum, levinson,
                 reflection_to_autocov, reflection_to_scatter)
from .errors import ArScatterError, ConfigError, NumericalError
from .estimators import (ALL_ESTIMATORS, EstimatorKind, estimate_scatter,
                         parse_estimator)
from .geometry import (AggregationResult, euclidean_median, poincare_distance,
                       poincare_mean, poincare_median)
from .linalg import spd_affine_distance, trace_normalize
from .simulation import (Burst, DriftSpec, ScenarioConfig, TextureLaw,
                         build_burst, build_transition_scene, inject_target,
                         sample_speckle, sample_texture)

__all__ = [
    "__version__",
    "ARCoefficients", "ReflectionParams", "ar_spectrum", "levinson",
    "reflection_to_autocov", "reflection_to_scatter",
    "ArScatterError", "ConfigError", "NumericalError",
    "ALL_ESTIMATORS", "EstimatorKind", "estimate_scatter", "parse_estimator",
    "AggregationResult", "euclidean_median", "poincare_distance",
    "poincare_mean", "poincare_median",
    "spd_affine_distance", "trace_normalize",
    "Burst", "DriftSpec", "ScenarioConfig", "TextureLaw", "build_burst",
    "build_transition_scene", "inject_target", "sample_speckle",
    "sample_texture",
]
