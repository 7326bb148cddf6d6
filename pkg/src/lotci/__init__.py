"""Local optimization-based tests and confidence intervals."""

from .core import (
    CiResult,
    InferenceError,
    Model,
    PValueResult,
    bootstrap_pvalue,
    hybrid_bootstrap_ci,
    is_ci,
    is_ci_upper,
    is_objective,
    is_pvalue_design,
    is_pvalue_refined,
    m_out_of_n_ci,
    nb_ci,
    nb_pvalue,
    sample_quantile,
    weighted_quantile,
)
from .design import (
    Constraint,
    Region,
    TryDesign,
    UnitDesign,
    build_try_design,
    filter_feasible,
    grid_design,
    lhd_design,
    map_to_region,
)
from .streams import Streams

__version__ = "0.1.0"
