"""k-means quantization with stability functionals and margin conditions."""

from .geometry import (
    TOL_GEO,
    Codebook,
    bisector_margin,
    frontier_distance,
    in_A_lambda,
    lambda_max,
    nn_assign,
)
from .measures import (
    DiscreteMeasure,
    NamedDistribution,
    custom_mixture,
    from_samples,
    grid_discretize,
    load,
    sample,
    store,
    two_segments,
    uniform_rectangle,
)
from .quantize import (
    LloydConfig,
    SolveResult,
    centroid,
    exact_optimal_1d,
    exact_optimal_enum,
    lloyd,
    risk,
    solve,
)
from .stability import (
    MarginProfile,
    StabilityReport,
    a_mass,
    bigF_squared,
    c_q_lambda,
    certified_margin,
    f1,
    f2,
    hausdorff,
    lambda_n,
    margin_profile,
    p_of_t,
    p_star,
    stability_report,
)

__version__ = "0.1.0"

__all__ = [
    "a_mass",
    "bigF_squared",
    "bisector_margin",
    "c_q_lambda",
    "centroid",
    "certified_margin",
    "Codebook",
    "custom_mixture",
    "DiscreteMeasure",
    "exact_optimal_1d",
    "exact_optimal_enum",
    "f1",
    "f2",
    "from_samples",
    "frontier_distance",
    "grid_discretize",
    "hausdorff",
    "in_A_lambda",
    "lambda_max",
    "lambda_n",
    "lloyd",
    "LloydConfig",
    "load",
    "margin_profile",
    "MarginProfile",
    "NamedDistribution",
    "nn_assign",
    "p_of_t",
    "p_star",
    "risk",
    "sample",
    "solve",
    "SolveResult",
    "stability_report",
    "StabilityReport",
    "store",
    "TOL_GEO",
    "two_segments",
    "uniform_rectangle",
]
