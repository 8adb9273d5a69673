"""Adapt Euclidean Steiner trees to perturbed terminal positions.

Given a tree at a fixed-topology optimum, the sensitivity matrix maps a
terminal displacement to the first-order Steiner displacement; stepwise
application handles large moves. An exact small-instance solver provides
ground truth for verification.
"""

from .adaptation import (
    AdaptationMode,
    AdaptationReport,
    AdaptationStatus,
    HealthReport,
    Perturbation,
    StepPolicy,
    StepRecord,
    adapt_single,
    adapt_stepwise,
    first_order_delta_s,
    health_metrics,
    sensitivity_matrix,
)
from .derivatives import (
    BlockMatrix2,
    EdgeTerm,
    EdgeTermKind,
    cost,
    edge_projection,
    edge_terms,
    gradient_s,
    hessian_ss,
    mixed_ts,
)
from .errors import (
    DegenerateEdgeError,
    DocumentError,
    IllConditionedError,
    SteinerAdaptError,
    UsageError,
)
from .exact import (
    ExactSolveResult,
    FullTopology,
    OptimizeResult,
    canonical_encoding,
    compare_topologies,
    enumerate_full_topologies,
    optimize_fixed_topology,
    solve_exact,
)
from .trees import (
    COINCIDENT_THRESHOLD,
    GeometricConditionReport,
    NodeKind,
    NodeRef,
    Point2,
    SteinerTopology,
    SteinerTree,
    TopologyValidation,
    check_geometric_conditions,
    min_edge_length,
    steiner_forest_components,
    tree_length,
    validate_topology,
)

__all__ = [
    "AdaptationMode",
    "AdaptationReport",
    "AdaptationStatus",
    "BlockMatrix2",
    "COINCIDENT_THRESHOLD",
    "DegenerateEdgeError",
    "DocumentError",
    "EdgeTerm",
    "EdgeTermKind",
    "ExactSolveResult",
    "FullTopology",
    "GeometricConditionReport",
    "HealthReport",
    "IllConditionedError",
    "NodeKind",
    "NodeRef",
    "OptimizeResult",
    "Perturbation",
    "Point2",
    "StepPolicy",
    "StepRecord",
    "SteinerAdaptError",
    "SteinerTopology",
    "SteinerTree",
    "TopologyValidation",
    "UsageError",
    "adapt_single",
    "adapt_stepwise",
    "canonical_encoding",
    "check_geometric_conditions",
    "compare_topologies",
    "cost",
    "edge_projection",
    "edge_terms",
    "enumerate_full_topologies",
    "first_order_delta_s",
    "gradient_s",
    "health_metrics",
    "hessian_ss",
    "min_edge_length",
    "mixed_ts",
    "optimize_fixed_topology",
    "sensitivity_matrix",
    "solve_exact",
    "steiner_forest_components",
    "tree_length",
    "validate_topology",
]
