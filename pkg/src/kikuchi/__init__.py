"""Region-graph free energy minimization for discrete graphical models.

Build a region graph over a factor model, pick a bound variant, and descend
the Kikuchi/Bethe free energy with a guaranteed-descent double loop whose
inner problems are solved by generalized belief propagation.
"""
from .bounds import (
    VARIANTS,
    Allocation,
    BoundSpec,
    ConvexityError,
    check_conv2_bound,
    check_convex_over_constraints,
    inner_potentials,
    make_bound_spec,
)
from .cli import ExperimentConfig, main
from .doubleloop import (
    DescentError,
    OuterRecord,
    OuterSettings,
    RunTrace,
    compare,
    iterations_to_reach,
    minimize,
    trace_metadata,
    write_trace_csv,
    write_trace_json,
)
from .energy import (
    Beliefs,
    bound_free_energy,
    free_energy,
    kikuchi_free_energy,
    kl_marginals,
    random_consistent_beliefs,
    uniform_beliefs,
)
from .model import (
    CLAMP_LOG,
    FactorModel,
    ModelFormatError,
    ModelSpec,
    generate,
    load,
    outer_log_potentials,
    save,
)
from .oracle import ExactResult, OracleLimitError, exact_inference
from .propagation import (
    ConfigurationError,
    InnerSettings,
    MessageSet,
    active_subsets,
    constraint_residual,
    run_gbp,
)
from .regions import (
    GraphError,
    Region,
    RegionGraph,
    Variable,
    build_bethe,
    build_cvm,
    is_singly_connected,
    load_region_graph,
    per_variable_counting_sums,
    recompute_overcounts,
    save_region_graph,
)

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "Beliefs",
    "BoundSpec",
    "CLAMP_LOG",
    "ConfigurationError",
    "ConvexityError",
    "DescentError",
    "ExactResult",
    "ExperimentConfig",
    "FactorModel",
    "GraphError",
    "InnerSettings",
    "MessageSet",
    "ModelFormatError",
    "ModelSpec",
    "OracleLimitError",
    "OuterRecord",
    "OuterSettings",
    "Region",
    "RegionGraph",
    "RunTrace",
    "VARIANTS",
    "Variable",
    "active_subsets",
    "bound_free_energy",
    "build_bethe",
    "build_cvm",
    "check_conv2_bound",
    "check_convex_over_constraints",
    "compare",
    "constraint_residual",
    "exact_inference",
    "free_energy",
    "generate",
    "inner_potentials",
    "is_singly_connected",
    "iterations_to_reach",
    "kikuchi_free_energy",
    "kl_marginals",
    "load",
    "load_region_graph",
    "main",
    "make_bound_spec",
    "minimize",
    "outer_log_potentials",
    "per_variable_counting_sums",
    "random_consistent_beliefs",
    "recompute_overcounts",
    "run_gbp",
    "save",
    "save_region_graph",
    "trace_metadata",
    "uniform_beliefs",
    "write_trace_csv",
    "write_trace_json",
]
