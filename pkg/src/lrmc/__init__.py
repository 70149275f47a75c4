"""Low-rank matrix completion on sparse bipartite observation graphs.

Two alternating least-squares solvers (per-vertex and per-directed-edge
message passing), ratio/walk diagnostics for the rank-1 contraction
mechanism, and an experiment harness with a CLI front end.
"""

from .graph import (
    BipartiteGraph,
    DualGraph,
    GraphError,
    build_dual_graph,
    diameter,
    gen_er_edges,
    gen_random_regular_bipartite,
    is_connected,
    max_degree,
    read_edge_list,
    union,
    write_edge_list,
)
from .instance import (
    InitSpec,
    Instance,
    InstanceView,
    gen_rank1_instance,
    gen_rank_r_instance,
    gen_split_instance,
    make_init,
    make_instance,
    read_instance,
    write_instance,
)
from .metrics import MetricReport, metric_report, objective, rms, spread, subspace_distance
from .solver import (
    FactorState,
    MessageState,
    SolveConfig,
    SolveError,
    Trace,
    els_collapse,
    els_edge_solve,
    els_iterate,
    read_factor_state,
    read_trace_csv,
    run,
    vls_iterate,
    vls_vertex_solve,
    write_factor_state,
    write_trace_csv,
)
from .analysis import (
    AnalysisError,
    DiagnosticRun,
    EntryBoundReport,
    RatioVectors,
    TransitionMatrix,
    contraction_trace,
    diagnose,
    extract_transition_matrix,
    ratio_vectors,
    read_diagnostics_csv,
    verify_entry_lower_bound,
    window_product,
    write_diagnostics_csv,
)

__version__ = "0.1.0"
