"""Stable multi-matchings and other stub-matching schemes on Poisson point sets."""

from .analysis import (
    ComponentReport,
    CubeGrid,
    EdgeLengthStats,
    SweepConfig,
    TransportLedger,
    UnionFind,
    components,
    cube_diagnostic,
    edge_length_stats,
    locally_maximal_edges,
    percolation_sweep,
    transport_balance,
)
from .errors import (
    ContractError,
    DegreeSpecError,
    FormatError,
    InfeasibleSchemeError,
    UnsupportedDimensionError,
)
from .estimators import (
    ConnectivityMatching,
    FiniteComponentMatching,
    InfinitePathMatching,
    StableMultiMatching,
)
from .geometry import BoxSpec, PointSet, SpatialIndex, build_index, distance, nearest
from .matching import (
    ForbiddenPairs,
    Matching,
    MatchResult,
    mutually_closest_pairs,
    stable_bipartite_match,
    stable_multi_match,
    stable_multi_match_rounds,
    verify_stability,
)
from .process import (
    DegreeDistribution,
    MarkedPointSet,
    parse_degree_spec,
    sample_degrees,
    sample_instance,
    sample_poisson,
)
from .schemes import (
    ConeForest,
    PartialMatchingPlan,
    TypeAssignment,
    cone_forest,
    connectivity_scheme,
    dfs_path_order,
    finite_component_scheme,
    infinite_path_scheme,
    mass_bound_check,
    partition_by_nn_rank,
    plan_partial_matching,
)
from .svg import render_svg

__version__ = "0.1.0"
