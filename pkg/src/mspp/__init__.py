"""Multiscale path planning on dyadic occupancy trees.

The package plans over a recursive halving of a d-dimensional box: maps
become 2**d-ary trees whose nodes carry obstacle-volume fractions, a
per-iteration reduced view keeps cells fine near the walker and coarse far
away, and a lazy A* searches that view.  A map-free mode estimates node
occupancy by sampling an obstacle predicate instead of building the tree,
with Hoeffding-style bounds on the added failure probability.
"""

from .environments import (
    BaselineResult,
    GeneratorSpec,
    GridPredicate,
    generate_map,
    grid_predicate,
    uniform_astar,
)
from .neighbors import (
    all_neighbor_pairs,
    are_neighbors,
    find_containing,
    find_neighbors,
    neighbor_candidates,
)
from .predicates import Checkerboard, Slab, SphereSet, WallWithGap, parse_predicate
from .reduced import CellTracker, ReducedTree, RTNode, refresh, window_far
from .sampling import (
    BoundParams,
    SampleEstimate,
    ValueEstimator,
    band_node_count,
    exact_scale_cutoff,
    failure_bound,
    flag_scale_cutoff,
    is_flagged_obstacle,
    misclassification_bound,
)
from .search import (
    BUDGET_EXCEEDED,
    GOAL_BLOCKED,
    NO_PATH,
    START_BLOCKED,
    SUCCESS,
    CostModel,
    PlanResult,
    PlannerSession,
    SearchStats,
    astar_lazy,
    plan,
    verify_path,
    verify_path_sampled,
)
from .tree import (
    GridWorld,
    NodeIndex,
    OccupancyTree,
    build_from_grid,
    children_of,
    map_text,
    node_bounds2,
    node_volume,
    parent_of,
    parse_map_text,
    read_map,
    write_map,
)

__version__ = "0.1.0"
