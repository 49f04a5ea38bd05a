from .engine import dock_and_score
from .oracle import OracleLimitError, exhaustive_dock
from .pocket import PocketError, build_pocket, chem_score, geo_score, read_pocket, write_pocket
from .search import (
    cluster_and_select,
    cluster_assignments,
    fibonacci_axes,
    flatten,
    initial_poses,
    local_search,
    materialize,
)
from .types import DockResult, Pose, ScoringConfig

__all__ = [
    "DockResult",
    "OracleLimitError",
    "PocketError",
    "Pose",
    "ScoringConfig",
    "build_pocket",
    "chem_score",
    "cluster_and_select",
    "cluster_assignments",
    "dock_and_score",
    "exhaustive_dock",
    "fibonacci_axes",
    "flatten",
    "geo_score",
    "initial_poses",
    "local_search",
    "materialize",
    "read_pocket",
    "write_pocket",
]
