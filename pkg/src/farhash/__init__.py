"""Approximate furthest neighbor search with data-dependent projection hashing."""

from .baselines import QdafnIndex, brute_force_search, qdafn_build, qdafn_search
from .drusilla import (
    DrusillaIndex,
    ProjectionStats,
    ProjectionTable,
    drusilla_build,
    drusilla_search,
    projection_stats,
)
from .eval import AlgoSpec, ApproxStats, BenchReport, RankRecord, approx_stats, bench, error_runtime_sweep, rank_analysis
from .guaranteed import GuaranteedIndex, guaranteed_build, guaranteed_search
from .points import (
    CenteredPointSet,
    NeighborList,
    PointSet,
    euclidean,
    gen_gaussian_mixture,
    gen_uniform_ball,
    load_points,
    mean_center,
    save_points,
    topk_update,
)

__version__ = "0.1.0"
