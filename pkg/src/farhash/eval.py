"""Approximation measurement, rank-versus-norm analysis and benchmarking.

Benchmarks follow a fixed protocol: shuffle the dataset with
``split_seed + trial``, take 30% of the points as queries and the remaining
70% as references, build and query every algorithm on that split, and score
each result against the exact brute-force answer. Setup (centering and index
construction) and search are timed separately; loading the data is not timed.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from .baselines import brute_force_search, default_budget, qdafn_build, qdafn_search
from .drusilla import DEFAULT_ANGLE_THRESHOLD, drusilla_build, drusilla_search
from .guaranteed import guaranteed_build, guaranteed_search
from .points import NeighborList, PointSet, center_with, mean_center, pairwise_distances, row_norms

ALGORITHMS = ("brute", "drusilla", "guaranteed", "qdafn")
EXACT_ALGORITHMS = frozenset({"brute"})
QUERY_FRACTION = 0.3

BENCH_HEADER = [
    "algorithm", "l", "m", "budget", "setup_s", "search_s", "candidates", "mean_eps", "max_eps",
]
RANK_HEADER = ["ref_id", "norm", "avg_rank"]


# ---------------------------------------------------------------------------
# Approximation ratio
# ---------------------------------------------------------------------------


@dataclass
class ApproxStats:
    """Ratios ``true distance / returned distance``, slot by slot.

    ``per_query_ratio[q][i]`` compares the i-th true furthest neighbor of
    query ``q`` with the i-th returned one; it is ``inf`` when the returned
    distance is zero (or the slot is missing) while the true one is not.
    Infinite ratios are tallied in ``infinite_count`` and left out of the
    epsilon summaries.
    """

    per_query_ratio: list[list[float]]
    mean_epsilon: float
    max_epsilon: float
    infinite_count: int


def approx_stats(exact: Sequence[NeighborList], approx: Sequence[NeighborList]) -> ApproxStats:
    if len(exact) != len(approx):
        raise ValueError(f"query count mismatch: {len(exact)} exact vs {len(approx)} approximate")
    per_query: list[list[float]] = []
    finite: list[float] = []
    infinite = 0
    for e, a in zip(exact, approx):
        if e.query_id != a.query_id:
            raise ValueError(f"query id mismatch: {e.query_id} vs {a.query_id}")
        ratios = []
        for i, (_, true_d) in enumerate(e.entries):
            got = a.entries[i][1] if i < len(a.entries) else 0.0
            if got > 0.0:
                ratio = true_d / got
            elif true_d == 0.0:
                ratio = 1.0
            else:
                ratio = math.inf
            if math.isinf(ratio):
                infinite += 1
            else:
                finite.append(ratio)
            ratios.append(ratio)
        per_query.append(ratios)
    if finite:
        arr = np.asarray(finite)
        mean_eps = float(arr.mean()) - 1.0
        max_eps = float(arr.max()) - 1.0
    else:
        mean_eps = max_eps = math.nan
    return ApproxStats(per_query, mean_eps, max_eps, infinite)


# ---------------------------------------------------------------------------
# Rank vs. norm
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RankRecord:
    ref_id: int
    centered_norm: float
    average_rank: float
    rank_total: int


def rank_analysis(refs: PointSet, chunk_size: int = 256) -> list[RankRecord]:
    """Average furthest-neighbor rank of every point when all points query.

    Each point is used as a query against the whole (centered) set, itself
    included; rank 1 is the furthest point, distance ties go to the lower id.
    Cost is quadratic in the number of points.
    """
    n = refs.count
    if n < 2:
        raise ValueError("rank analysis needs at least two points")
    centered, _ = mean_center(refs, refs)
    values = centered.values
    totals = np.zeros(n, dtype=np.int64)
    positions = np.arange(1, n + 1, dtype=np.int64)
    step = max(1, min(chunk_size, 4_000_000 // max(1, n * refs.dim)))
    for start in range(0, n, step):
        d = pairwise_distances(values[start : start + step], values)
        order = np.argsort(-d, axis=1, kind="stable")
        ranks = np.empty_like(order)
        np.put_along_axis(ranks, order, positions[None, :], axis=1)
        totals += ranks.sum(axis=0)
    norms = row_norms(values)
    return [
        RankRecord(i, float(norms[i]), float(totals[i]) / n, int(totals[i]))
        for i in range(n)
    ]


def write_rank_csv(records: Sequence[RankRecord], sink: TextIO) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(RANK_HEADER)
    for r in records:
        writer.writerow([r.ref_id, f"{r.centered_norm:.17g}", f"{r.average_rank:.17g}"])


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlgoSpec:
    """One algorithm configuration to benchmark."""

    name: str
    l: int | None = None
    m: int | None = None
    epsilon: float | None = None
    budget: int | None = None
    seed: int = 0
    angle_threshold: float = DEFAULT_ANGLE_THRESHOLD

    def __post_init__(self) -> None:
        if self.name not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.name!r}; choose from {', '.join(ALGORITHMS)}")
        if self.name in ("drusilla", "qdafn"):
            if self.l is None or self.m is None:
                raise ValueError(f"{self.name} needs both l and m")
        if self.name == "guaranteed":
            if self.epsilon is None:
                raise ValueError("guaranteed needs epsilon")
            if self.m is None:
                object.__setattr__(self, "m", 1)
        for key in ("l", "m", "budget"):
            value = getattr(self, key)
            if value is not None and value < 1:
                raise ValueError(f"{key} must be positive")

    @property
    def label(self) -> str:
        if self.name == "guaranteed":
            return f"guaranteed(eps={self.epsilon:g})"
        return self.name


@dataclass
class BenchRow:
    algorithm: str
    l: int | None
    m: int | None
    budget: int | None
    setup_seconds: float
    search_seconds: float
    candidates_scanned: float
    mean_epsilon: float
    max_epsilon: float
    infinite_count: float = 0.0

    def csv_fields(self) -> list[str]:
        def opt(v: int | None) -> str:
            return "" if v is None else str(v)

        return [
            self.algorithm,
            opt(self.l),
            opt(self.m),
            opt(self.budget),
            f"{self.setup_seconds:.6g}",
            f"{self.search_seconds:.6g}",
            f"{self.candidates_scanned:.17g}",
            f"{self.mean_epsilon:.17g}",
            f"{self.max_epsilon:.17g}",
        ]


@dataclass
class BenchReport:
    rows: list[BenchRow]
    dataset: str
    split_seed: int
    trials: int
    k: int
    n_refs: int
    n_queries: int
    params: dict = field(default_factory=dict)

    def row(self, algorithm: str) -> BenchRow:
        for r in self.rows:
            if r.algorithm == algorithm:
                return r
        raise KeyError(algorithm)


def write_bench_csv(rows: Sequence[BenchRow], sink: TextIO) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(BENCH_HEADER)
    for r in rows:
        writer.writerow(r.csv_fields())


def split_points(points: PointSet, seed: int) -> tuple[PointSet, PointSet]:
    """Shuffle and split into (references 70%, queries 30%)."""
    n = points.count
    n_queries = int(round(QUERY_FRACTION * n))
    if n < 2 or n_queries < 1 or n_queries >= n:
        raise ValueError(f"dataset of {n} points is too small to split into queries and references")
    perm = np.random.default_rng(seed).permutation(n)
    return points.subset(perm[n_queries:]), points.subset(perm[:n_queries])


@dataclass
class _Run:
    results: list[NeighborList]
    setup_seconds: float
    search_seconds: float
    scanned: float
    l: int | None
    m: int | None
    budget: int | None


def run_algorithm(
    spec: AlgoSpec, refs: PointSet, queries: PointSet, k: int, workers: int | None = None
) -> _Run:
    """Build and search one algorithm on a fixed split, timing both phases."""
    clock = time.perf_counter
    if spec.name == "brute":
        t0 = clock()
        results = brute_force_search(refs, queries, k, workers=workers)
        return _Run(results, 0.0, clock() - t0, float(refs.count), None, None, None)

    t0 = clock()
    centered = center_with(refs, refs.values.mean(axis=0))
    if spec.name == "drusilla":
        index = drusilla_build(centered, spec.l, spec.m, spec.angle_threshold)
    elif spec.name == "guaranteed":
        index = guaranteed_build(centered, spec.epsilon, spec.m)
    else:
        index = qdafn_build(centered, spec.l, spec.m, spec.seed)
    setup = clock() - t0

    t0 = clock()
    if spec.name == "drusilla":
        results = drusilla_search(index, queries, k, workers=workers)
        scanned, l, budget = float(index.candidate_count), spec.l, None
    elif spec.name == "guaranteed":
        results = guaranteed_search(index, queries, k, workers=workers)
        scanned, l, budget = float(index.candidate_count), None, None
    else:
        budget = spec.budget if spec.budget is not None else default_budget(index)
        results, counts = qdafn_search(index, queries, k, budget, workers=workers, with_counts=True)
        scanned, l = float(counts.mean()), spec.l
    search = clock() - t0
    return _Run(results, setup, search, scanned, l, spec.m, budget)


def _aggregate(spec: AlgoSpec, runs: list[_Run], stats: list[ApproxStats]) -> BenchRow:
    exact = spec.name in EXACT_ALGORITHMS
    first = runs[0]
    return BenchRow(
        algorithm=spec.label,
        l=first.l,
        m=first.m,
        budget=first.budget,
        setup_seconds=float(np.mean([r.setup_seconds for r in runs])),
        search_seconds=float(np.mean([r.search_seconds for r in runs])),
        candidates_scanned=float(np.mean([r.scanned for r in runs])),
        mean_epsilon=0.0 if exact else float(np.mean([s.mean_epsilon for s in stats])),
        max_epsilon=0.0 if exact else float(np.mean([s.max_epsilon for s in stats])),
        infinite_count=0.0 if exact else float(np.mean([s.infinite_count for s in stats])),
    )


def bench(
    points: PointSet,
    algorithms: Sequence[AlgoSpec],
    split_seed: int = 0,
    trials: int = 1,
    k: int = 1,
    workers: int | None = None,
    dataset: str = "",
) -> BenchReport:
    """Run every algorithm over ``trials`` random splits and average.

    Epsilon columns are per-trial means/maxima averaged across trials.
    """
    if not algorithms:
        raise ValueError("select at least one algorithm")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if k < 1:
        raise ValueError("k must be at least 1")

    runs: list[list[_Run]] = [[] for _ in algorithms]
    stats: list[list[ApproxStats]] = [[] for _ in algorithms]
    n_refs = n_queries = 0
    for trial in range(trials):
        refs, queries = split_points(points, split_seed + trial)
        n_refs, n_queries = refs.count, queries.count
        oracle = None
        trial_runs = []
        for spec in algorithms:
            run = run_algorithm(spec, refs, queries, k, workers)
            if spec.name == "brute" and oracle is None:
                oracle = run.results
            trial_runs.append(run)
        if oracle is None:
            oracle = brute_force_search(refs, queries, k, workers=workers)
        for i, run in enumerate(trial_runs):
            runs[i].append(run)
            stats[i].append(approx_stats(oracle, run.results))

    rows = [_aggregate(spec, r, s) for spec, r, s in zip(algorithms, runs, stats)]
    return BenchReport(
        rows, dataset, split_seed, trials, k, n_refs, n_queries,
        params={"algorithms": [spec.label for spec in algorithms]},
    )


def error_runtime_sweep(
    points: PointSet,
    sweep: Sequence[AlgoSpec],
    split_seed: int = 0,
    k: int = 1,
    workers: int | None = None,
) -> list[BenchRow]:
    """One bench row per sweep point on a single fixed split, fastest first."""
    if not sweep:
        raise ValueError("sweep is empty")
    refs, queries = split_points(points, split_seed)
    oracle = brute_force_search(refs, queries, k, workers=workers)
    rows = []
    for spec in sweep:
        run = run_algorithm(spec, refs, queries, k, workers)
        rows.append(_aggregate(spec, [run], [approx_stats(oracle, run.results)]))
    rows.sort(key=lambda r: r.search_seconds)
    return rows
