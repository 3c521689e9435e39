import io
import math
from fractions import Fraction

import numpy as np
import pytest

from farhash.baselines import brute_force_search, qdafn_build
from farhash.drusilla import drusilla_build, drusilla_search
from farhash.eval import (
    BENCH_HEADER,
    AlgoSpec,
    approx_stats,
    bench,
    error_runtime_sweep,
    rank_analysis,
    split_points,
    write_bench_csv,
    write_rank_csv,
)
from farhash.points import NeighborList, PointSet, gen_uniform_ball, mean_center

import oracles

FOUR = np.array([[6.0, 0.0], [-2.0, 1.0], [-2.0, -1.0], [-2.0, 0.0]])


def naive_ranks(points):
    """Average rank per point as exact fractions, self included, ties by id."""
    pts, _, _ = oracles.center([list(p) for p in points])
    n = len(pts)
    totals = [0] * n
    for q in pts:
        order = sorted(range(n), key=lambda i: (-oracles.dist(q, pts[i]), i))
        for pos, i in enumerate(order, start=1):
            totals[i] += pos
    return [Fraction(t, n) for t in totals]


class TestApproxStats:
    def test_identity(self):
        lists = [NeighborList(0, [(1, 3.0), (2, 2.0)]), NeighborList(1, [(0, 5.0)])]
        s = approx_stats(lists, lists)
        assert (s.mean_epsilon, s.max_epsilon, s.infinite_count) == (0.0, 0.0, 0)

    def test_simple_ratio(self):
        s = approx_stats([NeighborList(0, [(1, 10.0)])], [NeighborList(0, [(2, 8.0)])])
        assert s.per_query_ratio == [[1.25]]
        assert s.max_epsilon == 0.25

    def test_worked_drusilla_example(self):
        index = drusilla_build(mean_center(PointSet(FOUR), PointSet(FOUR))[0], l=1, m=2)
        q = PointSet(np.array([[6.0, 0.0]]))
        s = approx_stats(brute_force_search(PointSet(FOUR), q, 1), drusilla_search(index, q, 1))
        assert s.max_epsilon == pytest.approx(math.sqrt(65) / 8 - 1, rel=1e-12)
        assert s.max_epsilon == pytest.approx(0.00778, abs=5e-6)

    def test_zero_over_zero_is_one(self):
        s = approx_stats([NeighborList(0, [(0, 0.0)])], [NeighborList(0, [(0, 0.0)])])
        assert s.per_query_ratio == [[1.0]]
        assert s.infinite_count == 0

    def test_infinite_ratios_counted(self):
        exact = [NeighborList(0, [(1, 4.0), (2, 3.0)]), NeighborList(1, [(0, 2.0)])]
        approx = [NeighborList(0, [(1, 4.0)]), NeighborList(1, [(1, 0.0)])]
        s = approx_stats(exact, approx)
        assert s.infinite_count == 2
        assert s.per_query_ratio == [[1.0, math.inf], [math.inf]]
        assert s.max_epsilon == 0.0

    def test_mismatch(self):
        with pytest.raises(ValueError, match="count"):
            approx_stats([NeighborList(0)], [])
        with pytest.raises(ValueError, match="id"):
            approx_stats([NeighborList(0, [(0, 1.0)])], [NeighborList(1, [(0, 1.0)])])

    @pytest.mark.parametrize("seed", range(5))
    def test_ratios_at_least_one(self, seed):
        rng = np.random.default_rng(seed)
        refs = PointSet(rng.standard_normal((300, 5)))
        queries = PointSet(rng.standard_normal((50, 5)))
        cr, _ = mean_center(refs, queries)
        index = drusilla_build(cr, l=3, m=2)
        s = approx_stats(brute_force_search(refs, queries, 3), drusilla_search(index, queries, 3))
        flat = [r for row in s.per_query_ratio for r in row]
        assert min(flat) >= 1 - 1e-12
        assert s.mean_epsilon <= s.max_epsilon


class TestRankAnalysis:
    def test_three_points_1d(self):
        recs = rank_analysis(PointSet(np.array([[0.0], [1.0], [3.0]])))
        assert [r.average_rank for r in recs] == pytest.approx([2.0, 7 / 3, 5 / 3], rel=1e-15)
        assert [r.rank_total for r in recs] == [6, 7, 5]
        assert [r.centered_norm for r in recs] == pytest.approx([4 / 3, 1 / 3, 5 / 3])
        assert min(recs, key=lambda r: r.average_rank).ref_id == 2

    def test_two_points(self):
        recs = rank_analysis(PointSet(np.array([[0.0, 1.0], [4.0, -2.0]])))
        assert [r.average_rank for r in recs] == [1.5, 1.5]

    def test_too_small(self):
        with pytest.raises(ValueError):
            rank_analysis(PointSet(np.array([[1.0, 2.0]])))

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_naive_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n, d = int(rng.integers(2, 60)), int(rng.integers(1, 5))
        # Integer data forces distance ties, exercising the id tie-break.
        values = rng.integers(-3, 4, (n, d)).astype(float) if seed % 2 else rng.standard_normal((n, d))
        recs = rank_analysis(PointSet(values), chunk_size=7)
        want = naive_ranks(values)
        assert [Fraction(r.rank_total, n) for r in recs] == want

    @pytest.mark.parametrize("n", [2, 3, 17, 400])
    def test_grand_mean_identity(self, n):
        recs = rank_analysis(PointSet(np.random.default_rng(n).standard_normal((n, 4))))
        assert sum(r.rank_total for r in recs) == n * n * (n + 1) // 2
        assert all(1 <= r.average_rank <= n for r in recs)

    def test_csv(self):
        buf = io.StringIO()
        write_rank_csv(rank_analysis(PointSet(np.array([[0.0], [1.0], [3.0]]))), buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "ref_id,norm,avg_rank"
        assert lines[1].startswith("0,1.333333333333333")
        assert len(lines) == 4


class TestSplit:
    def test_sizes_and_disjoint(self):
        pts = PointSet(np.arange(200, dtype=float).reshape(100, 2))
        refs, queries = split_points(pts, 3)
        assert (refs.count, queries.count) == (70, 30)
        both = np.vstack([refs.values, queries.values])
        assert sorted(both[:, 0].tolist()) == sorted(pts.values[:, 0].tolist())

    def test_too_small(self):
        with pytest.raises(ValueError, match="too small"):
            split_points(PointSet(np.zeros((1, 2))), 0)


@pytest.fixture(scope="module")
def ball():
    return gen_uniform_ball(3000, 10, seed=0)


class TestBench:
    def test_exact_rows_and_candidates(self, ball):
        report = bench(
            ball,
            [AlgoSpec("brute"), AlgoSpec("drusilla", l=5, m=2), AlgoSpec("qdafn", l=15, m=15)],
            trials=2,
            workers=1,
        )
        brute = report.row("brute")
        assert (brute.mean_epsilon, brute.max_epsilon) == (0.0, 0.0)
        assert brute.candidates_scanned == 2100
        assert report.row("drusilla").candidates_scanned == 10
        assert report.row("qdafn").budget == 30
        assert report.row("qdafn").candidates_scanned <= 30
        assert (report.n_refs, report.n_queries, report.trials) == (2100, 900, 2)
        for row in report.rows:
            assert row.setup_seconds >= 0 and row.search_seconds >= 0

    def test_qdafn_stores_more_than_drusilla_scans(self, ball):
        refs, _ = split_points(ball, 0)
        cr, _ = mean_center(refs, refs)
        assert drusilla_build(cr, 5, 2).candidate_count == 10
        assert qdafn_build(cr, 15, 15, seed=0).stored == 225

    def test_non_timing_fields_deterministic(self, ball):
        specs = [AlgoSpec("drusilla", l=3, m=2), AlgoSpec("guaranteed", epsilon=0.5, m=2)]
        a = bench(ball, specs, split_seed=4, trials=2, workers=1)
        b = bench(ball, specs, split_seed=4, trials=2, workers=1)
        for x, y in zip(a.rows, b.rows):
            assert (x.candidates_scanned, x.mean_epsilon, x.max_epsilon) == (
                y.candidates_scanned, y.mean_epsilon, y.max_epsilon,
            )
        assert a.rows[1].algorithm == "guaranteed(eps=0.5)"

    def test_trials_average_single_trials(self, ball):
        spec = [AlgoSpec("drusilla", l=4, m=2)]
        both = bench(ball, spec, split_seed=7, trials=2).rows[0]
        one = bench(ball, spec, split_seed=7).rows[0]
        two = bench(ball, spec, split_seed=8).rows[0]
        assert both.mean_epsilon == pytest.approx((one.mean_epsilon + two.mean_epsilon) / 2, rel=1e-12)

    def test_validation(self, ball):
        with pytest.raises(ValueError):
            bench(ball, [])
        with pytest.raises(ValueError):
            bench(ball, [AlgoSpec("brute")], trials=0)
        with pytest.raises(ValueError):
            AlgoSpec("drusilla", l=2)
        with pytest.raises(ValueError):
            AlgoSpec("nope")
        with pytest.raises(ValueError):
            AlgoSpec("guaranteed")

    def test_csv_header(self, ball):
        buf = io.StringIO()
        write_bench_csv(bench(ball, [AlgoSpec("brute")]).rows, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0].split(",") == BENCH_HEADER
        assert lines[1].startswith("brute,,,,")


class TestSweep:
    def test_shape_and_order(self, ball):
        sweep = [AlgoSpec("drusilla", l=l, m=max(1, l // 3)) for l in (6, 12, 24)]
        sweep.append(AlgoSpec("qdafn", l=10, m=10, budget=40))
        rows = error_runtime_sweep(ball, sweep)
        assert len(rows) == 4
        assert [r.search_seconds for r in rows] == sorted(r.search_seconds for r in rows)

    def test_single_point_equals_bench_row(self, ball):
        spec = AlgoSpec("drusilla", l=6, m=2)
        (row,) = error_runtime_sweep(ball, [spec], split_seed=2)
        ref = bench(ball, [spec], split_seed=2).rows[0]
        assert (row.candidates_scanned, row.mean_epsilon, row.max_epsilon) == (
            ref.candidates_scanned, ref.mean_epsilon, ref.max_epsilon,
        )

    def test_endpoint_improves(self, ball):
        rows = error_runtime_sweep(ball, [AlgoSpec("drusilla", l=l, m=l // 3) for l in (6, 60)])
        small = next(r for r in rows if r.l == 6)
        large = next(r for r in rows if r.l == 60)
        assert large.max_epsilon <= small.max_epsilon

    def test_empty(self, ball):
        with pytest.raises(ValueError, match="empty"):
            error_runtime_sweep(ball, [])
