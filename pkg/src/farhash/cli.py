"""``farhash`` command line: generate data, build/search indexes, benchmark."""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Iterator, Sequence, TextIO

from . import baselines, drusilla, guaranteed
from .drusilla import DEFAULT_ANGLE_THRESHOLD, IndexFormatError
from .eval import AlgoSpec, bench, error_runtime_sweep, rank_analysis, write_bench_csv, write_rank_csv
from .points import PointSet, center_with, gen_gaussian_mixture, gen_uniform_ball, load_points, save_points

INDEX_FORMATS = {
    "drusilla": (drusilla.MAGIC, drusilla.save_drusilla, drusilla.load_drusilla),
    "guaranteed": (guaranteed.MAGIC, guaranteed.save_guaranteed, guaranteed.load_guaranteed),
    "qdafn": (baselines.MAGIC, baselines.save_qdafn, baselines.load_qdafn),
}


class CliError(Exception):
    """A user-facing failure; reported without a traceback."""


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


@contextlib.contextmanager
def output_stream(path: str | None) -> Iterator[TextIO]:
    """Write to ``path`` atomically (nothing left behind on failure), or stdout."""
    if path is None or path == "-":
        yield sys.stdout
        return
    target = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent or Path("."))
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}") from None
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            yield fh
        os.replace(tmp, target)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def read_points(path: str, has_header: bool) -> PointSet:
    try:
        with open(path) as fh:
            return load_points(fh, has_header=has_header)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from None


def read_index(path: str, expected: str | None = None):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None
    first = text.lstrip().split("\n", 1)[0].split()
    magic = first[0] if first else ""
    for algo, (fmt_magic, _, loader) in INDEX_FORMATS.items():
        if magic == fmt_magic:
            break
    else:
        raise CliError(f"{path}: unrecognized index format {magic!r}")
    if expected is not None and expected != algo:
        raise CliError(f"{path} holds a {algo} index, not {expected}")
    try:
        return algo, loader(io.StringIO(text))
    except IndexFormatError as exc:
        raise CliError(f"{path}: {exc}") from None


def workers_from(args: argparse.Namespace) -> int | None:
    return 1 if getattr(args, "single_threaded", False) else None


def parse_pairs(text: str | None, name: str) -> list[tuple[int, ...]]:
    """Parse ``"l:m,l:m[:budget]"`` sweep points."""
    if not text:
        return []
    points = []
    for item in text.split(","):
        try:
            values = tuple(int(v) for v in item.split(":"))
        except ValueError:
            raise CliError(f"--{name}: malformed sweep point {item!r}") from None
        if len(values) not in (2, 3) or min(values) < 1:
            raise CliError(f"--{name}: sweep points look like l:m or l:m:budget, got {item!r}")
        points.append(values)
    return points


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args: argparse.Namespace) -> None:
    if args.dist == "ball":
        points = gen_uniform_ball(args.n, args.d, args.seed)
    else:
        points = gen_gaussian_mixture(args.n, args.d, args.seed)
    with output_stream(args.out) as fh:
        save_points(points, fh)


def cmd_build(args: argparse.Namespace) -> None:
    algo = args.algo
    if algo == "guaranteed":
        if args.epsilon is None:
            raise CliError("--epsilon is required for the guaranteed index")
        if not 0.0 < args.epsilon < 1.0:
            raise CliError(f"--epsilon must lie in (0, 1), got {args.epsilon}")
        if args.l is not None:
            raise CliError("--l does not apply to the guaranteed index")
    else:
        if args.epsilon is not None:
            raise CliError("--epsilon only applies to the guaranteed index")
        if args.l is None or args.m is None:
            raise CliError(f"--l and --m are required for {algo}")

    refs = read_points(args.refs, args.has_header)
    centered = center_with(refs, refs.values.mean(axis=0))
    if algo == "drusilla":
        index = drusilla.drusilla_build(centered, args.l, args.m, args.angle_threshold)
    elif algo == "guaranteed":
        index = guaranteed.guaranteed_build(centered, args.epsilon, args.m or 1)
    else:
        index = baselines.qdafn_build(centered, args.l, args.m, args.seed)

    _, save, _ = INDEX_FORMATS[algo]
    with output_stream(args.out) as fh:
        save(index, fh)


def cmd_search(args: argparse.Namespace) -> None:
    queries = read_points(args.queries, args.has_header)
    workers = workers_from(args)
    if args.index is None:
        if args.algo != "brute" or args.refs is None:
            raise CliError("give --index, or --algo brute with --refs")
        refs = read_points(args.refs, args.has_header)
        if refs.dim != queries.dim:
            raise CliError(f"dimension mismatch: refs have {refs.dim}, queries have {queries.dim}")
        results = baselines.brute_force_search(refs, queries, args.k, workers=workers)
    else:
        if args.algo == "brute":
            raise CliError("--algo brute searches --refs directly; it has no index file")
        algo, index = read_index(args.index, args.algo)
        if index.dim != queries.dim:
            raise CliError(f"dimension mismatch: index has {index.dim}, queries have {queries.dim}")
        if algo == "drusilla":
            if not index.tables:
                raise CliError("index has no tables; use --algo brute with --refs")
            results = drusilla.drusilla_search(index, queries, args.k, workers=workers)
        elif algo == "guaranteed":
            results = guaranteed.guaranteed_search(index, queries, args.k, workers=workers)
        else:
            results = baselines.qdafn_search(index, queries, args.k, args.budget, workers=workers)

    with output_stream(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["query_id", "rank", "ref_id", "distance"])
        for neighbors in results:
            for rank, (ref_id, dist) in enumerate(neighbors.entries, start=1):
                writer.writerow([neighbors.query_id, rank, ref_id, f"{dist:.17g}"])


def _bench_specs(args: argparse.Namespace) -> list[AlgoSpec]:
    specs = []
    for name in [a.strip() for a in args.algos.split(",") if a.strip()]:
        if name == "brute":
            specs.append(AlgoSpec("brute"))
        elif name == "drusilla":
            specs.append(AlgoSpec("drusilla", l=args.l, m=args.m, angle_threshold=args.angle_threshold))
        elif name == "guaranteed":
            specs.append(AlgoSpec("guaranteed", m=args.m, epsilon=args.epsilon))
        elif name == "qdafn":
            specs.append(
                AlgoSpec(
                    "qdafn",
                    l=args.qdafn_l or args.l,
                    m=args.qdafn_m or args.m,
                    budget=args.budget,
                    seed=args.seed,
                )
            )
        else:
            raise CliError(f"unknown algorithm {name!r}")
    if not specs:
        raise CliError("--algos selects no algorithm")
    return specs


def cmd_bench(args: argparse.Namespace) -> None:
    try:
        specs = _bench_specs(args)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    points = read_points(args.data, args.has_header)
    report = bench(
        points, specs, split_seed=args.seed, trials=args.trials, k=args.k,
        workers=workers_from(args), dataset=args.data,
    )
    with output_stream(args.out) as fh:
        write_bench_csv(report.rows, fh)


def cmd_sweep(args: argparse.Namespace) -> None:
    specs = []
    for values in parse_pairs(args.drusilla, "drusilla"):
        if len(values) != 2:
            raise CliError("--drusilla sweep points take no budget")
        specs.append(AlgoSpec("drusilla", l=values[0], m=values[1], angle_threshold=args.angle_threshold))
    for values in parse_pairs(args.qdafn, "qdafn"):
        budget = values[2] if len(values) == 3 else None
        specs.append(AlgoSpec("qdafn", l=values[0], m=values[1], budget=budget, seed=args.seed))
    if not specs:
        raise CliError("empty sweep: give --drusilla and/or --qdafn points")
    points = read_points(args.data, args.has_header)
    rows = error_runtime_sweep(points, specs, split_seed=args.seed, k=args.k, workers=workers_from(args))
    with output_stream(args.out) as fh:
        write_bench_csv(rows, fh)


def cmd_rank(args: argparse.Namespace) -> None:
    refs = read_points(args.refs, args.has_header)
    if refs.count < 2:
        raise CliError("rank analysis needs at least two points")
    records = rank_analysis(refs)
    with output_stream(args.out) as fh:
        write_rank_csv(records, fh)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="farhash", description="Approximate furthest neighbor search with DrusillaHash."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, threads: bool = False) -> None:
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--has-header", action="store_true", help="input CSVs start with a header line")
        if threads:
            p.add_argument(
                "--single-threaded", action="store_true",
                help="disable query-parallel search (stable timings)",
            )

    p = sub.add_parser("gen", help="generate a synthetic dataset as CSV")
    p.add_argument("--n", type=positive_int, required=True)
    p.add_argument("--d", type=positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dist", choices=("ball", "mixture"), default="ball",
                   help="uniform unit ball (randu) or anisotropic Gaussian mixture")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("build", help="build and serialize an index")
    p.add_argument("--algo", choices=("drusilla", "guaranteed", "qdafn"), required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--l", type=positive_int)
    p.add_argument("--m", type=positive_int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--angle-threshold", type=float, default=DEFAULT_ANGLE_THRESHOLD)
    common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("search", help="query an index (or brute-force a reference file)")
    p.add_argument("--index")
    p.add_argument("--algo", choices=("drusilla", "guaranteed", "qdafn", "brute"))
    p.add_argument("--refs")
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=positive_int, default=1)
    p.add_argument("--budget", type=positive_int, help="QDAFN distance evaluations (default l + m)")
    common(p, threads=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("bench", help="timing and error over random 70/30 splits")
    p.add_argument("--data", required=True)
    p.add_argument("--algos", default="brute,drusilla")
    p.add_argument("--l", type=positive_int)
    p.add_argument("--m", type=positive_int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--budget", type=positive_int)
    p.add_argument("--qdafn-l", type=positive_int)
    p.add_argument("--qdafn-m", type=positive_int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=positive_int, default=1)
    p.add_argument("--k", type=positive_int, default=1)
    p.add_argument("--angle-threshold", type=float, default=DEFAULT_ANGLE_THRESHOLD)
    common(p, threads=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="error vs runtime over parameter points on one split")
    p.add_argument("--data", required=True)
    p.add_argument("--drusilla", help="comma-separated l:m points")
    p.add_argument("--qdafn", help="comma-separated l:m or l:m:budget points")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=positive_int, default=1)
    p.add_argument("--angle-threshold", type=float, default=DEFAULT_ANGLE_THRESHOLD)
    common(p, threads=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("rank", help="average rank vs centered norm (all points query)")
    p.add_argument("--refs", required=True)
    common(p)
    p.set_defaults(func=cmd_rank)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except CliError as exc:
        print(f"farhash: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"farhash: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
