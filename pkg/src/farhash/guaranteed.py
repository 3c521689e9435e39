"""Guaranteed variant of DrusillaHash.

Instead of a table count the build takes an approximation target ``epsilon``
and keeps adding tables until every uncollected point has centered norm at
most ``(epsilon / 15) * max_norm``. One uncollected point, the shrug point,
is kept as an extra candidate. Together these bound the ratio between the
true and the returned furthest distance by ``1 + epsilon`` for any query.

No angle-based retirement happens here; it would break the coverage bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .drusilla import (
    LineReader,
    ProjectionTable,
    build_tables,
    read_tables,
    scan_candidates,
    stack_tables,
    write_tables,
)
from .points import CenteredPointSet, NeighborList, PointSet, format_reals, row_norms, topk_update

DELTA_DIVISOR = 15.0

MAGIC = "DRUSILLA-GUARANTEED"
VERSION = 1


@dataclass(frozen=True)
class ShrugPoint:
    ref_id: int
    coords: np.ndarray


@dataclass(frozen=True)
class GuaranteedIndex:
    mean: np.ndarray
    tables: tuple[ProjectionTable, ...]
    epsilon: float
    delta: float
    max_norm: float
    m: int
    shrug: ShrugPoint | None

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def cutoff(self) -> float:
        return self.delta * self.max_norm

    @property
    def candidate_count(self) -> int:
        return sum(len(t) for t in self.tables) + (self.shrug is not None)

    def candidates(self) -> tuple[np.ndarray, np.ndarray]:
        return stack_tables(self.tables, self.dim)


def guaranteed_build(refs: CenteredPointSet, epsilon: float, m: int) -> GuaranteedIndex:
    """Build tables until all uncollected norms fall under the cutoff.

    The shrug point is the uncollected point of largest centered norm (ties
    by id); it is absent when every point was collected.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if m < 1:
        raise ValueError("m must be at least 1")
    values = refs.values
    norms = row_norms(values)
    max_norm = float(norms.max())
    delta = epsilon / DELTA_DIVISOR
    tables, collected = build_tables(
        values, m, stop_norm=delta * max_norm, angle_threshold=None
    )

    shrug = None
    left = np.flatnonzero(~collected)
    if left.size:
        pick = int(left[np.argmax(norms[left])])
        coords = values[pick].copy()
        coords.setflags(write=False)
        shrug = ShrugPoint(pick, coords)

    return GuaranteedIndex(
        refs.mean, tuple(tables), epsilon, delta, max_norm, m, shrug
    )


def guaranteed_search(
    index: GuaranteedIndex, queries: PointSet, k: int, workers: int | None = None
) -> list[NeighborList]:
    """Scan all tables, then offer the shrug point to every query's list."""
    ids, coords = index.candidates()
    results = scan_candidates(queries, index.mean, ids, coords, k, workers)
    if index.shrug is not None:
        centered = queries.values - index.mean
        diff = centered - index.shrug.coords
        dists = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        for neighbors, dist in zip(results, dists.tolist()):
            topk_update(neighbors, (index.shrug.ref_id, dist), k)
    return results


def save_guaranteed(index: GuaranteedIndex, sink: TextIO) -> None:
    sink.write(f"{MAGIC} {VERSION}\n")
    sink.write(f"{index.dim} {index.m} {len(index.tables)}\n")
    sink.write(format_reals([index.epsilon, index.delta, index.max_norm]) + "\n")
    sink.write(format_reals(index.mean) + "\n")
    if index.shrug is None:
        sink.write("none\n")
    else:
        sink.write(f"{index.shrug.ref_id} {format_reals(index.shrug.coords)}\n")
    write_tables(index.tables, sink)


def load_guaranteed(source: TextIO) -> GuaranteedIndex:
    reader = LineReader(source)
    reader.header(MAGIC, VERSION)
    dim, m, count = reader.ints(3)
    epsilon, delta, max_norm = reader.reals(3)
    mean = reader.reals(dim)
    fields = reader.next().split()
    shrug = None
    if fields != ["none"]:
        if len(fields) != dim + 1:
            raise reader.error("expected 'none' or a shrug point id plus coordinates")
        try:
            ref_id = int(fields[0])
        except ValueError:
            raise reader.error("malformed shrug id") from None
        shrug = ShrugPoint(ref_id, reader.parse_reals(fields[1:], dim))
    tables = read_tables(reader, count, dim)
    return GuaranteedIndex(
        mean, tables, float(epsilon), float(delta), float(max_norm), m, shrug
    )
