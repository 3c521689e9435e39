"""DrusillaHash: data-dependent projection tables for furthest neighbor search.

Tables are built greedily. The unused point with the largest (mean-centered)
norm becomes the pivot; its direction is the table's projection basis. Every
unused point is scored by ``|offset| - distortion`` against that basis and the
``m`` best scorers form the table. Points lying within a small angle of the
basis that were not collected are retired so later bases stay dissimilar.

Search is a brute-force scan over the at most ``l * m`` stored candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, TextIO

import numpy as np

from ._parallel import map_chunks
from .points import (
    CenteredPointSet,
    NeighborList,
    PointSet,
    format_reals,
    pairwise_distances,
    row_norms,
    select_topk,
)

DEFAULT_ANGLE_THRESHOLD = math.pi / 8
UNIT_TOLERANCE = 1e-9

MAGIC = "DRUSILLA-INDEX"
VERSION = 1


class IndexFormatError(ValueError):
    """Raised when a serialized index cannot be read."""


class EmptyIndexError(ValueError):
    """Raised when searching an index that stores no candidates."""


@dataclass(frozen=True)
class ProjectionStats:
    offset: float
    distortion: float
    score: float


@dataclass(frozen=True)
class ProjectionTable:
    """One projection basis and the candidates collected for it.

    ``coords`` are mean-centered; row ``j`` belongs to ``ids[j]``. The pivot
    whose direction defines ``basis`` is always the first member.
    """

    basis: np.ndarray
    ids: np.ndarray
    coords: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class DrusillaIndex:
    mean: np.ndarray
    tables: tuple[ProjectionTable, ...]
    l: int
    m: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def candidate_count(self) -> int:
        return sum(len(t) for t in self.tables)

    def candidates(self) -> tuple[np.ndarray, np.ndarray]:
        """All stored ``(ids, centered coords)`` concatenated in table order."""
        return stack_tables(self.tables, self.dim)


def stack_tables(
    tables: tuple[ProjectionTable, ...], dim: int
) -> tuple[np.ndarray, np.ndarray]:
    if not tables:
        return np.empty(0, dtype=np.int64), np.empty((0, dim))
    return (
        np.concatenate([t.ids for t in tables]),
        np.vstack([t.coords for t in tables]),
    )


def projection_stats(p: np.ndarray, v: np.ndarray) -> ProjectionStats:
    """Offset, distortion and score of ``p`` against unit direction ``v``.

    >>> projection_stats(np.array([3.0, 4.0]), np.array([1.0, 0.0]))
    ProjectionStats(offset=3.0, distortion=4.0, score=-1.0)
    """
    p = np.asarray(p, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if p.shape != v.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {v.shape}")
    if abs(float(np.linalg.norm(v)) - 1.0) > UNIT_TOLERANCE:
        raise ValueError("projection direction must be a unit vector")
    offset = float(p @ v)
    distortion = float(np.linalg.norm(p - offset * v))
    return ProjectionStats(offset, distortion, abs(offset) - distortion)


def _score_against(
    values: np.ndarray, active: np.ndarray, basis: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized ``projection_stats`` for the active rows of ``values``."""
    idx = np.flatnonzero(active)
    pts = values[idx]
    offset = pts @ basis
    distortion = row_norms(pts - offset[:, None] * basis[None, :])
    return idx, offset, distortion


def _collect(
    idx: np.ndarray, score: np.ndarray, pivot: int, m: int
) -> np.ndarray:
    """Pivot first, then the ``m - 1`` best other scorers (ties by id)."""
    others = idx != pivot
    rest = idx[others]
    order = np.lexsort((rest, -score[others]))
    return np.concatenate(([pivot], rest[order[: m - 1]])).astype(np.int64)


def build_tables(
    values: np.ndarray,
    m: int,
    *,
    max_tables: int | None = None,
    stop_norm: float = 0.0,
    angle_threshold: float | None = DEFAULT_ANGLE_THRESHOLD,
) -> tuple[list[ProjectionTable], np.ndarray]:
    """Greedy pivot/score/collect loop shared by both index variants.

    Runs until ``max_tables`` tables exist (if given) or every remaining
    norm is ``<= stop_norm``. ``angle_threshold=None`` disables retiring
    well-represented points.

    Returns the tables and a boolean mask of collected points.
    """
    n = values.shape[0]
    norms = row_norms(values)
    remaining = norms.copy()
    collected = np.zeros(n, dtype=bool)
    tables: list[ProjectionTable] = []

    while max_tables is None or len(tables) < max_tables:
        pivot = int(np.argmax(remaining))
        if not remaining[pivot] > stop_norm or remaining[pivot] <= 0.0:
            break
        basis = values[pivot] / norms[pivot]
        active = remaining > 0.0
        idx, offset, distortion = _score_against(values, active, basis)
        score = np.abs(offset) - distortion
        members = _collect(idx, score, pivot, m)

        remaining[members] = 0.0
        collected[members] = True
        if angle_threshold is not None:
            angle = np.arctan2(distortion, np.abs(offset))
            remaining[idx[angle < angle_threshold]] = 0.0

        basis.setflags(write=False)
        coords = values[members]
        coords.setflags(write=False)
        members.setflags(write=False)
        tables.append(ProjectionTable(basis, members, coords))

    return tables, collected


def drusilla_build(
    refs: CenteredPointSet,
    l: int,
    m: int,
    angle_threshold: float = DEFAULT_ANGLE_THRESHOLD,
) -> DrusillaIndex:
    """Build up to ``l`` tables of at most ``m`` candidates each.

    Construction stops early once no unused point of positive norm remains,
    so the index may hold fewer than ``l`` tables (zero for a set whose points
    all coincide with the mean).
    """
    if l < 1 or m < 1:
        raise ValueError("l and m must both be at least 1")
    tables, _ = build_tables(
        refs.values, m, max_tables=l, angle_threshold=angle_threshold
    )
    return DrusillaIndex(refs.mean, tuple(tables), l, m)


def scan_candidates(
    queries: PointSet,
    mean: np.ndarray,
    ids: np.ndarray,
    coords: np.ndarray,
    k: int,
    workers: int | None = None,
) -> list[NeighborList]:
    """Exact top-k over a fixed candidate set, in the centered frame."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if queries.dim != mean.shape[0]:
        raise ValueError(
            f"dimension mismatch: index has dim {mean.shape[0]}, queries have {queries.dim}"
        )
    centered = queries.values - mean
    # Bound the (chunk, candidates, dim) difference tensor to ~4M reals.
    chunk = max(1, min(4096, 4_000_000 // max(1, len(ids) * queries.dim)))

    def run(start: int, stop: int) -> list[NeighborList]:
        d = pairwise_distances(centered[start:stop], coords)
        return select_topk(d, ids, k, np.arange(start, stop))

    return map_chunks(run, queries.count, workers, chunk_size=chunk)


def drusilla_search(
    index: DrusillaIndex, queries: PointSet, k: int, workers: int | None = None
) -> list[NeighborList]:
    """Scan every stored candidate for each query.

    Returns ``min(k, index.candidate_count)`` neighbors per query.
    """
    if not index.tables:
        raise EmptyIndexError(
            "index has no tables (all reference points coincide with the mean); "
            "use brute_force_search instead"
        )
    ids, coords = index.candidates()
    return scan_candidates(queries, index.mean, ids, coords, k, workers)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


class LineReader:
    """Pull non-blank lines from a text stream with position-aware errors."""

    def __init__(self, source: TextIO) -> None:
        self._lines: Iterator[tuple[int, str]] = (
            (i, line.strip()) for i, line in enumerate(source, start=1) if line.strip()
        )
        self.lineno = 0

    def next(self) -> str:
        try:
            self.lineno, line = next(self._lines)
        except StopIteration:
            raise IndexFormatError("unexpected end of index file") from None
        return line

    def ints(self, expected: int) -> list[int]:
        fields = self.next().split()
        if len(fields) != expected:
            raise self.error(f"expected {expected} integers")
        try:
            return [int(f) for f in fields]
        except ValueError:
            raise self.error("malformed integer") from None

    def reals(self, expected: int) -> np.ndarray:
        fields = self.next().split()
        return self.parse_reals(fields, expected)

    def parse_reals(self, fields: list[str], expected: int) -> np.ndarray:
        if len(fields) != expected:
            raise self.error(f"expected {expected} values, found {len(fields)}")
        try:
            return np.array([float(f) for f in fields], dtype=np.float64)
        except ValueError:
            raise self.error("malformed real") from None

    def header(self, magic: str, version: int) -> None:
        line = self.next()
        if line != f"{magic} {version}":
            raise self.error(f"expected header {magic!r} version {version}, found {line!r}")

    def error(self, message: str) -> IndexFormatError:
        return IndexFormatError(f"line {self.lineno}: {message}")


def write_tables(tables: tuple[ProjectionTable, ...], sink: TextIO) -> None:
    for table in tables:
        sink.write(format_reals(table.basis) + "\n")
        sink.write(f"{len(table)}\n")
        for ref_id, row in zip(table.ids, table.coords):
            sink.write(f"{int(ref_id)} {format_reals(row)}\n")


def read_tables(reader: LineReader, count: int, dim: int) -> tuple[ProjectionTable, ...]:
    tables = []
    for _ in range(count):
        basis = reader.reals(dim)
        (size,) = reader.ints(1)
        ids = np.empty(size, dtype=np.int64)
        coords = np.empty((size, dim))
        for j in range(size):
            fields = reader.next().split()
            if len(fields) != dim + 1:
                raise reader.error(f"expected id plus {dim} coordinates")
            try:
                ids[j] = int(fields[0])
            except ValueError:
                raise reader.error("malformed id") from None
            coords[j] = reader.parse_reals(fields[1:], dim)
        tables.append(ProjectionTable(basis, ids, coords))
    return tuple(tables)


def save_drusilla(index: DrusillaIndex, sink: TextIO) -> None:
    sink.write(f"{MAGIC} {VERSION}\n")
    sink.write(f"{index.dim} {index.l} {index.m} {len(index.tables)}\n")
    sink.write(format_reals(index.mean) + "\n")
    write_tables(index.tables, sink)


def load_drusilla(source: TextIO) -> DrusillaIndex:
    reader = LineReader(source)
    reader.header(MAGIC, VERSION)
    dim, l, m, count = reader.ints(4)
    mean = reader.reals(dim)
    tables = read_tables(reader, count, dim)
    return DrusillaIndex(mean, tables, l, m)
