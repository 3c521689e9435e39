"""Exact brute-force search and the QDAFN random-projection baseline."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from ._parallel import map_chunks
from .drusilla import EmptyIndexError, LineReader
from .points import (
    CenteredPointSet,
    NeighborList,
    PointSet,
    format_reals,
    row_norms,
    topk_update,
)

MAGIC = "QDAFN-INDEX"
VERSION = 1

# Entries of the (queries x refs) block held in memory at once.
_BLOCK_ENTRIES = 1_000_000


def brute_force_search(
    refs: PointSet, queries: PointSet, k: int, workers: int | None = None
) -> list[NeighborList]:
    """Exact top-k furthest neighbors, ordered by (distance desc, id asc).

    Squared distances are first estimated through the norm expansion
    ``|q|^2 + |r|^2 - 2 q.r`` (one matrix product per query block). Every
    reference whose estimate lies within a rounding bound of the k-th largest
    is then re-measured exactly from coordinate differences, and only those
    exact distances decide the result.
    """
    if refs.count == 0:
        raise ValueError("reference set is empty")
    if refs.dim != queries.dim:
        raise ValueError(
            f"dimension mismatch: refs have {refs.dim}, queries have {queries.dim}"
        )
    if k < 1:
        raise ValueError("k must be at least 1")

    R = refs.values
    Q = queries.values
    n = refs.count
    r_sq = np.einsum("ij,ij->i", R, R)
    r_sq_max = float(r_sq.max())
    # Generous bound on the absolute error of the expanded squared distance.
    slack = 8.0 * (refs.dim + 4) * np.finfo(np.float64).eps

    neg2_rt = np.ascontiguousarray(-2.0 * R.T)

    def run(start: int, stop: int) -> list[NeighborList]:
        q = Q[start:stop]
        q_sq = np.einsum("ij,ij->i", q, q)
        # Row order of |r|^2 - 2 q.r matches that of the squared distance.
        est = q @ neg2_rt
        est += r_sq
        if k >= n:
            mask = np.ones_like(est, dtype=bool)
        else:
            if k == 1:
                kth = est.max(axis=1)
            else:
                kth = np.partition(est, n - k, axis=1)[:, n - k]
            tol = 2.0 * slack * (q_sq + r_sq_max) + 1e-300
            mask = est >= (kth - tol)[:, None]
        rows, cols = np.nonzero(mask)
        diff = q[rows] - R[cols]
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        order = np.lexsort((cols, -dist, rows))
        rows, cols, dist = rows[order], cols[order], dist[order]
        starts = np.searchsorted(rows, np.arange(stop - start))
        out = []
        for r in range(stop - start):
            a = starts[r]
            b = min(a + k, starts[r + 1] if r + 1 < len(starts) else len(rows))
            out.append(
                NeighborList(start + r, list(zip(cols[a:b].tolist(), dist[a:b].tolist())))
            )
        return out

    chunk = max(1, _BLOCK_ENTRIES // n)
    return map_chunks(run, queries.count, workers, chunk_size=chunk)


@dataclass(frozen=True)
class QdafnIndex:
    """Random directions, each with its top-``m`` stored references.

    ``ids``, ``projections`` and ``coords`` are indexed ``[direction, slot]``;
    slots are ordered by projection descending (ties by id).
    """

    mean: np.ndarray
    directions: np.ndarray
    ids: np.ndarray
    projections: np.ndarray
    coords: np.ndarray
    m: int
    seed: int

    @property
    def l(self) -> int:
        return self.directions.shape[0]

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def stored(self) -> int:
        return self.ids.size


def qdafn_build(refs: CenteredPointSet, l: int, m: int, seed: int) -> QdafnIndex:
    if l < 1 or m < 1:
        raise ValueError("l and m must both be at least 1")
    if refs.count == 0:
        raise ValueError("reference set is empty")
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((l, refs.dim))
    norms = row_norms(directions)
    while np.any(norms == 0.0):
        zero = norms == 0.0
        directions[zero] = rng.standard_normal((int(zero.sum()), refs.dim))
        norms = row_norms(directions)
    directions /= norms[:, None]

    values = refs.values
    proj = values @ directions.T
    ids_all = np.arange(refs.count)
    width = min(m, refs.count)
    ids = np.empty((l, width), dtype=np.int64)
    for i in range(l):
        ids[i] = np.lexsort((ids_all, -proj[:, i]))[:width]
    projections = np.take_along_axis(proj.T, ids, axis=1)
    coords = values[ids]
    for arr in (directions, ids, projections, coords):
        arr.setflags(write=False)
    return QdafnIndex(refs.mean, directions, ids, projections, coords, m, seed)


def default_budget(index: QdafnIndex) -> int:
    return index.l + index.m


def qdafn_search(
    index: QdafnIndex,
    queries: PointSet,
    k: int,
    budget: int | None = None,
    *,
    tie_seed: int | None = None,
    workers: int | None = None,
    with_counts: bool = False,
) -> list[NeighborList] | tuple[list[NeighborList], np.ndarray]:
    """Query-dependent priority-queue scan over the stored candidates.

    Each direction contributes its stored points in order; a point's key is
    its stored projection minus the query's projection on that direction.
    The queue always yields the largest key next, and the popped direction
    then offers its next stored point. The scan stops after ``budget``
    distinct points have been measured (default ``l + m``) or when the
    directions run dry.

    ``tie_seed`` shuffles how equal keys from different directions are
    ordered; by default ties go to the lower direction index.
    With ``with_counts`` the number of distance evaluations per query is
    returned as well.
    """
    if index.stored == 0:
        raise EmptyIndexError("QDAFN index stores no candidates")
    if k < 1:
        raise ValueError("k must be at least 1")
    if budget is None:
        budget = default_budget(index)
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if queries.dim != index.dim:
        raise ValueError(
            f"dimension mismatch: index has dim {index.dim}, queries have {queries.dim}"
        )

    l, width = index.ids.shape
    if tie_seed is None:
        tiebreak = list(range(l))
    else:
        tiebreak = np.random.default_rng(tie_seed).permutation(l).tolist()
    ids = index.ids.tolist()
    proj = index.projections
    flat_coords = index.coords.reshape(l * width, index.dim)
    centered = queries.values - index.mean
    counts = np.zeros(queries.count, dtype=np.int64)

    def run(start: int, stop: int) -> list[NeighborList]:
        q = centered[start:stop]
        keys_all = (proj[None, :, :] - (q @ index.directions.T)[:, :, None]).tolist()
        diff = q[:, None, :] - flat_coords[None, :, :]
        dist_all = np.sqrt(np.einsum("qcd,qcd->qc", diff, diff)).reshape(-1, l, width).tolist()
        out = []
        for r in range(stop - start):
            keys, dists = keys_all[r], dist_all[r]
            heap = [(-keys[i][0], tiebreak[i], i, 0) for i in range(l)]
            heapq.heapify(heap)
            neighbors = NeighborList(start + r)
            seen: set[int] = set()
            evals = 0
            while heap and evals < budget:
                _, tb, i, j = heapq.heappop(heap)
                if j + 1 < width:
                    heapq.heappush(heap, (-keys[i][j + 1], tb, i, j + 1))
                pid = ids[i][j]
                if pid in seen:
                    continue
                seen.add(pid)
                evals += 1
                topk_update(neighbors, (pid, dists[i][j]), k)
            counts[start + r] = evals
            out.append(neighbors)
        return out

    chunk = max(1, min(1024, 4_000_000 // max(1, index.stored * index.dim)))
    results = map_chunks(run, queries.count, workers, chunk_size=chunk)
    if with_counts:
        return results, counts
    return results


def save_qdafn(index: QdafnIndex, sink: TextIO) -> None:
    l, width = index.ids.shape
    sink.write(f"{MAGIC} {VERSION}\n")
    sink.write(f"{index.dim} {l} {index.m} {index.seed}\n")
    sink.write(format_reals(index.mean) + "\n")
    for i in range(l):
        sink.write(format_reals(index.directions[i]) + "\n")
        sink.write(f"{width}\n")
        for j in range(width):
            sink.write(
                f"{int(index.ids[i, j])} {format_reals([index.projections[i, j]])} "
                f"{format_reals(index.coords[i, j])}\n"
            )


def load_qdafn(source: TextIO) -> QdafnIndex:
    reader = LineReader(source)
    reader.header(MAGIC, VERSION)
    dim, l, m, seed = reader.ints(4)
    mean = reader.reals(dim)
    directions = np.empty((l, dim))
    ids_rows, proj_rows, coord_rows = [], [], []
    width = None
    for i in range(l):
        directions[i] = reader.reals(dim)
        (size,) = reader.ints(1)
        if width is None:
            width = size
        elif size != width:
            raise reader.error("every direction must store the same number of points")
        ids = np.empty(size, dtype=np.int64)
        proj = np.empty(size)
        coords = np.empty((size, dim))
        for j in range(size):
            fields = reader.next().split()
            if len(fields) != dim + 2:
                raise reader.error(f"expected id, projection and {dim} coordinates")
            try:
                ids[j] = int(fields[0])
            except ValueError:
                raise reader.error("malformed id") from None
            vals = reader.parse_reals(fields[1:], dim + 1)
            proj[j] = vals[0]
            coords[j] = vals[1:]
        ids_rows.append(ids)
        proj_rows.append(proj)
        coord_rows.append(coords)
    width = width or 0
    return QdafnIndex(
        mean,
        directions,
        np.array(ids_rows, dtype=np.int64).reshape(l, width),
        np.array(proj_rows).reshape(l, width),
        np.array(coord_rows).reshape(l, width, dim),
        m,
        seed,
    )
