"""Point sets, centering, Euclidean distances and top-k accumulation.

Everything downstream works on dense ``float64`` arrays laid out point-major
(one row per point). Ids are implicit row positions, so a ``PointSet`` with
``count`` rows always carries ids ``0..count-1``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

REAL_FORMAT = "{:.17g}"


class PointParseError(ValueError):
    """Raised when a CSV point stream cannot be parsed."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class PointSet:
    """Dense collection of ``count`` points in ``dim`` dimensions."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("point values must be a 2-D array (count, dim)")
        if values.shape[1] < 1:
            raise ValueError("points must have at least one coordinate")
        if not np.all(np.isfinite(values)):
            raise ValueError("point coordinates must be finite")
        values = np.ascontiguousarray(values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.count, dtype=np.int64)

    def __len__(self) -> int:
        return self.count

    def subset(self, ids: Iterable[int]) -> PointSet:
        """Return the listed points as a new set (ids are renumbered)."""
        return PointSet(self.values[np.asarray(list(ids), dtype=np.int64)])


@dataclass(frozen=True)
class CenteredPointSet:
    """A point set already shifted by ``mean``."""

    base: PointSet
    mean: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.base.values

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def count(self) -> int:
        return self.base.count


@dataclass
class NeighborList:
    """Furthest neighbors of one query.

    ``entries`` holds ``(ref_id, distance)`` pairs ordered by distance
    descending, ties by ref_id ascending.
    """

    query_id: int
    entries: list[tuple[int, float]] = field(default_factory=list)

    @property
    def ids(self) -> list[int]:
        return [i for i, _ in self.entries]

    @property
    def distances(self) -> list[float]:
        return [d for _, d in self.entries]

    def kth_distance(self, k: int) -> float:
        """Distance a new candidate must beat; 0 while the list is not full."""
        if len(self.entries) < k:
            return 0.0
        return self.entries[k - 1][1]

    def __len__(self) -> int:
        return len(self.entries)


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------


def load_points(source: TextIO | str, has_header: bool = False) -> PointSet:
    """Parse comma-separated points, one per line.

    Args:
        source: A text stream, or the CSV content itself as a string.
        has_header: Skip the first non-blank line.

    Raises:
        PointParseError: On ragged rows, non-numeric or non-finite fields,
            or when no data lines are present.
    """
    if isinstance(source, str):
        source = io.StringIO(source)

    rows: list[list[float]] = []
    dim: int | None = None
    header_pending = has_header
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line:
            continue
        if header_pending:
            header_pending = False
            continue
        fields = line.split(",")
        if dim is None:
            dim = len(fields)
        elif len(fields) != dim:
            raise PointParseError(
                f"expected {dim} fields, found {len(fields)}", line=lineno
            )
        try:
            row = [float(f) for f in fields]
        except ValueError:
            raise PointParseError("non-numeric field", line=lineno) from None
        if not all(math.isfinite(x) for x in row):
            raise PointParseError("non-finite field", line=lineno)
        rows.append(row)

    if not rows:
        raise PointParseError("no points found in input")
    return PointSet(np.array(rows, dtype=np.float64))


def save_points(points: PointSet | np.ndarray, sink: TextIO) -> None:
    """Write points as CSV with 17 significant digits (exact round-trip)."""
    values = points.values if isinstance(points, PointSet) else np.asarray(points)
    for row in values:
        sink.write(",".join(REAL_FORMAT.format(x) for x in row))
        sink.write("\n")


def format_reals(values: Iterable[float], sep: str = " ") -> str:
    return sep.join(REAL_FORMAT.format(float(x)) for x in values)


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


def mean_center(
    refs: PointSet, queries: PointSet
) -> tuple[CenteredPointSet, CenteredPointSet]:
    """Shift both sets by the reference centroid.

    Queries are never centered by their own mean.
    """
    if refs.count < 1:
        raise ValueError("reference set is empty")
    if refs.dim != queries.dim:
        raise ValueError(
            f"dimension mismatch: refs have {refs.dim}, queries have {queries.dim}"
        )
    mean = refs.values.mean(axis=0)
    mean.setflags(write=False)
    return center_with(refs, mean), center_with(queries, mean)


def center_with(points: PointSet, mean: np.ndarray) -> CenteredPointSet:
    """Subtract a given mean from every point."""
    mean = np.asarray(mean, dtype=np.float64)
    if mean.shape != (points.dim,):
        raise ValueError(
            f"dimension mismatch: mean has shape {mean.shape}, points have dim {points.dim}"
        )
    return CenteredPointSet(PointSet(points.values - mean), mean)


def euclidean(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return float(math.sqrt(np.dot(diff, diff)))


def row_norms(values: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", values, values))


def pairwise_distances(queries: np.ndarray, refs: np.ndarray) -> np.ndarray:
    """Exact distance matrix via explicit differences (no norm expansion)."""
    diff = queries[:, None, :] - refs[None, :, :]
    return np.sqrt(np.einsum("qrd,qrd->qr", diff, diff))


# ---------------------------------------------------------------------------
# Top-k accumulation
# ---------------------------------------------------------------------------


def topk_update(
    neighbors: NeighborList, candidate: tuple[int, float], k: int
) -> NeighborList:
    """Offer one candidate to a furthest-neighbor list (in place).

    Below capacity the candidate is always inserted. At capacity it replaces
    the k-th entry only if strictly further away. Re-offering an id already
    in the list does nothing.
    """
    ref_id, dist = int(candidate[0]), float(candidate[1])
    entries = neighbors.entries
    if any(i == ref_id for i, _ in entries):
        return neighbors
    if len(entries) >= k:
        if dist <= entries[k - 1][1]:
            return neighbors
        del entries[k - 1 :]
    pos = len(entries)
    for j, (i, d) in enumerate(entries):
        if dist > d or (dist == d and ref_id < i):
            pos = j
            break
    entries.insert(pos, (ref_id, dist))
    return neighbors


def select_topk(
    dists: np.ndarray, ids: np.ndarray, k: int, query_ids: np.ndarray | None = None
) -> list[NeighborList]:
    """Per-row top-k of a (queries, candidates) distance matrix.

    Rows are ordered by distance descending and candidate id ascending, which
    for distinct distances is exactly what repeated ``topk_update`` produces.
    """
    nq, nc = dists.shape
    if query_ids is None:
        query_ids = np.arange(nq)
    if nc == 0:
        return [NeighborList(int(q)) for q in query_ids]
    by_id = np.argsort(ids, kind="stable")
    dists = dists[:, by_id]
    ids = ids[by_id]
    cols = np.argsort(-dists, axis=1, kind="stable")[:, :k]
    top_d = np.take_along_axis(dists, cols, axis=1)
    top_i = ids[cols]
    return [
        NeighborList(int(q), list(zip(row_i.tolist(), row_d.tolist())))
        for q, row_i, row_d in zip(query_ids, top_i, top_d)
    ]


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


def gen_uniform_ball(n: int, d: int, seed: int) -> PointSet:
    """Sample ``n`` points uniformly from the ``d``-dimensional unit ball.

    Direction is a normalized Gaussian vector; radius is ``U ** (1/d)``.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, d))
    norms = row_norms(g)
    # A zero Gaussian draw has probability zero; guard anyway.
    norms[norms == 0.0] = 1.0
    radius = rng.random(n) ** (1.0 / d)
    pts = g / norms[:, None] * radius[:, None]
    # Rounding can push a radius-1 point a hair past the surface.
    over = row_norms(pts) > 1.0
    if np.any(over):
        pts[over] /= np.nextafter(row_norms(pts[over]), np.inf)[:, None]
    return PointSet(pts)


def gen_gaussian_mixture(
    n: int, d: int, seed: int, components: int = 4, decay: float = 0.7
) -> PointSet:
    """Anisotropic Gaussian mixture used in place of the UCI datasets.

    Axis ``j`` has standard deviation ``decay ** j``; component centers are
    drawn with twice that spread along each axis.
    """
    if n < 1 or d < 1 or components < 1:
        raise ValueError("n, d and components must be positive")
    rng = np.random.default_rng(seed)
    scales = decay ** np.arange(d)
    centers = rng.standard_normal((components, d)) * 2.0 * scales
    labels = rng.integers(0, components, n)
    return PointSet(centers[labels] + rng.standard_normal((n, d)) * scales)
