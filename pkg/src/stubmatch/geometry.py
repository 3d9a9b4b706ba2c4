"""Boxes, distances and a uniform-grid spatial index.

All distances in the package go through :func:`pair_distances` so that the
production kernel, the brute-force oracle and the verifier compare bitwise
identical floats.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class BoxSpec:
    """A cube ``[0, side)^dimension``, optionally with periodic wraparound."""

    dimension: int
    side: float
    periodic: bool = True

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ContractError(f"dimension must be a positive integer, got {self.dimension}")
        if not (self.side > 0 and math.isfinite(self.side)):
            raise ContractError(f"side must be a positive finite real, got {self.side}")
        object.__setattr__(self, "dimension", int(self.dimension))
        object.__setattr__(self, "side", float(self.side))
        object.__setattr__(self, "periodic", bool(self.periodic))

    @property
    def volume(self) -> float:
        return self.side ** self.dimension

    def with_periodic(self, periodic: bool) -> "BoxSpec":
        return BoxSpec(self.dimension, self.side, periodic)


@dataclass(frozen=True)
class PointSet:
    """Point coordinates inside a box. Row ``i`` is point ``i``."""

    box: BoxSpec
    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.size == 0:
            coords = coords.reshape(0, self.box.dimension)
        if coords.ndim != 2 or coords.shape[1] != self.box.dimension:
            raise ContractError(
                f"coords must have shape (N, {self.box.dimension}), got {coords.shape}"
            )
        if coords.size and (coords.min() < 0.0 or coords.max() >= self.box.side):
            raise ContractError(f"coordinates must lie in [0, {self.box.side})")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    def __len__(self):
        return self.coords.shape[0]

    def subset(self, indices) -> "PointSet":
        return PointSet(self.box, self.coords[np.asarray(indices, dtype=np.intp)])


def _delta(a: np.ndarray, b: np.ndarray, box: BoxSpec) -> np.ndarray:
    d = np.abs(a - b)
    if box.periodic:
        d = np.minimum(d, box.side - d)
    return d


def _norm(delta: np.ndarray) -> np.ndarray:
    # explicit per-axis accumulation keeps the summation order fixed
    acc = delta[..., 0] * delta[..., 0]
    for k in range(1, delta.shape[-1]):
        acc = acc + delta[..., k] * delta[..., k]
    return np.sqrt(acc)


def pair_distances(coords: np.ndarray, i, j, box: BoxSpec) -> np.ndarray:
    """Distances between ``coords[i]`` and ``coords[j]``, elementwise."""
    i = np.asarray(i, dtype=np.intp)
    j = np.asarray(j, dtype=np.intp)
    return _norm(_delta(coords[i], coords[j], box))


def distance_matrix(coords: np.ndarray, box: BoxSpec) -> np.ndarray:
    """Full ``N x N`` distance matrix; intended for small brute-force checks."""
    return _norm(_delta(coords[:, None, :], coords[None, :, :], box))


def distance(p, q, box: BoxSpec) -> float:
    """Euclidean distance, using the minimum image when the box is periodic."""
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if p.shape[0] != box.dimension or q.shape[0] != box.dimension:
        raise ContractError(
            f"expected {box.dimension}-vectors, got {p.shape[0]} and {q.shape[0]}"
        )
    return float(_norm(_delta(p[None, :], q[None, :], box))[0])


def default_cell_side(box: BoxSpec, n_points: int) -> float:
    """Cell side giving roughly one point per cell."""
    if n_points <= 0:
        return box.side
    return box.side / math.ceil(box.side * n_points ** (-1.0 / box.dimension))


@dataclass(frozen=True)
class SpatialIndex:
    """Uniform grid over the box with points bucketed by cell.

    Buckets are stored CSR-style: ``order[starts[c]:starts[c + 1]]`` are the
    points in linear cell ``c``.
    """

    points: PointSet
    cell_side: float
    cells_per_axis: int
    cell_of: np.ndarray = field(repr=False)
    order: np.ndarray = field(repr=False)
    starts: np.ndarray = field(repr=False)

    @property
    def box(self) -> BoxSpec:
        return self.points.box

    @property
    def buckets(self) -> dict:
        """Occupied cells as ``{cell coordinate tuple: [point indices]}``."""
        out = {}
        shape = (self.cells_per_axis,) * self.box.dimension
        for c in np.flatnonzero(np.diff(self.starts)):
            key = tuple(int(v) for v in np.unravel_index(c, shape))
            out[key] = self.order[self.starts[c]:self.starts[c + 1]].tolist()
        return out

    def _bucket(self, cell: tuple) -> np.ndarray:
        lin = 0
        for c in cell:
            lin = lin * self.cells_per_axis + c
        return self.order[self.starts[lin]:self.starts[lin + 1]]


def build_index(points: PointSet, cell_side: Optional[float] = None) -> SpatialIndex:
    """Bucket ``points`` into a grid of cubic cells.

    The requested ``cell_side`` is adjusted to ``L / ceil(L / cell_side)`` so
    the grid tiles the box exactly.
    """
    box = points.box
    if cell_side is None:
        cell_side = default_cell_side(box, len(points))
    if not cell_side > 0:
        raise ContractError(f"cell_side must be positive, got {cell_side}")
    ncell = max(1, math.ceil(box.side / cell_side))
    cell_side = box.side / ncell
    cells = np.floor(points.coords / cell_side).astype(np.int64)
    np.clip(cells, 0, ncell - 1, out=cells)
    lin = np.zeros(len(points), dtype=np.int64)
    for k in range(box.dimension):
        lin = lin * ncell + cells[:, k]
    order = np.argsort(lin, kind="stable")
    counts = np.bincount(lin, minlength=ncell ** box.dimension)
    starts = np.concatenate([[0], np.cumsum(counts)])
    for arr in (cells, order, starts):
        arr.setflags(write=False)
    return SpatialIndex(points, cell_side, ncell, cells, order, starts)


Exclude = Union[None, Callable[[int], bool], np.ndarray]


def _ring_offsets(radius: int, dim: int):
    rng = range(-radius, radius + 1)
    for off in itertools.product(rng, repeat=dim):
        if max(abs(o) for o in off) == radius:
            yield off


def nearest(index: SpatialIndex, source: int, exclude: Exclude = None):
    """Exact nearest non-excluded point to ``source``.

    ``exclude`` is either a callable ``j -> bool`` or a boolean mask over
    point indices. Ties in distance go to the smaller index. Returns
    ``(index, distance)`` or ``None`` when every other point is excluded.
    """
    pts = index.points
    n = len(pts)
    if not 0 <= source < n:
        raise ContractError(f"point index {source} out of range")
    box = pts.box
    dim = box.dimension
    ncell = index.cells_per_axis
    home = index.cell_of[source]
    if exclude is None:
        keep = None
    elif callable(exclude):
        keep = exclude
    else:
        mask = np.asarray(exclude, dtype=bool)
        keep = mask.__getitem__

    # a cell first reached at ring r is at least (r - 1) * h away on some axis
    max_ring = ncell // 2 + 1 if box.periodic else ncell
    seen = set()
    best_d = math.inf
    best_j = -1
    h = index.cell_side
    for r in range(max_ring + 1):
        if best_j >= 0 and best_d < (r - 1) * h:
            break
        for off in _ring_offsets(r, dim):
            cell = []
            ok = True
            for k in range(dim):
                c = int(home[k]) + off[k]
                if box.periodic:
                    c %= ncell
                elif not 0 <= c < ncell:
                    ok = False
                    break
                cell.append(c)
            if not ok:
                continue
            cell = tuple(cell)
            if cell in seen:
                continue
            seen.add(cell)
            members = index._bucket(cell)
            if members.size == 0:
                continue
            members = members[members != source]
            if keep is not None and members.size:
                members = members[[not keep(int(j)) for j in members]]
            if members.size == 0:
                continue
            d = pair_distances(pts.coords, np.full(members.size, source), members, box)
            k = np.lexsort((members, d))[0]
            dj, jj = float(d[k]), int(members[k])
            if dj < best_d or (dj == best_d and jj < best_j):
                best_d, best_j = dj, jj
    if best_j < 0:
        return None
    return best_j, best_d
