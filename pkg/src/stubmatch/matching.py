"""Stable multi-matching of stubs on a marked point set.

Two independent implementations are provided:

* :func:`stable_multi_match` -- the production kernel. Candidate edges sit in
  a heap keyed by ``(length, lo, hi)``; each stub-holding point keeps exactly
  one live proposal (its nearest compatible stub-holder) and stale proposals
  are re-issued when popped.
* :func:`stable_multi_match_rounds` -- literal round-by-round execution on a
  dense distance matrix. Only meant for a few hundred points.

Both order candidate pairs by ``(distance, smaller index, larger index)``, so
they agree edge for edge even on inputs with exact distance ties.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import ContractError
from .geometry import BoxSpec, SpatialIndex, distance_matrix, nearest, pair_distances
from .process import MarkedPointSet


class ForbiddenPairs:
    """Unordered index pairs that may never be linked."""

    def __init__(self, pairs: Iterable = ()):
        self._pairs = set()
        for i, j in pairs:
            self.add(i, j)

    def add(self, i, j):
        i, j = int(i), int(j)
        if i == j:
            raise ContractError(f"forbidden pair ({i}, {i}) is a self-loop")
        self._pairs.add((i, j) if i < j else (j, i))

    def __contains__(self, pair):
        i, j = pair
        return ((i, j) if i < j else (j, i)) in self._pairs

    def __len__(self):
        return len(self._pairs)

    def __iter__(self):
        return iter(sorted(self._pairs))

    def adjacency(self, n: int):
        adj = [set() for _ in range(n)]
        for i, j in self._pairs:
            if j >= n:
                raise ContractError(f"forbidden pair ({i}, {j}) out of range for {n} points")
            adj[i].add(j)
            adj[j].add(i)
        return adj

    @classmethod
    def from_matching(cls, matching: "Matching", extra: Optional["ForbiddenPairs"] = None):
        out = cls(zip(matching.i.tolist(), matching.j.tolist()))
        if extra is not None:
            out._pairs |= extra._pairs
        return out


@dataclass(frozen=True)
class Matching:
    """Simple edge list over point indices; ``i[k] < j[k]`` for every edge."""

    n_points: int
    i: np.ndarray
    j: np.ndarray
    length: np.ndarray

    def __post_init__(self):
        i = np.asarray(self.i, dtype=np.int64).reshape(-1)
        j = np.asarray(self.j, dtype=np.int64).reshape(-1)
        length = np.asarray(self.length, dtype=np.float64).reshape(-1)
        if not (i.shape == j.shape == length.shape):
            raise ContractError("edge arrays must have equal length")
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        if lo.size and (lo.min() < 0 or hi.max() >= self.n_points):
            raise ContractError("edge endpoint out of range")
        for arr in (lo, hi, length):
            arr.setflags(write=False)
        object.__setattr__(self, "i", lo)
        object.__setattr__(self, "j", hi)
        object.__setattr__(self, "length", length)

    @classmethod
    def empty(cls, n_points: int) -> "Matching":
        return cls(n_points, np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))

    @classmethod
    def from_pairs(cls, n_points: int, pairs, coords: np.ndarray, box: BoxSpec) -> "Matching":
        pairs = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
        lengths = pair_distances(coords, pairs[:, 0], pairs[:, 1], box)
        return cls(n_points, pairs[:, 0], pairs[:, 1], lengths)

    def __len__(self):
        return self.i.shape[0]

    @property
    def degree_used(self) -> np.ndarray:
        return np.bincount(np.concatenate([self.i, self.j]), minlength=self.n_points)

    def edge_set(self) -> set:
        return set(zip(self.i.tolist(), self.j.tolist()))

    def concat(self, other: "Matching") -> "Matching":
        return Matching(
            self.n_points,
            np.concatenate([self.i, other.i]),
            np.concatenate([self.j, other.j]),
            np.concatenate([self.length, other.length]),
        )

    def is_simple(self) -> bool:
        if np.any(self.i == self.j):
            return False
        return len(self.edge_set()) == len(self)


@dataclass(frozen=True)
class MatchResult:
    matching: Matching
    leftover_stubs: np.ndarray
    steps: int
    info: dict = field(default_factory=dict, compare=False)

    @property
    def leftover_fraction(self) -> float:
        total = self.leftover_stubs.sum() + 2 * len(self.matching)
        return float(self.leftover_stubs.sum() / total) if total else 0.0


def _result(m: MarkedPointSet, matching: Matching, steps: int, **info) -> MatchResult:
    leftover = m.degrees - matching.degree_used
    if leftover.size and leftover.min() < 0:
        raise AssertionError("matching uses more stubs than available")
    return MatchResult(matching, leftover, steps, info)


# --------------------------------------------------------------------------
# round-based oracle


def mutually_closest_pairs(active, compat: Callable[[int, int], bool], index: SpatialIndex):
    """All compatible mutually closest pairs among ``active`` points."""
    active = sorted(set(int(a) for a in active))
    if len(active) < 2:
        return []
    n = len(index.points)
    mask = np.ones(n, dtype=bool)
    mask[active] = False
    nn = {}
    for x in active:
        hit = nearest(index, x, lambda y, x=x: mask[y] or not compat(x, y))
        nn[x] = None if hit is None else hit[0]
    return [(x, y) for x, y in nn.items() if y is not None and x < y and nn.get(y) == x]


def stable_multi_match_rounds(m: MarkedPointSet, forbidden: Optional[ForbiddenPairs] = None,
                              stubs: Optional[np.ndarray] = None) -> MatchResult:
    """Round-by-round procedure on a dense distance matrix.

    Each round links every compatible mutually closest pair among points
    that still hold a stub. ``info["rounds"]`` lists the pairs created per
    round.
    """
    n = len(m)
    dist = distance_matrix(m.coords, m.box) if n else np.zeros((0, 0))
    np.fill_diagonal(dist, np.inf)
    if forbidden is not None:
        for i, j in forbidden:
            dist[i, j] = dist[j, i] = np.inf
    left = (m.degrees if stubs is None else np.asarray(stubs, dtype=np.int64)).copy()
    created = []
    rounds = []
    while True:
        active = left > 0
        if active.sum() < 2:
            break
        idx = np.flatnonzero(active)
        sub = dist[np.ix_(idx, idx)]
        nn = np.argmin(sub, axis=1)
        ok = np.isfinite(sub[np.arange(idx.size), nn])
        mutual = ok & (nn[nn] == np.arange(idx.size)) & (np.arange(idx.size) < nn)
        if not mutual.any():
            break
        a = idx[mutual]
        b = idx[nn[mutual]]
        dist[a, b] = dist[b, a] = np.inf
        left[a] -= 1
        left[b] -= 1
        pairs = list(zip(a.tolist(), b.tolist()))
        rounds.append(pairs)
        created.extend(pairs)
    matching = Matching.from_pairs(n, created, m.coords, m.box)
    return _result(m, matching, len(created), rounds=rounds)


# --------------------------------------------------------------------------
# production kernel


class _CandidateLists:
    """Per-point candidate lists sorted by ``(distance, index)``, grown on demand.

    Lists come from k-nearest queries on a kd-tree. Distances are recomputed
    with :func:`pair_distances`; entries beyond a safety radius just inside
    the k-th tree distance are dropped so a list is always a complete prefix
    of the true ordering.
    """

    def __init__(self, coords, box, sources, targets, k0):
        self.coords = coords
        self.box = box
        self.targets = targets
        self.n_targets = targets.size
        tcoords = coords[targets]
        if box.periodic:
            self.tree = cKDTree(tcoords, boxsize=box.side) if targets.size else None
        else:
            self.tree = cKDTree(tcoords) if targets.size else None
        self.k = {}
        self.lists = {}
        if sources.size and self.tree is not None:
            self._fill(sources, k0)

    def _fill(self, sources, k):
        k = int(min(k, self.n_targets))
        complete = k >= self.n_targets
        d, loc = self.tree.query(self.coords[sources], k=k)
        d = np.asarray(d).reshape(sources.size, k)
        loc = np.asarray(loc).reshape(sources.size, k)
        for row, x in enumerate(sources.tolist()):
            valid = loc[row] < self.n_targets
            cand = self.targets[loc[row][valid]]
            cand = cand[cand != x]
            exact = pair_distances(self.coords, np.full(cand.size, x), cand, self.box)
            if not complete and cand.size:
                safe = d[row][valid].max() * (1.0 - 1e-12)
                keep = exact < safe
                cand, exact = cand[keep], exact[keep]
            order = np.lexsort((cand, exact))
            self.lists[x] = (exact[order].tolist(), cand[order].tolist(), complete)
            self.k[x] = k

    def get(self, x):
        return self.lists.get(x, ([], [], True))

    def grow(self, x):
        """Refill ``x`` with twice as many neighbours; False when nothing is left."""
        _, _, complete = self.get(x)
        if complete or self.tree is None:
            return False
        self._fill(np.array([x]), 2 * self.k[x] + 8)
        return True


def _greedy_kernel(coords, box, stubs, blocked, side=None):
    """Shared heap kernel. ``blocked[x]`` is a set, updated in place with links."""
    n = coords.shape[0]
    stubs = np.asarray(stubs, dtype=np.int64).copy()
    holders = np.flatnonzero(stubs > 0)
    if side is None:
        groups = [(holders, holders)]
    else:
        side = np.asarray(side)
        groups = [
            (holders[side[holders] == s], holders[side[holders] != s]) for s in (0, 1)
        ]
    cand = {}
    for sources, targets in groups:
        if sources.size == 0:
            continue
        k0 = int(stubs[sources].max()) * 2 + 6
        lists = _CandidateLists(coords, box, sources, targets, k0)
        for x in sources.tolist():
            cand[x] = lists
    left = stubs.tolist()
    ptr = [0] * n
    heap = []
    push = heapq.heappush

    def propose(x):
        lists = cand.get(x)
        if lists is None:
            return
        dists, ids, _ = lists.get(x)
        p = ptr[x]
        bx = blocked[x]
        while True:
            while p < len(ids):
                y = ids[p]
                if left[y] > 0 and y not in bx:
                    ptr[x] = p
                    push(heap, (dists[p], x if x < y else y, y if x < y else x, x, y))
                    return
                p += 1
            if not lists.grow(x):
                ptr[x] = p
                return
            dists, ids, _ = lists.get(x)
            p = 0

    for x in holders.tolist():
        propose(x)

    out_i, out_j, out_d = [], [], []
    pop = heapq.heappop
    while heap:
        d, lo, hi, x, y = pop(heap)
        if left[x] == 0:
            continue
        if left[y] == 0 or y in blocked[x]:
            propose(x)
            continue
        out_i.append(lo)
        out_j.append(hi)
        out_d.append(d)
        blocked[x].add(y)
        blocked[y].add(x)
        left[x] -= 1
        left[y] -= 1
        if left[x]:
            propose(x)
    return out_i, out_j, out_d


def stable_multi_match(m: MarkedPointSet, forbidden: Optional[ForbiddenPairs] = None,
                       stubs: Optional[np.ndarray] = None) -> MatchResult:
    """The stable multi-matching of ``m``.

    ``stubs`` overrides the per-point stub counts to be matched (used when
    some stubs were consumed by an earlier construction); leftovers are
    always reported relative to ``m.degrees``.
    """
    n = len(m)
    blocked = forbidden.adjacency(n) if forbidden is not None else [set() for _ in range(n)]
    avail = m.degrees if stubs is None else np.asarray(stubs, dtype=np.int64)
    if avail.shape != (n,):
        raise ContractError("stubs must have one entry per point")
    i, j, d = _greedy_kernel(m.coords, m.box, avail, blocked)
    matching = Matching(n, np.array(i, np.int64), np.array(j, np.int64), np.array(d))
    return MatchResult(matching, m.degrees - matching.degree_used, len(i),
                       {"unused_available": avail - matching.degree_used})


def stable_bipartite_match(red, blue, m: MarkedPointSet,
                           forbidden: Optional[ForbiddenPairs] = None) -> Matching:
    """Degree-one stable matching where only red-blue pairs are compatible."""
    red = np.unique(np.asarray(red, dtype=np.int64))
    blue = np.unique(np.asarray(blue, dtype=np.int64))
    if np.intersect1d(red, blue).size:
        raise ContractError("red and blue must be disjoint")
    n = len(m)
    if red.size == 0 or blue.size == 0:
        return Matching.empty(n)
    stubs = np.zeros(n, dtype=np.int64)
    stubs[red] = 1
    stubs[blue] = 1
    side = np.full(n, -1)
    side[red] = 0
    side[blue] = 1
    blocked = forbidden.adjacency(n) if forbidden is not None else [set() for _ in range(n)]
    i, j, d = _greedy_kernel(m.coords, m.box, stubs, blocked, side=side)
    return Matching(n, np.array(i, np.int64), np.array(j, np.int64), np.array(d))


# --------------------------------------------------------------------------
# stability verification


def _willing_radius(m: MarkedPointSet, result: MatchResult) -> np.ndarray:
    """Distance below which a point would accept a new partner."""
    mt = result.matching
    r = np.zeros(len(m))
    if len(mt):
        np.maximum.at(r, mt.i, mt.length)
        np.maximum.at(r, mt.j, mt.length)
    r[result.leftover_stubs > 0] = np.inf
    return r


def _check_consistent(m: MarkedPointSet, result: MatchResult):
    if result.matching.n_points != len(m):
        raise ContractError("matching and instance disagree on point count")
    if not np.array_equal(result.matching.degree_used + result.leftover_stubs, m.degrees):
        raise ContractError("degree_used + leftover_stubs != degrees")


def _filter_unstable(m, result, compat, forbidden, a, b):
    linked = result.matching.edge_set()
    out = []
    for x, y in zip(a.tolist(), b.tolist()):
        if (x, y) in linked:
            continue
        if forbidden is not None and (x, y) in forbidden:
            continue
        if compat is not None and not compat(x, y):
            continue
        out.append((x, y))
    return sorted(out)


def verify_stability(m: MarkedPointSet, result: MatchResult,
                     compat: Optional[Callable[[int, int], bool]] = None,
                     forbidden: Optional[ForbiddenPairs] = None,
                     method: str = "pruned"):
    """Unordered pairs ``(x, y)``, ``x < y``, that would both rather be linked.

    A point is willing to take ``y`` if it has a leftover stub or an incident
    edge strictly longer than ``|x - y|``. Pairs that are linked, forbidden
    or rejected by ``compat`` never count. An empty list means stable.

    ``method="reference"`` scans all pairs; ``"pruned"`` only looks inside
    each point's willing radius.
    """
    _check_consistent(m, result)
    n = len(m)
    if n < 2:
        return []
    radius = _willing_radius(m, result)
    if method == "reference":
        dist = distance_matrix(m.coords, m.box)
        ok = (dist < radius[:, None]) & (dist < radius[None, :])
        a, b = np.nonzero(np.triu(ok, k=1))
        return _filter_unstable(m, result, compat, forbidden, a, b)
    if method != "pruned":
        raise ContractError(f"unknown method {method!r}")

    box = m.box
    coords = m.coords
    tree = cKDTree(coords, boxsize=box.side) if box.periodic else cKDTree(coords)
    a_parts, b_parts = [], []
    finite = np.flatnonzero(np.isfinite(radius) & (radius > 0))
    if finite.size:
        hits = tree.query_ball_point(coords[finite], radius[finite])
        for x, ys in zip(finite.tolist(), hits):
            if ys:
                ys = np.asarray(ys, dtype=np.int64)
                a_parts.append(np.full(ys.size, x))
                b_parts.append(ys)
    spare = np.flatnonzero(np.isinf(radius))
    if spare.size > 1:
        a, b = np.triu_indices(spare.size, k=1)
        a_parts.append(spare[a])
        b_parts.append(spare[b])
    if not a_parts:
        return []
    a = np.concatenate(a_parts)
    b = np.concatenate(b_parts)
    keep = a != b
    a, b = np.minimum(a[keep], b[keep]), np.maximum(a[keep], b[keep])
    pairs = np.unique(np.stack([a, b], axis=1), axis=0)
    a, b = pairs[:, 0], pairs[:, 1]
    d = pair_distances(coords, a, b, box)
    ok = (d < radius[a]) & (d < radius[b])
    return _filter_unstable(m, result, compat, forbidden, a[ok], b[ok])
