"""Constructive matching schemes.

* :func:`finite_component_scheme` -- every degree class ``n`` is cut into
  groups of ``n + 1`` points and each group becomes a complete graph.
* :func:`infinite_path_scheme` -- degree >= 2 points are strung along the
  depth-first orders of a cone forest; the remaining stubs go to the stable
  multi-matching with the path edges forbidden.
* :func:`connectivity_scheme` -- the path scheme, then degree-1 points
  attached to spare stubs of degree >= 3 points by a layered bipartite
  matching, then stable matching of what is left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.spatial import cKDTree

from .analysis import components
from .errors import ContractError, InfeasibleSchemeError
from .geometry import PointSet, pair_distances
from .matching import (
    ForbiddenPairs,
    Matching,
    MatchResult,
    stable_bipartite_match,
    stable_multi_match,
)
from .process import DegreeDistribution, MarkedPointSet


@dataclass(frozen=True)
class TypeAssignment:
    """Types ``1..class_count`` for one degree class; 0 marks other points."""

    class_count: int
    type_of: np.ndarray
    nn_distance: np.ndarray
    degree: Optional[int] = None

    def members(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.type_of == t)

    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.type_of, minlength=self.class_count + 1)[1:]


def nn_distances(m: MarkedPointSet, subset: np.ndarray) -> np.ndarray:
    """Distance from each point of ``subset`` to the nearest other point of ``subset``."""
    subset = np.asarray(subset, dtype=np.int64)
    out = np.full(subset.size, np.inf)
    if subset.size < 2:
        return out
    box = m.box
    c = m.coords[subset]
    tree = cKDTree(c, boxsize=box.side) if box.periodic else cKDTree(c)
    _, loc = tree.query(c, k=2)
    # the first hit may not be the point itself when two points coincide
    other = np.where(loc[:, 0] == np.arange(subset.size), loc[:, 1], loc[:, 0])
    return pair_distances(m.coords, subset, subset[other], box)


def _rank_order(subset: np.ndarray, nnd: np.ndarray) -> np.ndarray:
    return subset[np.lexsort((subset, nnd))]


def _assign_blocks(n_points, ranked, sizes, nnd_all, class_count, degree):
    type_of = np.zeros(n_points, dtype=np.int64)
    start = 0
    for t, size in enumerate(sizes, start=1):
        type_of[ranked[start:start + size]] = t
        start += size
    return TypeAssignment(class_count, type_of, nnd_all, degree)


def partition_by_nn_rank(m: MarkedPointSet, degree_class: int, class_count: int) -> TypeAssignment:
    """Split the degree-``degree_class`` points into ``class_count`` rank blocks.

    Points are ranked by nearest-same-degree-neighbour distance (ties by
    index) and cut into contiguous blocks whose sizes differ by at most one,
    larger blocks first.
    """
    if class_count < 1:
        raise ContractError("class_count must be >= 1")
    subset = np.flatnonzero(m.degrees == degree_class)
    if subset.size < class_count:
        raise InfeasibleSchemeError(
            f"{subset.size} points of degree {degree_class}, need at least {class_count}"
        )
    nnd = nn_distances(m, subset)
    nnd_all = np.full(len(m), np.nan)
    nnd_all[subset] = nnd
    base, extra = divmod(subset.size, class_count)
    sizes = [base + (t < extra) for t in range(class_count)]
    return _assign_blocks(len(m), _rank_order(subset, nnd), sizes, nnd_all,
                          class_count, degree_class)


def _chain_groups(m: MarkedPointSet, types: TypeAssignment) -> List[List[int]]:
    """Groups of one point per type, linked by stable matchings type t <-> t+1."""
    first = types.members(1)
    partner = []
    for t in range(1, types.class_count):
        mt = stable_bipartite_match(types.members(t), types.members(t + 1), m)
        nxt = {}
        later = set(types.members(t + 1).tolist())
        for a, b in zip(mt.i.tolist(), mt.j.tolist()):
            if a in later:
                a, b = b, a
            nxt[a] = b
        partner.append(nxt)
    groups = []
    for x in first.tolist():
        g = [x]
        for nxt in partner:
            g.append(nxt[g[-1]])
        groups.append(g)
    return groups


def finite_component_scheme(m: MarkedPointSet) -> MatchResult:
    """Complete graphs on groups of ``n + 1`` points within each degree class ``n``.

    When a class size is not a multiple of ``n + 1`` the surplus points with
    the largest nearest-neighbour distance stay unmatched; they are listed in
    ``info["remainder"]``.
    """
    n = len(m)
    pairs = []
    remainder = {}
    assignments = {}
    for deg in np.unique(m.degrees).tolist():
        subset = np.flatnonzero(m.degrees == deg)
        size = deg + 1
        g, r = divmod(subset.size, size)
        nnd = nn_distances(m, subset)
        ranked = _rank_order(subset, nnd)
        remainder[deg] = np.sort(ranked[ranked.size - r:]) if r else np.empty(0, np.int64)
        if g == 0:
            continue
        nnd_all = np.full(n, np.nan)
        nnd_all[subset] = nnd
        types = _assign_blocks(n, ranked[:g * size], [g] * size, nnd_all, size, deg)
        assignments[deg] = types
        for group in _chain_groups(m, types):
            for a in range(size):
                for b in range(a + 1, size):
                    pairs.append((group[a], group[b]))
    matching = Matching.from_pairs(n, pairs, m.coords, m.box)
    return MatchResult(matching, m.degrees - matching.degree_used, len(pairs),
                       {"remainder": remainder, "types": assignments})


# --------------------------------------------------------------------------
# cone forest and path orders


@dataclass(frozen=True)
class ConeForest:
    """``parent[x]`` is the cone-minimal point above ``x``, or -1 for a root."""

    parent: np.ndarray
    cone_axis: np.ndarray = field(default_factory=lambda: np.array([1.0]))

    @property
    def roots(self) -> np.ndarray:
        return np.flatnonzero(self.parent < 0)


def cone_forest(points: PointSet) -> ConeForest:
    """Link each point to the point of its forward cone with least first coordinate.

    The cone at ``x`` is ``{y : y_1 - x_1 >= |(y_2 - x_2, ..., y_d - x_d)|}``
    minus ``x`` itself; ties in first coordinate go to the smaller index.
    Requires a non-periodic box.
    """
    box = points.box
    if box.periodic:
        raise ContractError("cone forests need a non-periodic box")
    n = len(points)
    coords = points.coords
    parent = np.full(n, -1, dtype=np.int64)
    axis = np.zeros(box.dimension)
    axis[0] = 1.0
    if n < 2:
        return ConeForest(parent, axis)
    order = np.lexsort((np.arange(n), coords[:, 0]))
    sc = coords[order]
    for pos in range(n - 1):
        x = sc[pos]
        lo = pos + 1
        width = 16
        while lo < n:
            hi = min(n, lo + width)
            block = sc[lo:hi]
            d1 = block[:, 0] - x[0]
            rest = block[:, 1:] - x[1:]
            lateral = np.sqrt((rest * rest).sum(axis=1))
            inside = (d1 >= lateral) & (d1 > 0)
            if inside.any():
                parent[order[pos]] = order[lo + int(np.argmax(inside))]
                break
            lo = hi
            width *= 2
    return ConeForest(parent, axis)


def dfs_path_order(forest: ConeForest, points: PointSet) -> List[np.ndarray]:
    """Depth-first vertex order of every tree, children by distance to parent.

    Trees are returned in order of their root index.
    """
    parent = forest.parent
    n = parent.size
    children = [[] for _ in range(n)]
    kids = np.flatnonzero(parent >= 0)
    if kids.size:
        d = pair_distances(points.coords, kids, parent[kids], points.box)
        for k in np.lexsort((kids, d)).tolist():
            children[int(parent[kids[k]])].append(int(kids[k]))
    out = []
    for root in np.flatnonzero(parent < 0).tolist():
        seq = []
        stack = [root]
        while stack:
            v = stack.pop()
            seq.append(v)
            stack.extend(reversed(children[v]))
        out.append(np.array(seq, dtype=np.int64))
    return out


def _path_stage(m: MarkedPointSet):
    """Path edges over degree >= 2 points and stubs left for later stages."""
    if m.box.periodic:
        raise ContractError("path constructions need a non-periodic box")
    big = np.flatnonzero(m.degrees >= 2)
    if big.size < 2:
        raise InfeasibleSchemeError("need at least two points of degree >= 2")
    forest = cone_forest(m.points.subset(big))
    paths = [big[p] for p in dfs_path_order(forest, m.points.subset(big))]
    pairs = []
    for p in paths:
        pairs.extend(zip(p[:-1].tolist(), p[1:].tolist()))
    path_edges = Matching.from_pairs(len(m), pairs, m.coords, m.box)
    # every path vertex gives two stubs to its path; the stub a path end
    # misses is a truncation artifact and is reported as leftover
    available = m.degrees.copy()
    available[big] -= 2
    tree_of = np.full(len(m), -1, dtype=np.int64)
    for t, p in enumerate(paths):
        tree_of[p] = t
    return path_edges, available, paths, tree_of


def infinite_path_scheme(m: MarkedPointSet) -> MatchResult:
    """Paths through all degree >= 2 points, then stable matching of residual stubs."""
    path_edges, available, paths, tree_of = _path_stage(m)
    rest = stable_multi_match(m, ForbiddenPairs.from_matching(path_edges), stubs=available)
    matching = path_edges.concat(rest.matching)
    return MatchResult(matching, m.degrees - matching.degree_used, len(matching),
                       {"paths": paths, "tree_of": tree_of, "path_edges": len(path_edges)})


# --------------------------------------------------------------------------
# partial matching of degree-one points to spare stubs


@dataclass(frozen=True)
class PartialMatchingPlan:
    """Layer count ``m`` and layer weights ``p`` for the partial matching.

    ``m_infinite`` is set in the equality case, where ``m`` is capped at the
    largest support value of the stub law.
    """

    m: int
    p: tuple
    lambda_r: float
    lambda_s: float
    m_infinite: bool = False
    thresholds: tuple = ()


def plan_partial_matching(nu: DegreeDistribution, lambda_r: float, lambda_s: float,
                          rtol: float = 1e-12) -> PartialMatchingPlan:
    """Number of layers and their weights for matching rate-``lambda_r`` points.

    Layer ``i`` of the stub side holds the points with at least ``i`` spare
    stubs, of rate ``P(X >= i) * lambda_s``. ``m`` is the first layer at
    which the cumulative stub rate reaches ``lambda_r``; layers before it are
    filled exactly and layer ``m`` takes the rest.
    """
    if lambda_r < 0 or lambda_s < 0:
        raise ContractError("intensities must be nonnegative")
    capacity = nu.mean() * lambda_s
    if lambda_r > capacity * (1 + rtol):
        raise InfeasibleSchemeError(
            f"lambda_R={lambda_r!r} exceeds E[X]*lambda_S={capacity!r}"
        )
    if lambda_r == 0:
        return PartialMatchingPlan(1, (1.0,), lambda_r, lambda_s)
    top = max(nu.values)
    if abs(lambda_r - capacity) <= rtol * capacity:
        p = [nu.tail(i) * lambda_s / lambda_r for i in range(1, top + 1)]
        # the weights sum to E[X] * lambda_s / lambda_r = 1 up to rounding
        p[-1] = 1.0 - math.fsum(p[:-1])
        return PartialMatchingPlan(top, tuple(p), lambda_r, lambda_s, m_infinite=True)
    cum = 0.0
    m_layers = top
    for j in range(1, top + 1):
        cum += nu.tail(j) * lambda_s
        if cum >= lambda_r:
            m_layers = j
            break
    if m_layers == 1:
        return PartialMatchingPlan(1, (1.0,), lambda_r, lambda_s)
    p = [nu.tail(i) * lambda_s / lambda_r for i in range(1, m_layers)]
    p.append(1.0 - math.fsum(p))
    return PartialMatchingPlan(m_layers, tuple(p), lambda_r, lambda_s)


def empirical_law(values) -> DegreeDistribution:
    vals, counts = np.unique(np.asarray(values, dtype=np.int64), return_counts=True)
    probs = counts / counts.sum()
    probs[-1] = 1.0 - math.fsum(probs[:-1])
    return DegreeDistribution(vals.tolist(), probs.tolist())


def layered_partial_matching(m: MarkedPointSet, singles: np.ndarray, hubs: np.ndarray,
                             spare: np.ndarray, forbidden: Optional[ForbiddenPairs] = None):
    """Match every point of ``singles`` to one spare stub of a point in ``hubs``.

    ``spare[x]`` is the stub budget of hub ``x``. Singles are split into
    nearest-neighbour rank layers sized by the plan and layer ``i`` is
    stably matched to the hubs with at least ``i`` spare stubs.
    Returns ``(matching, plan, layer_of)``.
    """
    n = len(m)
    singles = np.asarray(singles, dtype=np.int64)
    hubs = np.asarray(hubs, dtype=np.int64)
    hubs = hubs[spare[hubs] > 0]
    if singles.size == 0:
        return Matching.empty(n), None, np.zeros(n, dtype=np.int64)
    if hubs.size == 0:
        raise InfeasibleSchemeError("no spare stubs to attach degree-1 points to")
    vol = m.box.volume
    plan = plan_partial_matching(empirical_law(spare[hubs]), singles.size / vol, hubs.size / vol)
    sizes = [int(round(p * singles.size)) for p in plan.p[:-1]]
    sizes.append(singles.size - sum(sizes))
    nnd = nn_distances(m, singles)
    ranked = _rank_order(singles, nnd)
    layer_of = np.zeros(n, dtype=np.int64)
    start = 0
    out = Matching.empty(n)
    for layer, size in enumerate(sizes, start=1):
        members = ranked[start:start + size]
        start += size
        layer_of[members] = layer
        out = out.concat(stable_bipartite_match(members, hubs[spare[hubs] >= layer], m, forbidden))
    return out, plan, layer_of


def connectivity_scheme(m: MarkedPointSet) -> MatchResult:
    """Path scheme plus layered attachment of degree-1 points plus stable matching.

    Refuses instances whose mean degree is below 2.
    """
    if len(m) == 0 or m.degrees.sum() < 2 * len(m):
        raise InfeasibleSchemeError("mean degree below 2")
    path_edges, available, paths, tree_of = _path_stage(m)
    singles = np.flatnonzero(m.degrees == 1)
    hubs = np.flatnonzero(m.degrees >= 3)
    spare = np.where(m.degrees >= 3, available, 0)
    attach, plan, layer_of = layered_partial_matching(m, singles, hubs, spare)
    matching = path_edges.concat(attach)
    available = available - attach.degree_used
    available[singles] = 0
    rest = stable_multi_match(m, ForbiddenPairs.from_matching(matching), stubs=available)
    matching = matching.concat(rest.matching)
    report = components(len(m), matching)
    return MatchResult(matching, m.degrees - matching.degree_used, len(matching), {
        "paths": paths,
        "tree_of": tree_of,
        "plan": plan,
        "layer_of": layer_of,
        "unattached_singles": int((matching.degree_used[singles] == 0).sum()),
        "component_count": report.component_count,
    })


# --------------------------------------------------------------------------
# mass transport inequality


@dataclass(frozen=True)
class MassBoundReport:
    m_in: np.ndarray
    m_out: np.ndarray
    slack: np.ndarray  # (D - 2) - (M_in - M_out); negative entries violate
    threshold: int

    @property
    def violations(self) -> np.ndarray:
        return np.flatnonzero(self.slack < 0)

    @property
    def holds(self) -> bool:
        return self.violations.size == 0

    @property
    def balanced(self) -> bool:
        return int(self.m_in.sum()) == int(self.m_out.sum())


def bridge_sides(n: int, matching: Matching):
    """Bridges of the graph with the vertex count on each side.

    Returns a list of ``(u, v, size_u_side, size_v_side)``.
    """
    adj = [[] for _ in range(n)]
    for k, (a, b) in enumerate(zip(matching.i.tolist(), matching.j.tolist())):
        adj[a].append((b, k))
        adj[b].append((a, k))
    disc = [-1] * n
    low = [0] * n
    sub = [1] * n
    out = []
    timer = 0
    for root in range(n):
        if disc[root] >= 0:
            continue
        comp = []
        disc[root] = low[root] = timer
        timer += 1
        stack = [(root, -1, iter(adj[root]))]
        tree_edges = []
        while stack:
            v, via, it = stack[-1]
            advanced = False
            for w, k in it:
                if k == via:
                    continue
                if disc[w] < 0:
                    disc[w] = low[w] = timer
                    timer += 1
                    stack.append((w, k, iter(adj[w])))
                    advanced = True
                    break
                low[v] = min(low[v], disc[w])
            if advanced:
                continue
            stack.pop()
            comp.append(v)
            if stack:
                u = stack[-1][0]
                low[u] = min(low[u], low[v])
                sub[u] += sub[v]
                if low[v] > disc[u]:
                    tree_edges.append((u, v))
        size = len(comp)
        out.extend((u, v, size - sub[v], sub[v]) for u, v in tree_edges)
    return out


def mass_bound_check(m: MarkedPointSet, result: MatchResult,
                     threshold: Optional[int] = None) -> MassBoundReport:
    """Per-vertex check of ``D_x - 2 >= M_in - M_out``.

    ``x`` sends one unit to a neighbour ``y`` when the edge is a bridge and
    cutting it leaves ``x`` in a piece with fewer than ``threshold`` vertices.
    The default threshold ``N + 1`` makes every piece count as finite.
    """
    n = len(m)
    thr = n + 1 if threshold is None else int(threshold)
    m_in = np.zeros(n, dtype=np.int64)
    m_out = np.zeros(n, dtype=np.int64)
    for u, v, su, sv in bridge_sides(n, result.matching):
        if su < thr:
            m_out[u] += 1
            m_in[v] += 1
        if sv < thr:
            m_out[v] += 1
            m_in[u] += 1
    slack = (m.degrees - 2) - (m_in - m_out)
    return MassBoundReport(m_in, m_out, slack, thr)
