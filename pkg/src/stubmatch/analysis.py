"""Component statistics, edge-length summaries and percolation diagnostics."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.ndimage import minimum_filter

from .errors import ContractError
from .geometry import BoxSpec, PointSet
from .matching import Matching, stable_multi_match
from .process import parse_degree_spec, sample_instance, stream_rng


class UnionFind:
    """Disjoint sets over ``0..n-1`` with union by size and path compression."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True

    def labels(self) -> np.ndarray:
        """Component ids ``0..k-1`` numbered by smallest member."""
        roots = np.array([self.find(x) for x in range(len(self.parent))], dtype=np.int64)
        _, first, inverse = np.unique(roots, return_index=True, return_inverse=True)
        rank = np.empty(first.size, dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(first.size)
        return rank[inverse]


@dataclass(frozen=True)
class ComponentReport:
    component_of: np.ndarray
    sizes: np.ndarray  # indexed by component id

    @property
    def component_count(self) -> int:
        return int(self.sizes.size)

    @property
    def largest_fraction(self) -> float:
        n = int(self.sizes.sum())
        return float(self.sizes.max() / n) if n else 0.0

    @property
    def mean_size(self) -> float:
        """Average size of the component containing a uniformly chosen point."""
        n = int(self.sizes.sum())
        return float((self.sizes.astype(np.float64) ** 2).sum() / n) if n else 0.0

    def size_of_point(self) -> np.ndarray:
        return self.sizes[self.component_of]


def components(n: int, edges: Matching) -> ComponentReport:
    """Connected components of the graph on ``n`` points."""
    if edges.n_points != n:
        raise ContractError("edge list built for a different point count")
    uf = UnionFind(n)
    for a, b in zip(edges.i.tolist(), edges.j.tolist()):
        uf.union(a, b)
    labels = uf.labels()
    sizes = np.bincount(labels, minlength=labels.max() + 1 if n else 0)
    return ComponentReport(labels, sizes)


@dataclass(frozen=True)
class EdgeLengthStats:
    count: int
    mean: float
    max: float
    moments: Dict[float, float]
    histogram: tuple  # (bin edges, counts)
    defined: bool = True


def edge_length_stats(matching: Matching, moment_orders: Sequence[float] = (1, 2),
                      bins: int = 20) -> EdgeLengthStats:
    """Sample moments ``mean(length ** k)`` and a histogram of edge lengths."""
    x = matching.length
    if x.size == 0:
        nan = float("nan")
        return EdgeLengthStats(0, nan, nan, {k: nan for k in moment_orders},
                               (np.zeros(bins + 1), np.zeros(bins, dtype=np.int64)), False)
    moments = {k: (1.0 if k == 0 else float(np.mean(x ** k))) for k in moment_orders}
    counts, edges = np.histogram(x, bins=bins)
    return EdgeLengthStats(int(x.size), float(x.sum() / x.size), float(x.max()),
                           moments, (edges, counts))


def _incidence(matching: Matching):
    inc = [[] for _ in range(matching.n_points)]
    for k, (a, b) in enumerate(zip(matching.i.tolist(), matching.j.tolist())):
        inc[a].append(k)
        inc[b].append(k)
    return inc


def path_components(matching: Matching) -> List[np.ndarray]:
    """Vertex sequences of components that are simple paths with at least one edge."""
    n = matching.n_points
    report = components(n, matching)
    deg = matching.degree_used
    edge_count = np.bincount(report.component_of[matching.i], minlength=report.component_count)
    max_deg = np.zeros(report.component_count, dtype=np.int64)
    np.maximum.at(max_deg, report.component_of, deg)
    is_path = (max_deg <= 2) & (edge_count == report.sizes - 1) & (report.sizes >= 2)
    inc = _incidence(matching)
    ends = matching.i.tolist(), matching.j.tolist()
    out = []
    seen = set()
    for v in np.flatnonzero(deg == 1).tolist():
        c = int(report.component_of[v])
        if not is_path[c] or c in seen:
            continue
        seen.add(c)
        seq = [v]
        prev_edge = -1
        while True:
            nxt = [k for k in inc[seq[-1]] if k != prev_edge]
            if not nxt:
                break
            k = nxt[0]
            a, b = ends[0][k], ends[1][k]
            seq.append(b if a == seq[-1] else a)
            prev_edge = k
        out.append(np.array(seq, dtype=np.int64))
    return out


def locally_maximal_edges(matching: Matching, path_components_only: bool = False) -> List[int]:
    """Indices of edges strictly longer than every edge sharing an endpoint with them."""
    inc = _incidence(matching)
    length = matching.length
    allowed = None
    if path_components_only:
        report = components(matching.n_points, matching)
        path_ids = [int(report.component_of[seq[0]]) for seq in path_components(matching)]
        allowed = np.isin(report.component_of[matching.i], path_ids)
    out = []
    for k, (a, b) in enumerate(zip(matching.i.tolist(), matching.j.tolist())):
        if allowed is not None and not allowed[k]:
            continue
        others = [e for e in inc[a] + inc[b] if e != k]
        if all(length[k] > length[e] for e in others):
            out.append(k)
    return out


# --------------------------------------------------------------------------
# renormalisation cubes


def reach_multiplier(d: int) -> int:
    """Smallest integer ``m`` such that points of face-adjacent cubes of side
    ``a`` are never more than ``m * a`` apart."""
    # farthest corners differ by 2a along the shared axis and a along the others
    return math.ceil(math.sqrt(d + 3) - 1e-12)


@dataclass(frozen=True)
class CubeGrid:
    cube_side: float
    occupancy: np.ndarray  # shape (k,) * d
    acceptable: np.ndarray
    good: np.ndarray
    n_bound: int
    m_reach: int
    radius: int
    good_cluster_sizes: np.ndarray = field(repr=False)

    @property
    def good_fraction(self) -> float:
        return float(self.good.mean()) if self.good.size else 0.0

    @property
    def largest_good_cluster_fraction(self) -> float:
        """Largest face-connected cluster of good cubes over all good cubes."""
        total = int(self.good.sum())
        return float(self.good_cluster_sizes.max() / total) if total else 0.0


def cube_diagnostic(points: PointSet, a: float, n: int, radius: Optional[int] = None) -> CubeGrid:
    """Classify cubes of side ``a`` as acceptable (``1 <= count <= n``) and good.

    A cube is good when every cube of the grid within l-infinity distance
    ``radius`` (default ``2 m``) is acceptable. Good cubes are clustered by
    face adjacency; the grid wraps around when the box is periodic.
    """
    box = points.box
    k = box.side / a
    if abs(k - round(k)) > 1e-9 or round(k) < 1:
        raise ContractError(f"cube side {a} does not tile a box of side {box.side}")
    k = int(round(k))
    d = box.dimension
    m_reach = reach_multiplier(d)
    if radius is None:
        radius = 2 * m_reach
    cells = np.floor(points.coords / a).astype(np.int64)
    np.clip(cells, 0, k - 1, out=cells)
    occ = np.zeros((k,) * d, dtype=np.int64)
    if len(points):
        np.add.at(occ, tuple(cells.T), 1)
    acceptable = (occ >= 1) & (occ <= n)
    # without wraparound the window is truncated at the box boundary
    mode = "wrap" if box.periodic else "nearest"
    good = minimum_filter(acceptable.astype(np.uint8), size=2 * radius + 1, mode=mode)
    good = good.astype(bool)

    uf = UnionFind(occ.size)
    flat_good = good.reshape(-1)
    idx = np.arange(occ.size).reshape(occ.shape)
    for axis in range(d):
        nb = np.roll(idx, -1, axis=axis)
        pair_ok = good & np.roll(good, -1, axis=axis)
        if not box.periodic:
            sl = [slice(None)] * d
            sl[axis] = -1
            pair_ok[tuple(sl)] = False
        for u, v in zip(idx[pair_ok].tolist(), nb[pair_ok].tolist()):
            uf.union(u, v)
    roots = [uf.find(int(u)) for u in np.flatnonzero(flat_good)]
    sizes = np.unique(roots, return_counts=True)[1] if roots else np.zeros(0, dtype=np.int64)
    return CubeGrid(a, occ, acceptable, good, n, m_reach, radius, sizes)


# --------------------------------------------------------------------------
# mass transport on the torus


@dataclass(frozen=True)
class TransportLedger:
    cell_side: float
    sent: np.ndarray
    received: np.ndarray

    @property
    def total_sent(self) -> int:
        return int(self.sent.sum())

    @property
    def total_received(self) -> int:
        return int(self.received.sum())

    @property
    def discrepancy(self) -> np.ndarray:
        return self.sent - self.received


TRANSPORT_RULES = ("unit-mass-per-edge-endpoint", "path-endpoint")


def _path_endpoint_targets(matching: Matching):
    """(source, target) pairs sending to the nearer end of each path component."""
    out = []
    for seq in path_components(matching):
        first, last = int(seq[0]), int(seq[-1])
        L = seq.size - 1
        for pos, v in enumerate(seq.tolist()):
            da, db = pos, L - pos
            if da < db or (da == db and first < last):
                out.append((v, first))
            else:
                out.append((v, last))
    return out


def transport_balance(points: PointSet, matching: Matching, cell_side: float,
                      rule: str = "unit-mass-per-edge-endpoint") -> TransportLedger:
    """Mass sent from and received by each grid cell under a transport rule."""
    box = points.box
    if not box.periodic:
        raise ContractError("transport balance is defined on the torus")
    if rule not in TRANSPORT_RULES:
        raise ContractError(f"unknown transport rule {rule!r}; expected one of {TRANSPORT_RULES}")
    k = max(1, int(round(box.side / cell_side)))
    cell_side = box.side / k
    shape = (k,) * box.dimension
    cells = np.clip(np.floor(points.coords / cell_side).astype(np.int64), 0, k - 1)
    lin = np.ravel_multi_index(tuple(cells.T), shape) if len(points) else np.zeros(0, np.int64)
    if rule == "unit-mass-per-edge-endpoint":
        src = np.concatenate([matching.i, matching.j])
        dst = np.concatenate([matching.j, matching.i])
    else:
        pairs = np.asarray(_path_endpoint_targets(matching), dtype=np.int64).reshape(-1, 2)
        src, dst = pairs[:, 0], pairs[:, 1]
    size = int(np.prod(shape))
    sent = np.bincount(lin[src], minlength=size).reshape(shape)
    received = np.bincount(lin[dst], minlength=size).reshape(shape)
    return TransportLedger(cell_side, sent, received)


# --------------------------------------------------------------------------
# sweeps


SWEEP_COLUMNS = ("param", "mu", "d", "L", "seed", "n_points", "largest_fraction",
                 "mean_comp_size", "leftover_fraction", "runtime_ms")


@dataclass
class SweepConfig:
    """Grid of ``mus x sides`` cells, ``seeds`` replicas per cell.

    ``params`` labels each degree law (defaults to the law string itself). Replica
    seeds are drawn from the ``replicas`` stream of ``base_seed``.
    """

    mus: List[str]
    sides: List[float]
    seeds: int
    dim: int = 2
    intensity: float = 1.0
    periodic: bool = True
    base_seed: int = 0
    params: Optional[List[str]] = None
    timing: bool = False
    jobs: Optional[int] = None

    def replica_seeds(self) -> List[int]:
        rng = stream_rng(self.base_seed, "replicas")
        return [int(s) for s in rng.integers(0, 2 ** 63 - 1, size=self.seeds)]

    def cells(self):
        params = self.params or list(self.mus)
        for param, mu in zip(params, self.mus):
            for L in self.sides:
                for seed in self.replica_seeds():
                    yield param, mu, L, seed


def run_cell(config: SweepConfig, param, mu_spec, L, seed) -> dict:
    t0 = time.perf_counter()
    box = BoxSpec(config.dim, L, config.periodic)
    inst = sample_instance(box, parse_degree_spec(mu_spec), seed, config.intensity)
    res = stable_multi_match(inst)
    rep = components(len(inst), res.matching)
    total = int(inst.degrees.sum())
    runtime = (time.perf_counter() - t0) * 1000.0
    return {
        "param": param,
        "mu": mu_spec,
        "d": config.dim,
        "L": L,
        "seed": seed,
        "n_points": len(inst),
        "largest_fraction": rep.largest_fraction,
        "mean_comp_size": rep.mean_size,
        "leftover_fraction": float(res.leftover_stubs.sum() / total) if total else 0.0,
        "runtime_ms": round(runtime, 3) if config.timing else "",
    }


def _run_cell_args(args):
    return run_cell(*args)


def percolation_sweep(config: SweepConfig) -> List[dict]:
    """Sample, match and measure every grid cell; rows sorted by grid keys."""
    jobs = config.jobs if config.jobs is not None else int(os.environ.get("STUBMATCH_JOBS", "1"))
    work = [(config, *cell) for cell in config.cells()]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell_args, work))
    else:
        rows = [run_cell(*w) for w in work]
    order = {p: k for k, p in enumerate(config.params or config.mus)}
    rows.sort(key=lambda r: (order[r["param"]], r["L"], r["seed"]))
    return rows
