"""Seeded sampling of marked Poisson point sets.

Random streams use numpy's ``PCG64`` bit generator seeded through
``SeedSequence(seed, spawn_key=(stream,))``, one named stream per purpose
(see :data:`STREAMS`). The PCG64 bit stream is stable across numpy releases;
the variate transforms (``Generator.poisson``, ``Generator.random``) are the
ones from numpy 2.x.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError, DegreeSpecError
from .geometry import BoxSpec, PointSet

STREAMS = {"positions": 1, "degrees": 2, "replicas": 3}

# beyond this many points the coordinate array alone exceeds a few GiB
MAX_POINTS = 2 ** 31 - 1


def stream_rng(seed: int, stream: str) -> np.random.Generator:
    """Independent generator for one named purpose derived from ``seed``."""
    ss = np.random.SeedSequence(int(seed) & (2 ** 64 - 1), spawn_key=(STREAMS[stream],))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class DegreeDistribution:
    """A law on the positive integers, stored as parallel value/probability arrays."""

    values: tuple
    probabilities: tuple

    def __post_init__(self):
        values = tuple(int(v) for v in self.values)
        probs = tuple(float(p) for p in self.probabilities)
        if len(values) != len(probs) or not values:
            raise ContractError("values and probabilities must be non-empty and equally long")
        if len(set(values)) != len(values):
            raise ContractError("degree values must be distinct")
        if min(values) < 1:
            raise ContractError("degree values must be >= 1")
        if any(not (0.0 < p <= 1.0) for p in probs):
            raise ContractError("probabilities must lie in (0, 1]")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ContractError(f"probabilities sum to {math.fsum(probs)!r}, not 1")
        order = sorted(range(len(values)), key=values.__getitem__)
        object.__setattr__(self, "values", tuple(values[k] for k in order))
        object.__setattr__(self, "probabilities", tuple(probs[k] for k in order))

    @classmethod
    def point_mass(cls, k: int) -> "DegreeDistribution":
        return cls((k,), (1.0,))

    @property
    def atoms(self):
        return list(zip(self.values, self.probabilities))

    def mean(self) -> float:
        return math.fsum(v * p for v, p in self.atoms)

    def variance(self) -> float:
        mu = self.mean()
        return math.fsum(p * (v - mu) ** 2 for v, p in self.atoms)

    def prob(self, value: int) -> float:
        return dict(self.atoms).get(int(value), 0.0)

    def tail(self, i: int) -> float:
        """``P(D >= i)``."""
        return math.fsum(p for v, p in self.atoms if v >= i)

    def to_spec(self) -> str:
        if len(self.values) == 1:
            return str(self.values[0])
        return ",".join(f"{v}:{p!r}" for v, p in self.atoms)


_INT = re.compile(r"\s*([+-]?\d+)\s*")
_PAIR = re.compile(r"\s*([+-]?\d+)\s*:\s*([^,]*?)\s*(?:,|$)")


def parse_degree_spec(text: str) -> DegreeDistribution:
    """Parse ``"k"`` (point mass) or ``"v1:p1,v2:p2,..."``.

    >>> parse_degree_spec("1:0.05,2:0.95").atoms
    [(1, 0.05), (2, 0.95)]
    """
    m = _INT.fullmatch(text)
    if m:
        k = int(m.group(1))
        if k < 1:
            raise DegreeSpecError(f"degree must be >= 1, got {k}", m.start(1))
        return DegreeDistribution.point_mass(k)
    values, probs = [], []
    pos = 0
    while pos < len(text):
        m = _PAIR.match(text, pos)
        if not m or m.end() == pos:
            raise DegreeSpecError("expected 'value:probability'", pos)
        v = int(m.group(1))
        if v < 1:
            raise DegreeSpecError(f"degree must be >= 1, got {v}", m.start(1))
        if v in values:
            raise DegreeSpecError(f"duplicate degree value {v}", m.start(1))
        try:
            p = float(m.group(2))
        except ValueError:
            raise DegreeSpecError(f"bad probability {m.group(2)!r}", m.start(2)) from None
        if not (0.0 < p <= 1.0):
            raise DegreeSpecError(f"probability {p} outside (0, 1]", m.start(2))
        values.append(v)
        probs.append(p)
        pos = m.end()
        if text[m.end() - 1:m.end()] == "," and pos == len(text):
            raise DegreeSpecError("trailing comma", pos - 1)
    if not values:
        raise DegreeSpecError("empty degree specification", 0)
    total = math.fsum(probs)
    if abs(total - 1.0) > 1e-9:
        raise DegreeSpecError(f"probabilities sum to {total:.12g}, not 1", len(text))
    probs = [p / total for p in probs]
    # renormalised values may land one ulp off; rebalance onto the largest atom
    k = int(np.argmax(probs))
    probs[k] = 1.0 - math.fsum(p for i, p in enumerate(probs) if i != k)
    return DegreeDistribution(values, probs)


@dataclass(frozen=True)
class MarkedPointSet:
    """Points with a positive stub count per point."""

    points: PointSet
    degrees: np.ndarray

    def __post_init__(self):
        deg = np.asarray(self.degrees, dtype=np.int64).reshape(-1)
        if deg.shape[0] != len(self.points):
            raise ContractError(f"{deg.shape[0]} degrees for {len(self.points)} points")
        if deg.size and deg.min() < 1:
            raise ContractError("degrees must be >= 1")
        deg.setflags(write=False)
        object.__setattr__(self, "degrees", deg)

    def __len__(self):
        return len(self.points)

    @property
    def box(self) -> BoxSpec:
        return self.points.box

    @property
    def coords(self) -> np.ndarray:
        return self.points.coords


def _uniform_in_box(rng: np.random.Generator, n: int, box: BoxSpec) -> np.ndarray:
    coords = rng.random((n, box.dimension)) * box.side
    # u * L can round up to L for u close to 1
    top = np.nextafter(box.side, 0.0)
    np.minimum(coords, top, out=coords)
    return coords


def sample_poisson(box: BoxSpec, intensity: float, seed: int) -> PointSet:
    """Homogeneous Poisson process of the given intensity on ``box``."""
    if not intensity >= 0:
        raise ContractError(f"intensity must be >= 0, got {intensity}")
    lam = intensity * box.volume
    if lam > MAX_POINTS / 2:
        raise MemoryError(f"expected {lam:.3g} points; refusing to allocate")
    rng = stream_rng(seed, "positions")
    n = int(rng.poisson(lam)) if lam > 0 else 0
    return PointSet(box, _uniform_in_box(rng, n, box))


class AliasTable:
    """Walker/Vose alias table for O(1) draws from a finite law."""

    def __init__(self, values: Sequence[int], probabilities: Sequence[float]):
        k = len(values)
        self.values = np.asarray(values, dtype=np.int64)
        scaled = np.asarray(probabilities, dtype=np.float64) * k
        self.prob = np.ones(k)
        self.alias = np.arange(k)
        small = [i for i in range(k) if scaled[i] < 1.0]
        large = [i for i in range(k) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = g
            scaled[g] = (scaled[g] + scaled[s]) - 1.0
            (small if scaled[g] < 1.0 else large).append(g)
        # leftovers are 1 up to rounding
        for i in small + large:
            self.prob[i] = 1.0

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        column = rng.integers(0, len(self.values), size=n)
        coin = rng.random(n)
        pick = np.where(coin < self.prob[column], column, self.alias[column])
        return self.values[pick]


def sample_degrees(points: PointSet, mu: DegreeDistribution, seed: int) -> MarkedPointSet:
    """Attach i.i.d. stub counts with law ``mu`` to ``points``."""
    rng = stream_rng(seed, "degrees")
    table = AliasTable(mu.values, mu.probabilities)
    return MarkedPointSet(points, table.sample(rng, len(points)))


def sample_instance(box: BoxSpec, mu: DegreeDistribution, seed: int,
                    intensity: float = 1.0) -> MarkedPointSet:
    return sample_degrees(sample_poisson(box, intensity, seed), mu, seed)
