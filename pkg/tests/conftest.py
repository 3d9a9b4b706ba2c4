import numpy as np
import pytest

from stubmatch import BoxSpec, MarkedPointSet, PointSet


def make_instance(coords, degrees, side, periodic=False):
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim == 1:
        coords = coords[:, None]
    box = BoxSpec(coords.shape[1], side, periodic)
    return MarkedPointSet(PointSet(box, coords), np.asarray(degrees, dtype=np.int64))


def brute_force_rounds(inst, forbidden=()):
    """Literal round procedure on python floats, independent of the package.

    Each round every stub-holder picks its nearest compatible stub-holder
    (ties to the smaller index) and all mutual picks are linked at once.
    """
    coords = inst.coords.tolist()
    L = inst.box.side
    periodic = inst.box.periodic
    n = len(coords)

    def dist(a, b):
        s = 0.0
        for u, v in zip(coords[a], coords[b]):
            t = abs(u - v)
            if periodic:
                t = min(t, L - t)
            s += t * t
        return s ** 0.5

    stubs = inst.degrees.tolist()
    linked = {tuple(sorted(p)) for p in forbidden}
    edges = set()
    while True:
        active = [x for x in range(n) if stubs[x] > 0]
        choice = {}
        for x in active:
            best = None
            for y in active:
                if y == x or tuple(sorted((x, y))) in linked:
                    continue
                key = (dist(x, y), y)
                if best is None or key < best:
                    best = key
            if best is not None:
                choice[x] = best[1]
        pairs = {(x, y) for x, y in choice.items() if x < y and choice.get(y) == x}
        if not pairs:
            return edges, stubs
        for x, y in pairs:
            edges.add((x, y))
            linked.add((x, y))
            stubs[x] -= 1
            stubs[y] -= 1


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
