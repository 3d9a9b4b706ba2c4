import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_force_rounds, make_instance
from stubmatch import (
    BoxSpec,
    ContractError,
    ForbiddenPairs,
    Matching,
    MatchResult,
    build_index,
    mutually_closest_pairs,
    parse_degree_spec,
    sample_instance,
    stable_bipartite_match,
    stable_multi_match,
    stable_multi_match_rounds,
    verify_stability,
)
from stubmatch.process import MarkedPointSet


def edges(result):
    return result.matching.edge_set()


def test_matching_normalizes_and_is_readonly():
    mt = Matching(3, [2, 0], [0, 1], [1.0, 2.0])
    assert mt.edge_set() == {(0, 2), (0, 1)}
    with pytest.raises(ValueError):
        mt.i[0] = 1


def test_forbidden_rejects_self_loop():
    with pytest.raises(ContractError):
        ForbiddenPairs([(1, 1)])


def test_two_active_points_pair():
    inst = make_instance([[0.0], [2.0]], [1, 1], 10.0)
    pairs = mutually_closest_pairs([0, 1], lambda a, b: True, build_index(inst.points))
    assert [tuple(sorted(p)) for p in pairs] == [(0, 1)]


def test_triangle_gives_shortest_side():
    inst = make_instance([[0.0, 0.0], [3.0, 0.0], [0.0, 2.0]], [1, 1, 1], 10.0)
    pairs = mutually_closest_pairs([0, 1, 2], lambda a, b: True, build_index(inst.points))
    assert [tuple(sorted(p)) for p in pairs] == [(0, 2)]


def test_empty_active_set():
    inst = make_instance([[0.0]], [1], 10.0)
    assert list(mutually_closest_pairs([], lambda a, b: True, build_index(inst.points))) == []


@pytest.mark.parametrize("fn", [stable_multi_match, stable_multi_match_rounds])
def test_two_points(fn):
    res = fn(make_instance([[1.0], [4.0]], [1, 1], 10.0))
    assert edges(res) == {(0, 1)}
    assert res.leftover_stubs.tolist() == [0, 0]


@pytest.mark.parametrize("fn", [stable_multi_match, stable_multi_match_rounds])
def test_three_points_degree_one(fn):
    res = fn(make_instance([0.0, 1.0, 3.0], [1, 1, 1], 10.0))
    assert edges(res) == {(0, 1)}
    assert res.leftover_stubs.tolist() == [0, 0, 1]


def test_three_points_degree_two_rounds():
    res = stable_multi_match_rounds(make_instance([0.0, 1.0, 3.0], [2, 2, 2], 10.0))
    assert [sorted(map(tuple, r)) for r in res.info["rounds"]] == [[(0, 1)], [(1, 2)], [(0, 2)]]
    assert res.leftover_stubs.tolist() == [0, 0, 0]


def test_three_points_degree_two_kernel():
    res = stable_multi_match(make_instance([0.0, 1.0, 3.0], [2, 2, 2], 10.0))
    assert edges(res) == {(0, 1), (1, 2), (0, 2)}
    assert res.leftover_stubs.tolist() == [0, 0, 0]


def test_degree_one_is_classic_stable_matching(rng):
    for seed in range(20):
        inst = sample_instance(BoxSpec(2, 8.0), parse_degree_spec("1"), seed)
        res = stable_multi_match(inst)
        want, left = brute_force_rounds(inst)
        assert edges(res) == want
        assert res.leftover_stubs.sum() == len(inst) % 2
        assert np.all(res.matching.degree_used <= 1)


@pytest.mark.parametrize("spec", ["1", "2", "3", "1:0.05,2:0.95", "1:0.5,3:0.5", "5"])
@pytest.mark.parametrize("periodic", [True, False])
def test_kernel_matches_independent_rounds(spec, periodic):
    for seed in range(6):
        inst = sample_instance(BoxSpec(2, 7.0, periodic), parse_degree_spec(spec), seed)
        res = stable_multi_match(inst)
        want, left = brute_force_rounds(inst)
        assert edges(res) == want
        assert res.leftover_stubs.tolist() == left


def test_kernel_matches_rounds_n200():
    inst = sample_instance(BoxSpec(2, 14.0), parse_degree_spec("2"), 11)
    assert 150 < len(inst) < 250
    assert edges(stable_multi_match(inst)) == edges(stable_multi_match_rounds(inst))


def test_ties_on_a_lattice():
    # every nearest-neighbour distance ties on the integer grid
    g = np.array([[x, y] for x in range(5) for y in range(5)], dtype=float)
    for deg in (1, 2, 3, 4):
        inst = make_instance(g, [deg] * 25, 5.0, periodic=True)
        res = stable_multi_match(inst)
        assert edges(res) == edges(stable_multi_match_rounds(inst))
        assert edges(res) == brute_force_rounds(inst)[0]
        assert verify_stability(inst, res, method="reference") == []


def test_forbidden_pairs_respected():
    inst = sample_instance(BoxSpec(2, 8.0), parse_degree_spec("3"), 2)
    first = stable_multi_match(inst)
    forb = ForbiddenPairs(list(first.matching.edge_set())[:40])
    res = stable_multi_match(inst, forb)
    assert not any(e in forb for e in edges(res))
    assert edges(res) == brute_force_rounds(inst, forbidden=forb)[0]
    assert edges(res) == edges(stable_multi_match_rounds(inst, forb))
    assert verify_stability(inst, res, forbidden=forb) == []


def test_output_is_simple_and_degree_exact():
    inst = sample_instance(BoxSpec(2, 15.0), parse_degree_spec("1:0.5,3:0.5"), 8)
    res = stable_multi_match(inst)
    assert res.matching.is_simple()
    assert np.array_equal(res.matching.degree_used + res.leftover_stubs, inst.degrees)
    assert np.allclose(res.matching.length,
                       [np.linalg.norm(inst.coords[a] - inst.coords[b]
                                       - 15.0 * np.round((inst.coords[a] - inst.coords[b]) / 15.0))
                        for a, b in zip(res.matching.i, res.matching.j)], rtol=1e-12)


def test_replay_of_mutual_closeness():
    """Edges taken in length order were each mutually closest when formed."""
    inst = sample_instance(BoxSpec(2, 6.0), parse_degree_spec("2"), 5)
    res = stable_multi_match(inst)
    coords, L = inst.coords, 6.0

    def dist(a, b):
        d = np.abs(coords[a] - coords[b])
        d = np.minimum(d, L - d)
        return float(np.sqrt((d ** 2).sum()))

    stubs = inst.degrees.copy()
    linked = set()
    order = np.lexsort((res.matching.j, res.matching.i, res.matching.length))
    for k in order:
        a, b = int(res.matching.i[k]), int(res.matching.j[k])
        dab = dist(a, b)
        for x in (a, b):
            for y in range(len(inst)):
                if y in (a, b) or stubs[y] == 0 or tuple(sorted((x, y))) in linked:
                    continue
                assert dist(x, y) >= dab
        linked.add((a, b))
        stubs[a] -= 1
        stubs[b] -= 1


def _permute(inst, perm):
    return MarkedPointSet(inst.points.subset(perm), inst.degrees[perm])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["1", "2", "3", "1:0.5,3:0.5"]), st.integers(1, 2))
def test_permutation_invariance(seed, spec, dim):
    inst = sample_instance(BoxSpec(dim, 6.0 if dim == 2 else 30.0), parse_degree_spec(spec), seed)
    perm = np.random.default_rng(seed).permutation(len(inst))
    base = {(min(a, b), max(a, b)) for a, b in edges(stable_multi_match(inst))}
    res = stable_multi_match(_permute(inst, perm))
    back = {tuple(sorted((int(perm[a]), int(perm[b])))) for a, b in edges(res)}
    assert back == base


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["1", "2", "4", "1:0.05,2:0.95"]),
       st.booleans(), st.integers(1, 3))
def test_kernel_output_is_stable(seed, spec, periodic, dim):
    side = {1: 40.0, 2: 8.0, 3: 4.0}[dim]
    inst = sample_instance(BoxSpec(dim, side, periodic), parse_degree_spec(spec), seed)
    res = stable_multi_match(inst)
    assert verify_stability(inst, res) == []
    assert verify_stability(inst, res, method="reference") == []


def test_unlinked_pair_is_unstable():
    inst = make_instance([0.0, 1.0], [1, 1], 10.0)
    empty = MatchResult(Matching.empty(2), np.array([1, 1]), 0, {})
    assert verify_stability(inst, empty) == [(0, 1)]
    assert verify_stability(inst, empty, method="reference") == [(0, 1)]


def test_three_point_leftover_is_stable():
    inst = make_instance([0.0, 1.0, 3.0], [1, 1, 1], 10.0)
    res = MatchResult(Matching(3, [0], [1], [1.0]), np.array([0, 0, 1]), 1, {})
    assert verify_stability(inst, res) == []


def test_verifiers_agree_on_perturbed_matchings(rng):
    for seed in range(15):
        inst = sample_instance(BoxSpec(2, 7.0), parse_degree_spec("2"), seed)
        res = stable_multi_match(inst)
        keep = rng.random(len(res.matching)) < 0.8
        mt = Matching(len(inst), res.matching.i[keep], res.matching.j[keep], res.matching.length[keep])
        broken = MatchResult(mt, inst.degrees - mt.degree_used, 0, {})
        got = verify_stability(inst, broken)
        assert got == verify_stability(inst, broken, method="reference")
        if not keep.all():
            assert got


def test_verifier_rejects_inconsistent_result():
    inst = make_instance([0.0, 1.0], [1, 1], 10.0)
    bad = MatchResult(Matching.empty(2), np.array([0, 0]), 0, {})
    with pytest.raises(ContractError):
        verify_stability(inst, bad)


def test_bipartite_single_pair():
    inst = make_instance([0.0, 5.0], [1, 1], 10.0)
    assert stable_bipartite_match([0], [1], inst).edge_set() == {(0, 1)}


def test_bipartite_empty_side():
    inst = make_instance([0.0, 5.0], [1, 1], 10.0)
    assert len(stable_bipartite_match([], [0, 1], inst)) == 0


def test_bipartite_perfect_and_stable(rng):
    inst = sample_instance(BoxSpec(2, 13.0), parse_degree_spec("1"), 21)
    idx = rng.permutation(len(inst))[:100]
    sub = MarkedPointSet(inst.points.subset(idx), np.ones(100, dtype=np.int64))
    red, blue = np.arange(50), np.arange(50, 100)
    mt = stable_bipartite_match(red, blue, sub)
    assert len(mt) == 50
    assert np.all(mt.degree_used == 1)
    assert all((a < 50) != (b < 50) for a, b in mt.edge_set())
    res = MatchResult(mt, sub.degrees - mt.degree_used, len(mt), {})
    cross = lambda a, b: (a < 50) != (b < 50)
    assert verify_stability(sub, res, compat=cross) == []
    assert verify_stability(sub, res, compat=cross, method="reference") == []


def test_leftover_fraction_decreases_with_window():
    mu = parse_degree_spec("2")
    fr = []
    for L in (6.0, 12.0, 24.0):
        vals = [stable_multi_match(sample_instance(BoxSpec(2, L), mu, s)).leftover_fraction
                for s in range(8)]
        fr.append(np.mean(vals))
    assert fr[-1] < 0.05
    assert fr[2] <= fr[0]
