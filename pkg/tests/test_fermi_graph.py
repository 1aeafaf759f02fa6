"""Configuration-graph unit tests.

The d=1 distance oracle used here is the sorted-matching formula: for two
N-point configurations on the line, the hop distance equals the sum of
coordinate differences after sorting both site lists.  It is kept local to
the tests on purpose; the library side must go through BFS.
"""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from andlab.configs import (
    FermiConfig,
    ball,
    boundaries,
    box_configs,
    capped_ball,
    cluster_canonical_form,
    cluster_diameter,
    distances_within,
    graph_distance,
    neighbors,
    pairwise_distances,
    r_clusters,
    shift_equivalence_classes,
    site_dist,
    site_dist_l1,
    weakly_separated,
    weakly_separated_exhaustive,
)


def matching_distance_1d(x, y):
    """Sorted-matching hop distance for d=1 configurations (test oracle)."""
    ax = sorted(s[0] for s in x.sites)
    ay = sorted(s[0] for s in y.sites)
    return sum(abs(a - b) for a, b in zip(ax, ay))


def brute_neighbors(x, lo=-50, hi=50):
    """All configurations reachable by one unit move of one particle."""
    out = set()
    sites = set(x.sites)
    for s in x.sites:
        for axis in range(len(s)):
            for step in (-1, 1):
                t = list(s)
                t[axis] += step
                t = tuple(t)
                if t in sites or not (lo <= t[axis] <= hi):
                    continue
                out.add(FermiConfig.make(list(sites - {s}) + [t]))
    return out


def cfg(*sites):
    return FermiConfig.make([(s,) if np.isscalar(s) else tuple(s) for s in sites])


# ---------------------------------------------------------------------------
# sites and metrics
# ---------------------------------------------------------------------------

def test_site_metrics():
    assert site_dist((0, 0), (3, -4)) == 4
    assert site_dist_l1((0, 0), (3, -4)) == 7
    assert site_dist((2,), (2,)) == 0


def test_config_construction_rejects_duplicates():
    with pytest.raises(ValueError):
        FermiConfig.make([(0,), (0,)])


def test_config_sorted_and_hashable():
    a = FermiConfig.make([(3,), (1,)])
    b = FermiConfig.make([(1,), (3,)])
    assert a == b
    assert a.sites == ((1,), (3,))
    assert len({a, b}) == 1


def test_json_round_trip():
    a = cfg((0, 2), (5, -1))
    assert FermiConfig.from_json(a.to_json()) == a


# ---------------------------------------------------------------------------
# adjacency
# ---------------------------------------------------------------------------

def test_neighbors_match_brute_force_1d():
    for sites in itertools.combinations(range(6), 2):
        x = cfg(*sites)
        assert set(neighbors(x)) == brute_neighbors(x)


def test_neighbors_match_brute_force_2d():
    x = FermiConfig.make([(0, 0), (0, 1), (2, 2)])
    assert set(neighbors(x)) == brute_neighbors(x)


def test_adjacency_is_symmetric():
    x = cfg(0, 3, 4)
    for y in neighbors(x):
        assert x in neighbors(y)


def test_blocked_move_excluded():
    # particles at 0,1: the two inward moves are Pauli-blocked
    x = cfg(0, 1)
    assert set(neighbors(x)) == {cfg(-1, 1), cfg(0, 2)}


# ---------------------------------------------------------------------------
# BFS distance vs the d=1 oracle
# ---------------------------------------------------------------------------

def test_graph_distance_matches_matching_formula():
    window = box_configs(2, (0,), (7,))
    for x, y in itertools.combinations(window, 2):
        assert graph_distance(x, y) == matching_distance_1d(x, y)


def test_graph_distance_cap_returns_none():
    x, y = cfg(0, 1), cfg(10, 12)
    assert graph_distance(x, y, cap=3) is None
    assert graph_distance(x, y) == matching_distance_1d(x, y)


def test_distances_within_agrees_with_pairwise():
    x = cfg(0, 2)
    table = distances_within(x, 4)
    assert table[x] == 0
    for y, rho in table.items():
        assert graph_distance(x, y) == rho
        assert rho <= 4


def test_single_particle_ball_sizes():
    # N=1 graph distance is plain l1 distance, so ball sizes are exact
    c1 = FermiConfig.make([(0,)])
    for L in range(4):
        assert len(ball(c1, L).members) == 2 * L + 1
    c2 = FermiConfig.make([(0, 0)])
    for L in range(4):
        assert len(ball(c2, L).members) == 2 * L * (L + 1) + 1


def test_ball_membership_and_index():
    b = ball(cfg(0, 1), 2)
    assert b.center in b.members
    idx = b.index()
    assert sorted(idx.values()) == list(range(len(b.members)))
    for y in b.members:
        assert graph_distance(b.center, y) <= 2


def test_capped_ball_honest_radius():
    b = capped_ball(cfg(0, 1), 6, budget=10)
    assert len(b.members) <= 10
    assert b.radius < 6
    full = ball(cfg(0, 1), b.radius)
    assert set(full.members) == set(b.members)


# ---------------------------------------------------------------------------
# boundaries
# ---------------------------------------------------------------------------

def test_boundaries_brute_force():
    domain = ball(cfg(0, 1), 2).members
    inner, outer, edges = boundaries(domain)
    dset = set(domain)
    for x in dset:
        touches = any(y not in dset for y in neighbors(x))
        assert (x in inner) == touches
    for y in outer:
        assert y not in dset
        assert any(z in dset for z in neighbors(y))
    for z, w in edges:
        assert z in inner and w in outer
        assert w in set(neighbors(z))
    # every outer config is reached by some edge
    assert {w for _, w in edges} == set(outer)


# ---------------------------------------------------------------------------
# clusters and shift classes
# ---------------------------------------------------------------------------

def test_r_clusters_partition():
    x = cfg(0, 1, 5, 6, 20)
    dec = r_clusters(x, 2)
    got = sorted(s for c in dec.clusters for s in c)
    assert got == sorted(x.sites)
    assert len(dec.clusters) == 3
    assert dec.cardinalities == (1, 2, 2)


def test_clusters_are_maximal():
    x = cfg(0, 1, 5, 6, 20)
    dec = r_clusters(x, 2)
    for a, b in itertools.combinations(dec.clusters, 2):
        gap = min(site_dist(s, t) for s in a for t in b)
        assert gap > 2


def test_cluster_diameter():
    assert cluster_diameter(((0,), (3,))) == 3
    assert cluster_diameter(((5,),)) == 0


def test_canonical_form_shift_invariant():
    x = cfg(0, 1, 7)
    y = x.shifted((11,))
    assert cluster_canonical_form(x, 2) == cluster_canonical_form(y, 2)


def test_shift_classes_two_particles_1d():
    # gaps 1..t are distinct classes; all wider gaps collapse into split shapes
    for t in (1, 2, 3):
        classes = shift_equivalence_classes(2, 1, t)
        assert len(classes) == t + 1


# ---------------------------------------------------------------------------
# weak separation
# ---------------------------------------------------------------------------

def check_witness(x, y, wit):
    lo, hi = np.asarray(wit.lower), np.asarray(wit.upper)

    def inside(s):
        return bool(np.all(lo <= s) and np.all(s <= hi))

    big, small = (x, y) if wit.role == "first" else (y, x)
    assert sum(inside(np.asarray(s)) for s in big.sites) == wit.count_inner
    assert sum(inside(np.asarray(s)) for s in small.sites) == wit.count_other
    assert wit.count_inner > wit.count_other


def test_weak_separation_witness_valid():
    x, y = cfg(0, 1), cfg(5, 9)
    wit = weakly_separated(x, y, 1)
    assert wit is not None
    check_witness(x, y, wit)


def test_weak_separation_l0_distinct_always():
    x, y = cfg(0, 1), cfg(0, 2)
    wit = weakly_separated(x, y, 0)
    assert wit is not None
    check_witness(x, y, wit)
    assert weakly_separated(x, x, 0) is None


def test_weak_separation_agrees_with_exhaustive():
    window = box_configs(2, (0,), (9,))
    for L in (0, 1):
        for x, y in itertools.combinations(window, 2):
            fast = weakly_separated(x, y, L)
            slow = weakly_separated_exhaustive(x, y, L)
            if slow is None:
                assert fast is None
            if fast is not None:
                check_witness(x, y, fast)


def test_distant_pairs_always_separated():
    # hop distance beyond 3NL guarantees a witness
    window = box_configs(2, (0,), (11,))
    L = 1
    cap = 3 * 2 * L
    for x, y in itertools.combinations(window, 2):
        rho = graph_distance(x, y, cap=cap + 1)
        if rho is None or rho > cap:
            assert weakly_separated(x, y, L) is not None


# ---------------------------------------------------------------------------
# property tests
# ---------------------------------------------------------------------------

site_lists = st.lists(st.integers(-8, 8), min_size=2, max_size=4, unique=True)


@settings(max_examples=60, deadline=None)
@given(site_lists, st.integers(-5, 5))
def test_distance_shift_invariant(sites, shift):
    x = cfg(*sites)
    y = cfg(*[s + 1 for s in sites])
    sx, sy = x.shifted((shift,)), y.shifted((shift,))
    assert graph_distance(x, y) == graph_distance(sx, sy)


@settings(max_examples=60, deadline=None)
@given(site_lists)
def test_distance_zero_iff_equal(sites):
    x = cfg(*sites)
    assert graph_distance(x, x) == 0
    for y in neighbors(x):
        assert graph_distance(x, y) == 1


@settings(max_examples=30, deadline=None)
@given(site_lists, site_lists)
def test_pairwise_distance_symmetry(a, b):
    try:
        x, y = cfg(*a), cfg(*b)
    except ValueError:
        return
    if len(x.sites) != len(y.sites):
        return
    dxy = graph_distance(x, y, cap=80)
    dyx = graph_distance(y, x, cap=80)
    assert dxy == dyx


def test_pairwise_distances_table():
    window = box_configs(2, (0,), (4,))
    table = pairwise_distances(window)
    assert table.shape == (len(window), len(window))
    for i, x in enumerate(window):
        for j, y in enumerate(window):
            assert table[i, j] == graph_distance(x, y)
