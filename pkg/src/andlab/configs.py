"""Configuration space of N indistinguishable fermions on the lattice Z^d.

A configuration is an N-element set of distinct lattice sites, stored as a
lexicographically sorted tuple.  Two configurations are adjacent when exactly
one particle moves to a vacant lattice nearest neighbor (l1 step of length 1);
graph distance, balls and boundaries all refer to this adjacency.

Norm conventions, fixed package-wide: particle moves and the interaction
range use the l1 site distance, while cluster decompositions and enclosing
cubes use the max-norm, which matches the axis-aligned cube geometry of the
separation construction.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import BudgetExceededError

Site = tuple


def site_dist(p: Site, q: Site) -> int:
    """Max-norm distance between two lattice sites."""
    return max(abs(a - b) for a, b in zip(p, q))


def site_dist_l1(p: Site, q: Site) -> int:
    """l1 distance between two lattice sites (edge geometry)."""
    return sum(abs(a - b) for a, b in zip(p, q))


def _as_site(point, dim: Optional[int] = None) -> Site:
    if isinstance(point, (int, np.integer)):
        point = (int(point),)
    site = tuple(int(c) for c in point)
    if dim is not None and len(site) != dim:
        raise ValueError(f"site {site} has dimension {len(site)}, expected {dim}")
    return site


@dataclass(frozen=True, order=True)
class FermiConfig:
    """Sorted tuple of N distinct sites in Z^d."""

    sites: tuple

    def __post_init__(self):
        sites = self.sites
        if not sites:
            raise ValueError("configuration needs at least one particle")
        d = len(sites[0])
        prev = None
        for s in sites:
            if len(s) != d:
                raise ValueError("sites of mixed dimension")
            if prev is not None and s <= prev:
                raise ValueError(f"sites must be sorted and distinct, got {sites}")
            prev = s

    @classmethod
    def make(cls, points: Iterable) -> "FermiConfig":
        """Canonicalize a collection of sites; integers are accepted for d=1."""
        sites = tuple(sorted(_as_site(p) for p in points))
        return cls(sites)

    @property
    def n(self) -> int:
        return len(self.sites)

    @property
    def d(self) -> int:
        return len(self.sites[0])

    def occupation(self) -> Mapping[Site, int]:
        return {s: 1 for s in self.sites}

    def shifted(self, a) -> "FermiConfig":
        """Translate every particle by the lattice vector ``a``."""
        a = _as_site(a, self.d)
        return FermiConfig(tuple(sorted(tuple(c + da for c, da in zip(s, a)) for s in self.sites)))

    def span(self) -> tuple:
        """Per-axis (min, max) coordinate ranges."""
        arr = np.asarray(self.sites)
        return tuple((int(lo), int(hi)) for lo, hi in zip(arr.min(axis=0), arr.max(axis=0)))

    def to_json(self) -> list:
        return [list(s) for s in self.sites]

    @classmethod
    def from_json(cls, data) -> "FermiConfig":
        return cls.make(data)


def neighbors(x: FermiConfig) -> list:
    """All configurations reachable by moving one particle to a vacant l1 neighbor."""
    occ = set(x.sites)
    d = x.d
    out = []
    sites = x.sites
    for i, p in enumerate(sites):
        for ax in range(d):
            for step in (-1, 1):
                q = p[:ax] + (p[ax] + step,) + p[ax + 1:]
                if q in occ:
                    continue
                out.append(FermiConfig(tuple(sorted(sites[:i] + sites[i + 1:] + (q,)))))
    out.sort()
    return out


def _check_compatible(x: FermiConfig, y: FermiConfig):
    if x.n != y.n or x.d != y.d:
        raise ValueError(
            f"incompatible configurations: ({x.n} particles, d={x.d}) vs ({y.n} particles, d={y.d})"
        )


def distances_within(x: FermiConfig, cap: int) -> dict:
    """BFS distance map from ``x`` to every configuration within graph distance ``cap``."""
    dist = {x: 0}
    frontier = deque([x])
    while frontier:
        cur = frontier.popleft()
        dcur = dist[cur]
        if dcur >= cap:
            continue
        for nb in neighbors(cur):
            if nb not in dist:
                dist[nb] = dcur + 1
                frontier.append(nb)
    return dist


def graph_distance(x: FermiConfig, y: FermiConfig, cap: int = 64) -> Optional[int]:
    """Canonical graph distance by breadth-first search; None when it exceeds ``cap``."""
    _check_compatible(x, y)
    if x == y:
        return 0
    dist = {x: 0}
    frontier = deque([x])
    while frontier:
        cur = frontier.popleft()
        dcur = dist[cur]
        if dcur >= cap:
            return None
        for nb in neighbors(cur):
            if nb == y:
                return dcur + 1
            if nb not in dist:
                dist[nb] = dcur + 1
                frontier.append(nb)
    return None


@dataclass(frozen=True)
class FermiBall:
    """Graph ball: all configurations within distance ``radius`` of ``center``.

    ``members`` is sorted lexicographically and fixes the matrix index order
    of every operator assembled on the ball.
    """

    center: FermiConfig
    radius: int
    members: tuple

    def __len__(self):
        return len(self.members)

    def __contains__(self, x):
        return x in set(self.members)

    def index(self) -> dict:
        return {cfg: i for i, cfg in enumerate(self.members)}


def ball(center: FermiConfig, radius: int, max_size: Optional[int] = None) -> FermiBall:
    """Breadth-first enumeration of the graph ball of given radius."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    dist = distances_within(center, radius)
    if max_size is not None and len(dist) > max_size:
        raise BudgetExceededError(
            f"ball of radius {radius} has {len(dist)} members, budget {max_size}"
        )
    return FermiBall(center, radius, tuple(sorted(dist)))


def capped_ball(center: FermiConfig, radius: int, budget: int) -> FermiBall:
    """Largest complete ball of radius <= ``radius`` fitting inside ``budget``.

    BFS grows shell by shell and stops before the shell that would blow the
    budget, so the result is always a genuine graph ball (the achieved radius
    is in the returned object); callers use it where nominal window sizes are
    astronomically large.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if budget < 1:
        raise BudgetExceededError("budget admits no configurations at all")
    done = {center: 0}
    frontier = [center]
    achieved = 0
    for r in range(1, radius + 1):
        shell = []
        seen = dict(done)
        for cur in frontier:
            for nb in neighbors(cur):
                if nb not in seen:
                    seen[nb] = r
                    shell.append(nb)
        if not shell:
            break                 # graph saturated; nothing farther exists
        if len(seen) > budget:
            break
        done = seen
        frontier = shell
        achieved = r
    return FermiBall(center, achieved, tuple(sorted(done)))


def boundaries(domain: Iterable[FermiConfig]):
    """Inner boundary, outer boundary and crossing edge pairs of a finite domain.

    Returns ``(inner, outer, edges)`` where ``edges`` is the sorted tuple of
    pairs ``(x, y)`` with ``x`` in the domain adjacent to ``y`` outside it.
    """
    dset = set(domain)
    inner, outer, edges = set(), set(), []
    for x in dset:
        for y in neighbors(x):
            if y not in dset:
                inner.add(x)
                outer.add(y)
                edges.append((x, y))
    return frozenset(inner), frozenset(outer), tuple(sorted(edges))


def pairwise_distances(domain: Sequence[FermiConfig], max_nodes: int = 2_000_000) -> np.ndarray:
    """Full-lattice graph distances between all members of ``domain``.

    BFS runs on the unrestricted configuration graph, so paths may leave the
    domain.  Budget guard raises when the search grows past ``max_nodes``.
    """
    domain = list(domain)
    index = {cfg: i for i, cfg in enumerate(domain)}
    n = len(domain)
    out = np.full((n, n), -1, dtype=np.int64)
    for i, x in enumerate(domain):
        remaining = n
        dist = {x: 0}
        out[i, i] = 0
        remaining -= 1
        frontier = deque([x])
        visited = 1
        while frontier and remaining:
            cur = frontier.popleft()
            dcur = dist[cur]
            for nb in neighbors(cur):
                if nb in dist:
                    continue
                dist[nb] = dcur + 1
                visited += 1
                if visited > max_nodes:
                    raise BudgetExceededError("pairwise distance BFS exceeded node budget")
                j = index.get(nb)
                if j is not None:
                    out[i, j] = dcur + 1
                    remaining -= 1
                frontier.append(nb)
    return out


# ---------------------------------------------------------------------------
# cluster decompositions and weak separation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClusterDecomposition:
    """Partition of a configuration into maximal chains of sites within ``threshold``.

    Clusters are max-norm R-connected components: two sites join when their
    max-norm distance is at most ``threshold``; distinct clusters are then
    more than ``threshold`` apart.
    """

    clusters: tuple
    threshold: int

    @property
    def cardinalities(self) -> tuple:
        return tuple(sorted(len(c) for c in self.clusters))


def r_clusters(x: FermiConfig, threshold: int) -> ClusterDecomposition:
    """Union-find decomposition of the particle set at max-norm range ``threshold``."""
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    sites = x.sites
    parent = list(range(len(sites)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in itertools.combinations(range(len(sites)), 2):
        if site_dist(sites[i], sites[j]) <= threshold:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[ri] = rj
    groups = {}
    for i, s in enumerate(sites):
        groups.setdefault(find(i), []).append(s)
    clusters = tuple(sorted(tuple(sorted(g)) for g in groups.values()))
    return ClusterDecomposition(clusters, threshold)


def cluster_diameter(cluster) -> int:
    return max((site_dist(p, q) for p, q in itertools.combinations(cluster, 2)), default=0)


def _enclosing_box(points, pad: int):
    arr = np.asarray(points)
    lo = tuple(int(v) - pad for v in arr.min(axis=0))
    hi = tuple(int(v) + pad for v in arr.max(axis=0))
    return lo, hi


def _box_count(cfg: FermiConfig, lo: Site, hi: Site) -> int:
    return sum(1 for s in cfg.sites if all(l <= c <= h for l, c, h in zip(lo, s, hi)))


@dataclass(frozen=True)
class SeparationWitness:
    """Axis-aligned box certifying weak separation of a configuration pair.

    The box holds ``count_inner`` particles of the config in the ``role``
    position and strictly fewer (``count_other``) of the partner; its max-norm
    diameter never exceeds 2NL.
    """

    lower: Site
    upper: Site
    count_inner: int
    count_other: int
    role: str  # 'first' when x carries the larger count, 'second' for y

    @property
    def diameter(self) -> int:
        return max(h - l for l, h in zip(self.lower, self.upper))


def weakly_separated(x: FermiConfig, y: FermiConfig, L: int) -> Optional[SeparationWitness]:
    """Constructive weak-separation test at scale ``L``.

    Decomposes one configuration into 2L-clusters, surrounds each cluster by
    the minimal box containing its L-neighborhood and compares occupation
    numbers; the symmetric role swap is tried before giving up.  Guaranteed
    to find a witness when the pair distance exceeds 3NL.
    """
    _check_compatible(x, y)
    n = x.n
    for role, (a, b) in (("first", (x, y)), ("second", (y, x))):
        dec = r_clusters(a, 2 * L)
        for cl in dec.clusters:
            lo, hi = _enclosing_box(cl, L)
            na = _box_count(a, lo, hi)
            nb = _box_count(b, lo, hi)
            if na > nb:
                w = SeparationWitness(lo, hi, na, nb, role)
                if w.diameter > 2 * n * L:
                    raise AssertionError("witness box exceeded its diameter bound")
                return w
    return None


def weakly_separated_exhaustive(x: FermiConfig, y: FermiConfig, L: int) -> Optional[SeparationWitness]:
    """Slow reference search over every split of the two particle sets.

    For each choice of sub-configurations with strictly larger cardinality on
    one side, the minimal box around the chosen particles is tested for
    diameter at most 2NL and disjointness from all remaining particles.  Used
    as a test oracle for :func:`weakly_separated`.
    """
    _check_compatible(x, y)
    n = x.n
    for role, (a, b) in (("first", (x, y)), ("second", (y, x))):
        for r1 in range(1, n + 1):
            for sub_a in itertools.combinations(a.sites, r1):
                rest_a = [s for s in a.sites if s not in set(sub_a)]
                for r2 in range(0, r1):
                    for sub_b in itertools.combinations(b.sites, r2):
                        rest_b = [s for s in b.sites if s not in set(sub_b)]
                        lo, hi = _enclosing_box(sub_a + sub_b, 0)
                        if max(h - l for l, h in zip(lo, hi)) > 2 * n * L:
                            continue
                        inside = [
                            s for s in rest_a + rest_b
                            if all(l <= c <= h for l, c, h in zip(lo, s, hi))
                        ]
                        if inside:
                            continue
                        return SeparationWitness(lo, hi, r1, r2, role)
    return None


# ---------------------------------------------------------------------------
# shift equivalence of cluster decompositions
# ---------------------------------------------------------------------------

def cluster_canonical_form(x: FermiConfig, threshold: int) -> tuple:
    """Translation-invariant fingerprint: sorted multiset of cluster shapes.

    Each cluster is normalized by moving its lexicographically least site to
    the origin.  Two configurations share a form exactly when their cluster
    decompositions match bijectively up to per-cluster lattice shifts.
    """
    dec = r_clusters(x, threshold)
    shapes = []
    for cl in dec.clusters:
        base = cl[0]
        shapes.append(tuple(tuple(c - b for c, b in zip(s, base)) for s in cl))
    return tuple(sorted(shapes))


def _representative_from_form(form: tuple, threshold: int, d: int) -> FermiConfig:
    sites = []
    cursor = 0
    for shape in form:
        span = max(s[0] for s in shape)
        for s in shape:
            sites.append((s[0] + cursor,) + s[1:])
        cursor += span + threshold + 2
    return FermiConfig.make(sites)


def shift_equivalence_classes(n: int, d: int, threshold: int, budget: int = 500_000) -> list:
    """Representatives of the shift-equivalence classes at range ``threshold``.

    Enumerates all n-point configurations inside a window just large enough to
    realize every class, canonicalizes, and rebuilds one representative per
    distinct form with clusters laid out along the first axis.
    """
    if n < 1 or d < 1 or threshold < 0:
        raise ValueError("need n >= 1, d >= 1, threshold >= 0")
    m = n * (threshold + 2)
    sites = list(itertools.product(range(m + 1), repeat=d))
    total = 1
    for i in range(n):
        total = total * (len(sites) - i) // (i + 1)
    if total > budget:
        raise BudgetExceededError(
            f"window enumeration needs {total} configurations, budget {budget}"
        )
    forms = {}
    for combo in itertools.combinations(sites, n):
        cfg = FermiConfig(tuple(combo))
        form = cluster_canonical_form(cfg, threshold)
        if form not in forms:
            forms[form] = _representative_from_form(form, threshold, d)
    return sorted(forms.values())


def box_configs(n: int, lows, highs, budget: int = 2_000_000) -> list:
    """All n-particle configurations in the axis-aligned box [lows, highs]."""
    lows = _as_site(lows)
    highs = _as_site(highs, len(lows))
    axes = [range(l, h + 1) for l, h in zip(lows, highs)]
    sites = list(itertools.product(*axes))
    total = 1
    for i in range(n):
        total = total * (len(sites) - i) // (i + 1)
    if total > budget:
        raise BudgetExceededError(f"box enumeration needs {total} configurations")
    return [FermiConfig(tuple(c)) for c in itertools.combinations(sites, n)]
