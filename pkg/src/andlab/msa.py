"""Multi-scale machinery: scale sequences, Green functions, resonance and
singularity classification, dominated-function bounds, scans and reports.

Thresholds here live on wildly different scales (resonance widths can be
2^-280 while Green values sit near 1), so every comparison that could
underflow is done on logarithms; float fields are kept alongside for
reporting and may quietly be 0.0 or inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import potential as pot
from .configs import FermiConfig, distances_within, boundaries, neighbors
from .errors import BudgetExceededError, NearResonantError
from .operators import FiniteHamiltonian, Spectrum, diagonalize

LN2 = math.log(2.0)


def gamma(m: float, L: int) -> float:
    """Decay exponent target: m(1 + L^(-1/8))L for L >= 1, 2m at L = 0.

    Satisfies mL < gamma < 2mL for every L >= 1.
    """
    if m <= 0:
        raise ValueError("need m > 0")
    if L < 0:
        raise ValueError("need L >= 0")
    if L == 0:
        return 2.0 * m
    return m * (1.0 + L ** (-0.125)) * L


# ---------------------------------------------------------------------------
# scale sequence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScaleLevel:
    j: int
    L: int
    generation: int      # finest dyadic generation resolving the L^4 window
    log2_beta: float
    log2_delta: float

    @property
    def beta(self) -> float:
        return 2.0 ** self.log2_beta if self.log2_beta > -1074 else 0.0

    @property
    def delta(self) -> float:
        return 2.0 ** self.log2_delta if self.log2_delta > -1074 else 0.0


class ScaleSequence:
    """Doubling-exponent length scales L_j = L0^(2^j) with their widths.

    Level j = -1 is the single-site scale: L = 0 by convention, but its
    dyadic generation (and hence beta, delta) is taken from L0.  beta_j is
    the weight of one generation step below the resolving generation and
    delta_j multiplies it by the generation weight itself; both decay so
    fast that the float fields underflow quickly (log2 fields are exact).
    """

    def __init__(self, L0: int, b: float, A: int = 1, C: float = 3.0, j_max: int = 4):
        if L0 < 2:
            raise ValueError("need L0 >= 2")
        if j_max < 0:
            raise ValueError("need j_max >= 0")
        self.L0 = int(L0)
        self.b = float(b)
        self.A = int(A)
        self.C = float(C)
        self.j_max = int(j_max)
        levels = []
        for j in range(-1, j_max + 1):
            L = 0 if j == -1 else L0 ** (2 ** j)
            gen = pot.window_generation(L0 if j == -1 else L, A, C)
            log2_beta = -2.0 * b * gen
            log2_delta = log2_beta + pot.log2_generation_weight(gen, b)
            levels.append(ScaleLevel(j, L, gen, log2_beta, log2_delta))
        self.levels = tuple(levels)

    def level(self, j: int) -> ScaleLevel:
        if not -1 <= j <= self.j_max:
            raise ValueError(f"level {j} outside [-1, {self.j_max}]")
        return self.levels[j + 1]

    def shape_fit(self):
        """Fitted (C2, Cp) in log2(delta_j) ~ log2(C2) - Cp 2^j ln(L0) log2(L0).

        Reported only; the constants are not pinned anywhere.
        """
        xs = np.asarray([2.0 ** lev.j * math.log(self.L0) * math.log2(self.L0)
                         for lev in self.levels if lev.j >= 0])
        ys = np.asarray([lev.log2_delta for lev in self.levels if lev.j >= 0])
        slope, intercept = np.polyfit(xs, ys, 1)
        c2 = math.inf if intercept > 1023 else 2.0 ** float(intercept)
        return c2, -slope


# ---------------------------------------------------------------------------
# Green functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GreenData:
    domain: tuple
    energy: float
    matrix: np.ndarray
    margin: float  # dist(spectrum, E)

    def value(self, x, y) -> float:
        idx = {c: i for i, c in enumerate(self.domain)}
        return float(self.matrix[idx[x], idx[y]])


def green(H: FiniteHamiltonian, E: float, min_margin: Optional[float] = None) -> GreenData:
    """Resolvent (H - E)^(-1) through the full eigensystem.

    Refuses energies closer to the spectrum than ``min_margin`` (default
    1e-12 times the spectral radius) since the columns are then garbage.
    """
    vals, vecs = np.linalg.eigh(H.matrix)
    margin = float(np.min(np.abs(vals - E)))
    scale = max(float(np.max(np.abs(vals))), 1.0)
    floor = 1e-12 * scale if min_margin is None else min_margin
    if margin < floor or margin == 0.0:
        raise NearResonantError(
            f"E={E} is within {margin:.3e} of the spectrum (floor {floor:.3e})")
    G = (vecs / (vals - E)) @ vecs.T
    return GreenData(H.domain, float(E), G, margin)


def _boundary_pairs(parent: FiniteHamiltonian, sub_idx: dict):
    """Edges (z inside, z' outside) of the sub-domain within the parent."""
    parent_idx = parent.index()
    pairs = []
    for z in sub_idx:
        for nb in neighbors(z):
            if nb in parent_idx and nb not in sub_idx:
                pairs.append((z, nb))
    return pairs


@dataclass(frozen=True)
class GreDefect:
    absolute: float
    relative: float
    scale: float


def gre_defect(parent: FiniteHamiltonian, subdomain, x, y, E: float,
               parent_green: Optional[GreenData] = None) -> GreDefect:
    """Mismatch in the geometric resolvent identity across the sub-domain edge.

    For x in the sub-domain: G'(x,y) = 1_{y in sub} G_sub(x,y)
    + sum over edge pairs (z, z') of G_sub(x,z) (-H_{z z'}) G'(z',y).
    The restriction is the exact sub-block, so the identity holds to
    solver accuracy; the relative defect is normalized by the largest
    magnitude entering the identity.
    """
    subdomain = tuple(subdomain)
    sub_idx = {c: i for i, c in enumerate(subdomain)}
    if x not in sub_idx:
        raise ValueError("x must lie in the sub-domain")
    Gp = parent_green if parent_green is not None else green(parent, E)
    parent_idx = parent.index()
    Gs = green(parent.restrict(subdomain), E)
    lhs = Gp.matrix[parent_idx[x], parent_idx[y]]
    rhs = Gs.matrix[sub_idx[x], sub_idx[y]] if y in sub_idx else 0.0
    terms = [abs(lhs), abs(rhs)]
    for z, zp in _boundary_pairs(parent, sub_idx):
        hop = parent.matrix[parent_idx[z], parent_idx[zp]]
        term = Gs.matrix[sub_idx[x], sub_idx[z]] * (-hop) * \
            Gp.matrix[parent_idx[zp], parent_idx[y]]
        rhs += term
        terms.append(abs(term))
    absolute = abs(lhs - rhs)
    scale = max(max(terms), 1e-300)
    return GreDefect(absolute, absolute / scale, scale)


def eigenfunction_gre_defect(parent: FiniteHamiltonian, subdomain, x, k: int,
                             spectrum: Optional[Spectrum] = None) -> GreDefect:
    """Defect of psi(x) = sum over edges of G_sub(x,z;E) (-H_{z z'}) psi(z')
    for the k-th eigenpair of the parent and x inside the sub-domain."""
    subdomain = tuple(subdomain)
    sub_idx = {c: i for i, c in enumerate(subdomain)}
    if x not in sub_idx:
        raise ValueError("x must lie in the sub-domain")
    spec = spectrum if spectrum is not None else diagonalize(parent)
    E = float(spec.eigenvalues[k])
    psi = spec.eigenvectors[:, k]
    parent_idx = parent.index()
    Gs = green(parent.restrict(subdomain), E)
    lhs = psi[parent_idx[x]]
    rhs = 0.0
    terms = [abs(lhs)]
    for z, zp in _boundary_pairs(parent, sub_idx):
        hop = parent.matrix[parent_idx[z], parent_idx[zp]]
        term = Gs.matrix[sub_idx[x], sub_idx[z]] * (-hop) * psi[parent_idx[zp]]
        rhs += term
        terms.append(abs(term))
    absolute = abs(lhs - rhs)
    scale = max(max(terms), 1e-300)
    return GreDefect(absolute, absolute / scale, scale)


# ---------------------------------------------------------------------------
# resonance / singularity classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResonanceReport:
    nonresonant: bool
    distance: float
    threshold: float

    @property
    def margin(self) -> float:
        return self.distance - self.threshold


def classify_resonant(eigenvalues, E: float, threshold: float) -> ResonanceReport:
    """Non-resonant iff dist(spectrum, E) >= threshold (>= is the convention).

    ``threshold`` is typically g * delta_j of the working scale level; it is
    a parameter because the literature normalizes it more than one way.
    """
    if isinstance(eigenvalues, FiniteHamiltonian):
        vals = np.linalg.eigvalsh(eigenvalues.matrix)
    else:
        vals = np.atleast_1d(np.asarray(eigenvalues, dtype=float))
    dist = float(np.min(np.abs(vals - E)))
    return ResonanceReport(dist >= threshold, dist, float(threshold))


@dataclass(frozen=True)
class SingularityReport:
    nonsingular: bool
    log_worst: float     # max over the inner boundary of log |G(center, y)|
    log_threshold: float
    witness: object      # boundary configuration attaining the max, or None

    @property
    def margin(self) -> float:
        return self.log_threshold - self.log_worst


def singularity_threshold_log(L: int, m: float, n_particles: int, dim: int) -> float:
    """log of the decay threshold: (3L)^(-Nd) e^(-gamma) for L >= 1,
    (2Nd)^(-1) e^(-2m) for L = 0."""
    if L == 0:
        return -math.log(2.0 * n_particles * dim) - gamma(m, 0)
    return -n_particles * dim * math.log(3.0 * L) - gamma(m, L)


def classify_singular(H_ball: FiniteHamiltonian, center, E: float, m: float,
                      L: int, boundary=None) -> SingularityReport:
    """Non-singular iff |G(center, y; E)| stays under the decay threshold for
    every inner-boundary y; an in-spectrum E is singular by convention."""
    n_p, dim = center.n, center.d
    log_thr = singularity_threshold_log(L, m, n_p, dim)
    if boundary is None:
        boundary = sorted(boundaries(H_ball.domain)[0])
    if not boundary:
        boundary = [center]
    try:
        G = green(H_ball, E)
    except NearResonantError:
        return SingularityReport(False, math.inf, log_thr, None)
    idx = {c: i for i, c in enumerate(H_ball.domain)}
    ci = idx[center]
    worst, witness = -math.inf, None
    for y in boundary:
        g_abs = abs(G.matrix[ci, idx[y]])
        lg = math.log(g_abs) if g_abs > 0 else -math.inf
        if lg > worst:
            worst, witness = lg, y
    return SingularityReport(worst <= log_thr, worst, log_thr, witness)


# ---------------------------------------------------------------------------
# dominated functions
# ---------------------------------------------------------------------------

def dominated_check(f, domain, center, L: int, ell: int, q: float) -> bool:
    """Whether |f(x)| <= q * max of |f| over the closed (ell+1)-ball around x,
    for every x in the domain with rho(center, x) <= 2L - ell.

    ``domain`` holds the 2L-inflated ball the function lives on; ``f`` may be
    a dict or a callable.  The ball maxima are taken inside the domain.
    """
    if not 0.0 < q < 1.0:
        raise ValueError("need 0 < q < 1")
    if ell < 0 or L < 0:
        raise ValueError("need L, ell >= 0")
    domain = tuple(domain)
    dset = set(domain)
    fv = {c: abs(f[c] if isinstance(f, dict) else f(c)) for c in domain}
    center_dist = distances_within(center, 2 * L)
    for x in domain:
        dx = center_dist.get(x)
        if dx is None or dx > 2 * L - ell:
            continue
        local = distances_within(x, ell + 1)
        best = max(fv[y] for y in local if y in dset)
        if fv[x] > q * best:
            return False
    return True


def dominated_bound(L: int, ell: int, q: float, M: float) -> float:
    """Center-value bound q^(floor((L+1)/(ell+1))) * M for dominated functions."""
    if not 0.0 < q < 1.0:
        raise ValueError("need 0 < q < 1")
    return q ** ((L + 1) // (ell + 1)) * M


def force_dominated(f, domain, center, L: int, ell: int, q: float, sweeps: int = 64):
    """Largest dominated function below |f|: sweep x in the checked region,
    clipping f(x) to q times its (ell+1)-ball max, until stable.

    Used to manufacture dominated test functions from arbitrary profiles;
    the result passes dominated_check by construction (it may be all zero).
    """
    domain = tuple(domain)
    dset = set(domain)
    fv = {c: abs(f[c] if isinstance(f, dict) else f(c)) for c in domain}
    center_dist = distances_within(center, 2 * L)
    region = [x for x in domain
              if center_dist.get(x) is not None and center_dist[x] <= 2 * L - ell]
    local = {x: [y for y in distances_within(x, ell + 1) if y in dset] for x in region}
    for _ in range(sweeps):
        changed = False
        for x in region:
            cap = q * max(fv[y] for y in local[x])
            if fv[x] > cap:
                fv[x] = cap
                changed = True
        if not changed:
            return fv
    raise BudgetExceededError("dominated repair did not stabilize")


# ---------------------------------------------------------------------------
# sparseness scan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScanViolation:
    energy: float
    center_a: FermiConfig
    center_b: FermiConfig
    kind: str  # "singular-pair" or "resonant-pair"


@dataclass(frozen=True)
class SparsenessReport:
    L: int
    n_balls: int
    n_energies: int
    singular_pairs: int
    resonant_pairs: int
    examples: tuple   # first few ScanViolation records
    truncated: bool   # example list hit its cap

    @property
    def clean(self) -> bool:
        return self.singular_pairs == 0 and self.resonant_pairs == 0


def sparseness_scan(H_window: FiniteHamiltonian, L: int, m: float, g: float,
                    delta: float, energy_cap: int = 4000,
                    max_examples: int = 50,
                    flop_budget: float = 2e9) -> SparsenessReport:
    """Scan a window for forbidden pairs of distant bad balls.

    Every radius-L ball fully contained in the window is classified, at each
    energy of a grid made of all sub-ball eigenvalues plus midpoints, as
    (E,m)-singular or not and as E-resonant (dist < g*delta) or not.  A pair
    of singular (or resonant) balls whose centers are farther than 3NL apart
    in the configuration graph is a violation; localization theory says a
    clean window carries at most one bad cluster per energy.
    """
    domain = H_window.domain
    if not domain:
        return SparsenessReport(L, 0, 0, 0, 0, (), False)
    n_p, dim = domain[0].n, domain[0].d
    dset = set(domain)
    sep = 3 * n_p * L

    balls, centers = [], []
    for c in domain:
        members = distances_within(c, L)
        if all(x in dset for x in members):
            centers.append(c)
            balls.append(sorted(members))

    ball_data = []
    all_vals = []
    for c, members in zip(centers, balls):
        Hb = H_window.restrict(members)
        vals, vecs = np.linalg.eigh(Hb.matrix)
        idx = {cfg: i for i, cfg in enumerate(members)}
        bd = sorted(boundaries(members)[0]) if L >= 1 else [c]
        ball_data.append((vals, vecs, idx[c], [idx[y] for y in bd]))
        all_vals.append(vals)
    if not ball_data:
        return SparsenessReport(L, 0, 0, 0, 0, (), False)

    grid = np.unique(np.concatenate(all_vals))
    if grid.size > 1:
        grid = np.unique(np.concatenate([grid, (grid[:-1] + grid[1:]) / 2.0]))
    if grid.size > energy_cap:
        grid = grid[np.linspace(0, grid.size - 1, energy_cap).astype(int)]
    nE = grid.size

    flops = sum(len(bd) * vals.size * nE for vals, _, _, bd in ball_data)
    if flops > flop_budget:
        raise BudgetExceededError(
            f"scan needs ~{flops:.2e} operations (budget {flop_budget:.2e}); "
            "shrink the window or the energy grid")

    log_thr = singularity_threshold_log(L, m, n_p, dim)
    thr = math.exp(log_thr)
    res_thr = g * delta
    singular = np.zeros((len(ball_data), nE), dtype=bool)
    resonant = np.zeros((len(ball_data), nE), dtype=bool)
    for bi, (vals, vecs, ci, bd) in enumerate(ball_data):
        dists = np.abs(vals[:, None] - grid[None, :])
        resonant[bi] = np.min(dists, axis=0) < res_thr
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            inv = 1.0 / (vals[:, None] - grid[None, :])
            amp = (vecs[bd, :] * vecs[ci, :][None, :]) @ inv
            worst = np.max(np.abs(amp), axis=0)
        worst = np.where(np.isfinite(worst), worst, np.inf)
        singular[bi] = ~(worst <= thr)

    # center pairs far enough apart that the sparseness property applies
    far = {}
    for i, c in enumerate(centers):
        near = distances_within(c, sep)
        far[i] = [j for j in range(i + 1, len(centers)) if centers[j] not in near]

    s_pairs = r_pairs = 0
    examples = []
    for ei, E in enumerate(grid):
        s_idx = np.flatnonzero(singular[:, ei])
        r_idx = np.flatnonzero(resonant[:, ei])
        for flags, kind in ((s_idx, "singular-pair"), (r_idx, "resonant-pair")):
            flagged = set(flags.tolist())
            for i in flags:
                for j in far[int(i)]:
                    if j in flagged:
                        if kind == "singular-pair":
                            s_pairs += 1
                        else:
                            r_pairs += 1
                        if len(examples) < max_examples:
                            examples.append(ScanViolation(
                                float(E), centers[int(i)], centers[j], kind))
    return SparsenessReport(L, len(ball_data), nE, s_pairs, r_pairs,
                            tuple(examples), len(examples) >= max_examples)


def nr_ns_premises(H_ball: FiniteHamiltonian, center, L: int, ell: int,
                   E: float, m: float, res_threshold: float):
    """Hypotheses of the bad-cluster implication: outer ball E-non-resonant
    and all singular ell-sub-balls huddled in one cluster of diameter <= 2 ell.

    Returns (premises_hold, outer_report); the implication itself (premises
    force the outer ball non-singular) is checked by the caller.
    """
    outer = classify_resonant(H_ball, E, res_threshold)
    dset = set(H_ball.domain)
    bad = []
    for c in H_ball.domain:
        members = distances_within(c, ell)
        if not all(x in dset for x in members):
            continue
        rep = classify_singular(H_ball.restrict(sorted(members)), c, E, m, ell)
        if not rep.nonsingular:
            bad.append(c)
    clustered = True
    for i in range(len(bad)):
        reach = distances_within(bad[i], 2 * ell)
        for k in range(i + 1, len(bad)):
            if bad[k] not in reach:
                clustered = False
    return outer.nonresonant and clustered, outer


# ---------------------------------------------------------------------------
# localization reports
# ---------------------------------------------------------------------------

def _domain_graph_distances(domain):
    """All-pairs BFS distances on the sub-graph induced by the domain."""
    domain = tuple(domain)
    idx = {c: i for i, c in enumerate(domain)}
    adj = [[] for _ in domain]
    for i, c in enumerate(domain):
        for nb in neighbors(c):
            j = idx.get(nb)
            if j is not None:
                adj[i].append(j)
    n = len(domain)
    dist = np.full((n, n), -1, dtype=int)
    for s in range(n):
        dist[s, s] = 0
        frontier = [s]
        d = 0
        while frontier:
            d += 1
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if dist[s, v] < 0:
                        dist[s, v] = d
                        nxt.append(v)
            frontier = nxt
    return dist


def adaptive_noise_floor(eigenvalues, k: int, base: float = 1e-14) -> float:
    """Smallest trustworthy eigenvector amplitude for eigenpair k.

    Dense symmetric solvers leave entry noise of order machine epsilon times
    the spectral spread divided by the local gap; amplitudes below that are
    solver artifacts, not decay, so fits must ignore them.  The fixed base
    floor is kept for well-conditioned cases.
    """
    vals = np.asarray(eigenvalues, dtype=float)
    spread = float(vals.max() - vals.min())
    others = np.delete(vals, k)
    gap = float(np.min(np.abs(others - vals[k]))) if others.size else math.inf
    if gap == 0.0:
        return math.inf
    return max(base, 32.0 * np.finfo(float).eps * spread / gap)


@dataclass(frozen=True)
class LocalizedState:
    k: int
    eigenvalue: float
    centers: tuple       # configurations attaining the sup norm
    peak_mass: float     # squared amplitude at the center
    decay_rate: float    # OLS slope of -log|psi| vs graph distance (nan if unfit)
    r_squared: float
    unimodal: bool       # single center carrying more than half the mass
    noise_floor: float


@dataclass(frozen=True)
class LocalizationReport:
    states: tuple
    bijection: bool      # unique centers, pairwise distinct, covering the domain
    fraction_unimodal: float
    min_peak_mass: float

    @property
    def all_unimodal(self) -> bool:
        return all(s.unimodal for s in self.states)


def localization_report(spec: Spectrum, domain, tie_rtol: float = 1e-9) -> LocalizationReport:
    """Per-eigenfunction localization diagnostics plus the center bijection.

    Centers are the argmax set of |psi| up to a relative tie tolerance; the
    decay rate is a least-squares fit of -log|psi(y)| against the in-domain
    graph distance from the main center, dropping amplitudes under the
    adaptive noise floor.
    """
    domain = tuple(domain)
    n = len(domain)
    if spec.eigenvectors.shape != (n, n):
        raise ValueError("spectrum size does not match the domain")
    dist = _domain_graph_distances(domain)
    states = []
    for k in range(n):
        psi = np.abs(spec.eigenvectors[:, k])
        top = float(psi.max())
        centers = tuple(domain[i] for i in np.flatnonzero(psi >= top * (1 - tie_rtol)))
        main = int(np.argmax(psi))
        peak = float(psi[main] ** 2)
        floor = adaptive_noise_floor(spec.eigenvalues, k)
        keep = (psi > floor) & (dist[main] >= 0)
        slope, r2 = math.nan, math.nan
        if int(keep.sum()) >= 3 and dist[main][keep].max() > 0:
            xs = dist[main][keep].astype(float)
            ys = -np.log(psi[keep])
            coef = np.polyfit(xs, ys, 1)
            pred = np.polyval(coef, xs)
            ss_res = float(np.sum((ys - pred) ** 2))
            ss_tot = float(np.sum((ys - ys.mean()) ** 2))
            slope = float(coef[0])
            r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        states.append(LocalizedState(
            k, float(spec.eigenvalues[k]), centers, peak, slope, r2,
            len(centers) == 1 and peak > 0.5, floor))
    mains = [s.centers[0] for s in states if len(s.centers) == 1]
    bijection = (len(mains) == n and len(set(mains)) == n)
    frac = sum(1 for s in states if s.unimodal) / n if n else 0.0
    min_peak = min((s.peak_mass for s in states), default=0.0)
    return LocalizationReport(tuple(states), bijection, frac, min_peak)


# ---------------------------------------------------------------------------
# correlators and dynamical envelopes
# ---------------------------------------------------------------------------

def matrix_element(spec: Spectrum, ix: int, iy: int, phi) -> complex:
    """<1_x| phi(H) |1_y> through the eigenbasis; phi acts on eigenvalues."""
    wx = spec.eigenvectors[ix, :]
    wy = spec.eigenvectors[iy, :]
    return complex(np.sum(wx * np.asarray([phi(v) for v in spec.eigenvalues]) * wy))


def envelope_matrix(spec: Spectrum) -> np.ndarray:
    """Correlator envelope sum_z |psi_z(x) psi_z(y)| for all pairs at once.

    Dominates |<1_x| phi(H) |1_y>| for every test function with sup norm 1,
    and in particular every propagator magnitude.
    """
    a = np.abs(spec.eigenvectors)
    return a @ a.T


def propagator_excess(spec: Spectrum, times) -> float:
    """Worst-case |<x| e^{-itH} |y>| minus the envelope over sampled times;
    nonpositive (up to roundoff) if the envelope bound is honest."""
    env = envelope_matrix(spec)
    worst = -math.inf
    for t in np.atleast_1d(times):
        phase = np.exp(-1j * float(t) * spec.eigenvalues)
        prop = (spec.eigenvectors * phase) @ spec.eigenvectors.T
        worst = max(worst, float(np.max(np.abs(prop) - env)))
    return worst


@dataclass(frozen=True)
class EnvelopeFit:
    rate: float        # fitted decay exponent m'
    prefactor: float
    r_squared: float
    n_pairs: int


def envelope_decay_fit(spec: Spectrum, domain, floor: Optional[float] = None) -> EnvelopeFit:
    """Fit envelope(x,y) ~ C e^(-m' rho(x,y)) over all pairs, diagonal included.

    The diagonal entries equal 1 exactly (eigenbasis completeness) and anchor
    the fit at rho = 0.  Pairs with envelope below ``floor`` are excluded; the
    default floor is the solver noise for a state with a median-sized local
    gap, so entries contaminated by near-degenerate pairs drop out while the
    typical decay signal survives.
    """
    domain = tuple(domain)
    env = envelope_matrix(spec)
    dist = _domain_graph_distances(domain)
    n = len(domain)
    if floor is None:
        vals = spec.eigenvalues
        spread = float(vals.max() - vals.min()) if n > 1 else 1.0
        gaps = np.diff(np.sort(vals))
        gaps = gaps[gaps > 0]
        gap = float(np.median(gaps)) if gaps.size else 1.0
        floor = max(1e-13, 32 * n * np.finfo(float).eps * spread / gap)
    xs, ys = [], []
    for i in range(n):
        for j in range(i, n):
            if dist[i, j] >= 0 and env[i, j] > floor:
                xs.append(dist[i, j])
                ys.append(math.log(env[i, j]))
    if len(xs) < 3 or len(set(xs)) < 2:
        return EnvelopeFit(math.nan, math.nan, math.nan, len(xs))
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys)
    coef = np.polyfit(xs, ys, 1)
    pred = np.polyval(coef, xs)
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return EnvelopeFit(-float(coef[0]), math.exp(float(coef[1])), r2, len(xs))


# ---------------------------------------------------------------------------
# piecewise constancy of the operator family
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EntropyReport:
    count: int
    bound: float
    grid_size: int
    quantum: float
    saturated: bool  # count hit the grid size: the grid is too coarse to trust


def equivalence_entropy_check(system, hull: pot.HaarHull, L: int, N_trunc: int,
                              grid_size: int = 10_000) -> EntropyReport:
    """Count distinct truncated operators over an omega grid for fixed theta.

    The kinetic and interaction parts never move with omega, so two phase
    points give the same operator exactly when the site-potential profiles
    over the relevant window agree; profiles are compared after quantizing
    at the truncation tail bound, and the count is checked against
    2^nu * L^(4A + 4A').
    """
    if L < 2:
        raise ValueError("need L >= 2")
    nu = system.nu
    half = L ** 4
    quantum = pot.tail_bound(N_trunc, hull.b)
    bound = 2.0 ** nu * float(L) ** (4 * system.A + 4 * system.A_prime)
    omegas = (np.arange(grid_size) + 0.5) / grid_size

    if nu == 1 and system.d == 1:
        sites = np.arange(-half, half + 1)
        alpha = float(system.frequencies[0, 0])
        phases = np.mod(omegas[:, None] + sites[None, :] * alpha, 1.0)
        values = np.zeros_like(phases)
        for n in range(1, N_trunc + 1):
            cells = np.minimum((phases * (1 << n)).astype(np.int64), (1 << n) - 1)
            theta = np.asarray([hull.theta.value(n, int(k) + 1)
                                for k in range(1 << n)])
            values += pot.generation_weight(n, hull.b) * theta[cells]
        quant = np.round(values / quantum).astype(np.int64)
        count = int(np.unique(quant, axis=0).shape[0])
    else:
        window = [()]
        for _ in range(system.d):
            window = [w + (s,) for w in window for s in range(-half, half + 1)]
        profiles = set()
        for w in omegas:
            row = []
            for x in window:
                val, _ = hull.value(system.translate(np.full(nu, w), x), N_trunc)
                row.append(round(val / quantum))
            profiles.add(tuple(row))
        count = len(profiles)
    return EntropyReport(count, bound, grid_size, quantum, count >= grid_size)
