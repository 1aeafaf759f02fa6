"""Multi-scale machinery tests: scale sequences, Green identities, resonance
and singularity classification, dominated functions, sparseness scans,
localization reports, correlators, and operator-count entropy."""

import math

import numpy as np
import pytest

from andlab.configs import FermiConfig, ball, box_configs, distances_within
from andlab.errors import NearResonantError
from andlab.msa import (
    ScaleSequence,
    adaptive_noise_floor,
    classify_resonant,
    classify_singular,
    dominated_bound,
    dominated_check,
    eigenfunction_gre_defect,
    envelope_decay_fit,
    envelope_matrix,
    equivalence_entropy_check,
    force_dominated,
    gamma,
    gre_defect,
    green,
    localization_report,
    matrix_element,
    nr_ns_premises,
    propagator_excess,
    singularity_threshold_log,
    sparseness_scan,
)
from andlab.operators import assemble, ball_operator, diagonalize
from andlab.potential import (
    AmplitudeField,
    HaarHull,
    config_potential,
    min_gap,
    window_generation,
)
from andlab.torus import ShiftSystem, preset_frequencies


def cfg(*sites):
    return FermiConfig.make([(s,) for s in sites])


def golden_system():
    return ShiftSystem(preset_frequencies("golden", 1, 1))


def strong_disorder_instance(seed=8, om=0.11, margin=1.05, sites=13):
    """Window operator with coupling scaled to clear the separation threshold."""
    sys_ = golden_system()
    dom = box_configs(2, (0,), (sites,))
    hull = HaarHull(0.5, 7, AmplitudeField(seed))
    omega = np.array([om])
    vals = {c: config_potential(hull, sys_, omega, c) for c in dom}
    sep = min_gap(list(vals.values()))
    g = margin * 16 * 2 * 1 * math.exp(4.0) / sep
    return assemble(dom, potential=vals, g=g), dom


# ---------------------------------------------------------------------------
# decay exponent and scales
# ---------------------------------------------------------------------------

def test_gamma_values():
    assert gamma(2.0, 16) == 54.62741699796952
    assert gamma(1.5, 0) == 3.0


def test_gamma_sandwich():
    for m in (0.5, 1.0, 3.0):
        for L in (1, 2, 7, 100):
            assert m * L < gamma(m, L) <= 2 * m * L


def test_scale_sequence_growth():
    seq = ScaleSequence(3, 2.5, j_max=3)
    for lev in seq.levels:
        if lev.j >= 0:
            assert lev.L == 3 ** (2 ** lev.j)
    assert seq.level(-1).L == 0
    assert seq.level(-1).generation == window_generation(3, seq.A, seq.C)


def test_scale_sequence_deltas_decrease():
    seq = ScaleSequence(2, 2.5, j_max=4)
    logs = [lev.log2_delta for lev in seq.levels]
    # the seed level shares the first generation, deeper levels drop strictly
    assert all(b <= a for a, b in zip(logs, logs[1:]))
    assert all(b < a for a, b in zip(logs[1:], logs[2:]))
    # delta = beta * a_N in the log domain
    for lev in seq.levels:
        gen = lev.generation
        assert lev.log2_delta == pytest.approx(lev.log2_beta - 2 * 2.5 * gen * gen)
        assert lev.log2_beta == pytest.approx(-2 * 2.5 * gen)


def test_scale_level_underflow_guard():
    seq = ScaleSequence(4, 2.5, j_max=2)
    deep = seq.level(2)
    assert deep.log2_delta < -1074
    assert deep.delta == 0.0
    assert seq.level(0).beta > 0


def test_shape_fit_positive_constants():
    c2, cp = ScaleSequence(3, 2.0, j_max=3).shape_fit()
    assert c2 > 0 and cp > 0


# ---------------------------------------------------------------------------
# Green functions and the resolvent expansion identity
# ---------------------------------------------------------------------------

def random_window_operator(rng, n_sites=8):
    dom = box_configs(2, (0,), (n_sites,))
    vals = {c: float(rng.normal()) for c in dom}
    return assemble(dom, potential=vals, g=1.0 + rng.random())


def test_green_solves_resolvent():
    rng = np.random.default_rng(0)
    H = random_window_operator(rng)
    E = 0.123
    G = green(H, E)
    n = len(H.domain)
    resid = (H.matrix - E * np.eye(n)) @ G.matrix - np.eye(n)
    assert np.max(np.abs(resid)) <= 1e-9
    assert G.margin > 0


def test_green_raises_at_eigenvalue():
    H = assemble(box_configs(2, (0,), (3,)), g=0.0)
    E = float(np.linalg.eigvalsh(H.matrix)[1])
    with pytest.raises(NearResonantError):
        green(H, E)


def test_gre_defect_small_random():
    rng = np.random.default_rng(7)
    for _ in range(20):
        H = random_window_operator(rng)
        sub = [c for c in H.domain if max(s[0] for s in c.sites) <= 5]
        x = sub[int(rng.integers(len(sub)))]
        y = H.domain[int(rng.integers(len(H.domain)))]
        E = float(rng.normal()) * 0.5
        try:
            d = gre_defect(H, sub, x, y, E)
        except NearResonantError:
            continue
        assert d.relative <= 1e-8


def test_gre_defect_degenerate_subdomain():
    rng = np.random.default_rng(3)
    H = random_window_operator(rng)
    d = gre_defect(H, H.domain, H.domain[0], H.domain[-1], 0.05)
    assert d.absolute == 0.0


def test_eigenfunction_gre_defect():
    rng = np.random.default_rng(11)
    H = random_window_operator(rng)
    sub = [c for c in H.domain if max(s[0] for s in c.sites) <= 5]
    spec = diagonalize(H)
    for k in (0, 3, len(H.domain) - 1):
        for x in sub[:4]:
            d = eigenfunction_gre_defect(H, sub, x, k, spectrum=spec)
            assert d.relative <= 1e-8


# ---------------------------------------------------------------------------
# resonance / singularity classification
# ---------------------------------------------------------------------------

def test_classify_resonant_boundary_convention():
    rep = classify_resonant(np.array([1.0, 4.0]), 2.0, threshold=1.0)
    assert rep.nonresonant          # distance equals threshold: still NR
    assert rep.distance == 1.0
    rep2 = classify_resonant(np.array([1.0, 4.0]), 2.5, threshold=2.0)
    assert not rep2.nonresonant
    assert rep2.margin < 0


def test_classify_resonant_accepts_operator():
    H = assemble(box_configs(2, (0,), (3,)), g=0.0)
    rep = classify_resonant(H, -5.0, threshold=1.0)
    assert rep.nonresonant


def test_singularity_threshold_log_forms():
    # L = 0: (2Nd)^{-1} e^{-2m}; L >= 1: (3L)^{-Nd} e^{-gamma}
    assert singularity_threshold_log(0, 1.0, 2, 1) == pytest.approx(
        -math.log(4.0) - 2.0)
    assert singularity_threshold_log(3, 1.0, 2, 1) == pytest.approx(
        -2 * math.log(9.0) - gamma(1.0, 3))


def test_classify_singular_single_site():
    center = cfg(0, 2)
    m = 1.0
    H = ball_operator(center, 0, potential=lambda c: 100.0, g=1.0,
                      convention="none")
    rep = classify_singular(H, center, E=0.0, m=m, L=0)
    # |G(c,c)| = 1/100, below the single-site threshold e^{-2m}/(2Nd)
    assert rep.nonsingular
    assert rep.log_worst == pytest.approx(-math.log(100.0))
    near = classify_singular(H, center, E=99.99, m=m, L=0)
    assert not near.nonsingular


def test_classify_singular_at_eigenvalue_is_singular():
    center = cfg(0, 2)
    H = ball_operator(center, 0, potential=lambda c: 3.0, g=1.0,
                      convention="none")
    rep = classify_singular(H, center, E=3.0, m=1.0, L=0)
    assert not rep.nonsingular
    assert rep.log_worst == math.inf


def test_classify_singular_strong_disorder_ball():
    H_win, dom = strong_disorder_instance(sites=9)
    idx = H_win.index()
    center = dom[len(dom) // 2]
    members = sorted(distances_within(center, 1))
    H_ball = H_win.restrict(members)
    lam = np.linalg.eigvalsh(H_ball.matrix)
    # an energy far from the ball spectrum relative to the decay demand
    E = float(lam.min() - 10 * math.exp(gamma(1.0, 1)))
    rep = classify_singular(H_ball, center, E=E, m=1.0, L=1)
    assert rep.nonsingular


# ---------------------------------------------------------------------------
# dominated functions
# ---------------------------------------------------------------------------

def test_dominated_bound_example():
    assert dominated_bound(7, 1, 0.5, 1.0) == pytest.approx(0.0625)


def test_zero_function_dominated():
    center = cfg(0, 8)
    domain = sorted(distances_within(center, 6))
    f = {c: 0.0 for c in domain}
    assert dominated_check(f, domain, center, 3, 1, 0.5)


def test_forced_functions_satisfy_center_bound():
    rng = np.random.default_rng(21)
    center = cfg(0, 8)
    L, ell, q = 3, 1, 0.5
    domain = sorted(distances_within(center, 2 * L))
    for _ in range(25):
        raw = {c: float(rng.random()) for c in domain}
        f = force_dominated(raw, domain, center, L, ell, q)
        assert dominated_check(f, domain, center, L, ell, q)
        M = max(abs(v) for v in f.values())
        assert abs(f[center]) <= dominated_bound(L, ell, q, M) + 1e-12


def test_eigenfunction_single_site_subharmonicity():
    """At any configuration whose diagonal is 2Nd e^{2m}-far from the
    eigenvalue, the eigenfunction obeys |psi(x)| <= e^{-2m} max over the
    punctured 1-ball, up to solver noise."""
    H_win, dom = strong_disorder_instance(seed=5, om=0.53)
    spec = diagonalize(H_win)
    idx = {c: i for i, c in enumerate(dom)}
    m = 1.0
    demand = 2 * 2 * 1 * math.exp(2 * m)
    slack = 64 * np.finfo(float).eps
    checked = 0
    for k in (0, len(dom) // 2, len(dom) - 1):
        lam = spec.eigenvalues[k]
        psi = np.abs(spec.eigenvectors[:, k])
        for c, i in idx.items():
            if abs(H_win.matrix[i, i] - lam) < demand:
                continue
            nbrs = [idx[y] for y in distances_within(c, 1) if y != c and y in idx]
            if len(nbrs) < 4:   # keep full in-window neighborhoods only
                continue
            assert psi[i] <= math.exp(-2 * m) * psi[nbrs].max() + slack
            checked += 1
    assert checked > 100


# ---------------------------------------------------------------------------
# sparseness scans
# ---------------------------------------------------------------------------

def test_sparseness_clean_at_strong_disorder():
    H_win, dom = strong_disorder_instance(sites=9)
    rep = sparseness_scan(H_win, L=0, m=1.0, g=H_win.g, delta=1e-30,
                          energy_cap=200)
    assert rep.clean
    assert rep.n_energies > 0 and rep.n_balls > 0


def test_sparseness_flags_free_operator():
    dom = box_configs(2, (0,), (9,))
    H = assemble(dom, g=0.0)
    rep = sparseness_scan(H, L=0, m=1.0, g=1.0, delta=0.5, energy_cap=100)
    assert not rep.clean
    assert rep.singular_pairs + rep.resonant_pairs > 0
    assert len(rep.examples) > 0


def test_nr_ns_implication_on_strong_ball():
    H_win, dom = strong_disorder_instance(sites=11)
    center = dom[len(dom) // 2]
    members = sorted(distances_within(center, 3))
    dset = set(dom)
    if not all(c in dset for c in members):
        pytest.skip("ball does not fit the window")
    H_ball = H_win.restrict(members)
    lam = np.linalg.eigvalsh(H_ball.matrix)
    E = float(lam.min() - 10 * math.exp(gamma(1.0, 3)))
    holds, outer = nr_ns_premises(H_ball, center, L=3, ell=1, E=E, m=1.0,
                                  res_threshold=1e-6)
    assert holds and outer.nonresonant
    rep = classify_singular(H_ball, center, E=E, m=1.0, L=3)
    assert rep.nonsingular


# ---------------------------------------------------------------------------
# localization reports
# ---------------------------------------------------------------------------

def test_noise_floor_scales():
    lam = np.array([0.0, 1e-9, 1.0])
    assert adaptive_noise_floor(lam, 2) >= 1e-14
    assert adaptive_noise_floor(lam, 0) > adaptive_noise_floor(
        np.array([0.0, 0.5, 1.0]), 0)


def test_localization_diagonal_operator():
    dom = box_configs(2, (0,), (5,))
    H = assemble(dom, potential={c: float(i) for i, c in enumerate(dom)},
                 g=1.0, convention="none")
    rep = localization_report(diagonalize(H), dom)
    assert rep.bijection
    assert rep.fraction_unimodal == 1.0
    assert rep.min_peak_mass == pytest.approx(1.0)


def test_localization_free_path_fails():
    dom = box_configs(2, (0,), (9,))
    rep = localization_report(diagonalize(assemble(dom, g=0.0)), dom)
    assert rep.fraction_unimodal < 0.5


def test_localization_strong_disorder_passes():
    H_win, dom = strong_disorder_instance()
    rep = localization_report(diagonalize(H_win), dom)
    assert rep.bijection
    assert rep.fraction_unimodal == 1.0
    rates = [s.decay_rate for s in rep.states
             if s.decay_rate is not None and np.isfinite(s.decay_rate)]
    assert len(rates) > len(dom) // 2
    assert np.median(rates) > 0


# ---------------------------------------------------------------------------
# correlators
# ---------------------------------------------------------------------------

def test_matrix_element_identity():
    H_win, dom = strong_disorder_instance(sites=7)
    spec = diagonalize(H_win)
    n = len(dom)
    for ix, iy in ((0, 0), (1, 4), (n - 1, 2)):
        got = matrix_element(spec, ix, iy, lambda lam: 1.0)
        assert abs(got - (1.0 if ix == iy else 0.0)) < 1e-10


def test_envelope_dominates_propagator():
    H_win, dom = strong_disorder_instance(sites=7)
    spec = diagonalize(H_win)
    env = envelope_matrix(spec)
    assert env.shape == (len(dom), len(dom))
    assert np.allclose(np.diag(env), 1.0, atol=1e-12)
    assert propagator_excess(spec, (0.3, 1.0, 4.0)) <= 1e-10


def test_envelope_decay_fit_strong_disorder():
    H_win, dom = strong_disorder_instance()
    spec = diagonalize(H_win)
    fit = envelope_decay_fit(spec, dom)
    assert fit.rate > 0
    assert fit.r_squared > 0.9
    assert fit.n_pairs >= len(dom)


# ---------------------------------------------------------------------------
# operator-count entropy
# ---------------------------------------------------------------------------

def test_entropy_constant_amplitudes_single_class():
    sys_ = golden_system()
    from andlab.potential import ConstantAmplitudeField
    hull = HaarHull(2.5, 4, ConstantAmplitudeField(0.25))
    rep = equivalence_entropy_check(sys_, hull, L=2, N_trunc=2, grid_size=500)
    assert rep.count == 1
    assert not rep.saturated


def test_entropy_within_bound():
    sys_ = golden_system()
    hull = HaarHull(2.5, 4, AmplitudeField(9))
    rep = equivalence_entropy_check(sys_, hull, L=2, N_trunc=2, grid_size=2000)
    assert 1 <= rep.count <= rep.bound
    assert rep.grid_size == 2000
    assert not rep.saturated


def test_entropy_monotone_under_refinement():
    sys_ = golden_system()
    hull = HaarHull(2.5, 4, AmplitudeField(9))
    coarse = equivalence_entropy_check(sys_, hull, L=2, N_trunc=2, grid_size=500)
    fine = equivalence_entropy_check(sys_, hull, L=2, N_trunc=2, grid_size=4000)
    assert fine.count >= coarse.count
