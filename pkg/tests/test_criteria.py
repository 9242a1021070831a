import math
import time

import numpy as np
import pytest

from delaystab import (
    CharacteristicProblem,
    DecidedBy,
    FeasibilityError,
    Region,
    SweepResult,
    classify,
    constants_c_thetac,
    cs_crossings,
    cs_sweep,
    discrete,
    extremal_f_star,
    extremal_given_u,
    g_eval,
    gamma_mixture,
    hayes_bound,
    rightmost_root,
    single_delay,
)
from delaystab.criteria import ExtremalDistribution, chord_density, verdict_from_json
from delaystab.spectrum import EPS_STAB
from conftest import random_discrete, random_mixture


# ----------------------------------------------------------------------
# constants and chord bound
# ----------------------------------------------------------------------

def test_constants_values():
    c, theta_c = constants_c_thetac()
    assert c == pytest.approx(0.7246, abs=1e-4)
    assert theta_c == pytest.approx(2.3311, abs=1e-4)


def test_constants_tangency_residual():
    c, theta_c = constants_c_thetac()
    assert abs(math.cos(theta_c) - (1.0 - c * theta_c)) < 1e-10
    assert c == pytest.approx(math.sin(theta_c), abs=1e-12)


def test_g_endpoints_and_junction():
    _, theta_c = constants_c_thetac()
    assert g_eval(0.0) == 1.0
    assert g_eval(math.pi) == -1.0
    assert abs(g_eval(theta_c) - math.cos(theta_c)) < 1e-10


def test_g_below_cosine():
    for x in np.linspace(0.0, math.pi, 500):
        assert g_eval(float(x)) <= math.cos(x) + 1e-12


def test_g_domain():
    with pytest.raises(ValueError):
        g_eval(-0.5)
    with pytest.raises(ValueError):
        g_eval(4.0)


# ----------------------------------------------------------------------
# critical mean delay
# ----------------------------------------------------------------------

def test_hayes_bound_values():
    assert hayes_bound(0.0, 1.0) == math.pi / 2
    assert hayes_bound(-0.5, 1.0) == pytest.approx(1.2092, abs=1e-4)
    assert hayes_bound(1.0, 0.95) == math.inf
    assert hayes_bound(-2.0, 1.0) is None
    assert hayes_bound(-1.0, 1.0) is None  # boundary a = -b counts as unstable


# ----------------------------------------------------------------------
# frequency sweep
# ----------------------------------------------------------------------

def test_sweep_no_crossing_certifies():
    assert cs_sweep(0.99, single_delay(1.0)) is SweepResult.CERTIFIED_STABLE


def test_sweep_fig1_crossing_certifies(fig1_atoms):
    crossings = cs_crossings(-0.5, fig1_atoms)
    assert len(crossings) == 1
    assert crossings[0] == pytest.approx(0.8308, abs=1e-3)
    s = fig1_atoms.cs_moments(crossings[0])[1]
    assert s < crossings[0]
    assert cs_sweep(-0.5, fig1_atoms) is SweepResult.CERTIFIED_STABLE


def test_sweep_supercritical_single_delay_inconclusive():
    # single delay beyond the critical mean: crossing with S >= omega
    assert cs_sweep(-0.5, single_delay(3.0)) is SweepResult.INCONCLUSIVE


# ----------------------------------------------------------------------
# classifier
# ----------------------------------------------------------------------

def test_classify_delay_independent_stable():
    v = classify(CharacteristicProblem(1.0, 0.5, single_delay(10.0)))
    assert v.region is Region.DELAY_INDEPENDENT_STABLE
    assert v.stable is True and v.decided_by is DecidedBy.HAYES_AXIOMS


def test_classify_delay_independent_unstable():
    v = classify(CharacteristicProblem(-2.0, 1.0, single_delay(1.0)))
    assert v.region is Region.DELAY_INDEPENDENT_UNSTABLE
    assert v.stable is False


def test_classify_mean_bound(fig1_atoms):
    v = classify(CharacteristicProblem(-0.5, 1.0, fig1_atoms))
    assert v.region is Region.MEAN_BOUND_STABLE
    assert v.decided_by is DecidedBy.MEAN_BOUND
    assert v.stable is True
    assert v.mean_bound == pytest.approx(1.2092, abs=1e-4)


def test_classify_distribution_dependent_fig3(fig3_mixture):
    v = classify(CharacteristicProblem(0.0, 0.95, fig3_mixture))
    assert v.region is Region.DISTRIBUTION_DEPENDENT
    assert v.stable is True
    assert v.decided_by in (DecidedBy.CS_SWEEP, DecidedBy.RIGHTMOST_ROOT)
    v = classify(CharacteristicProblem(0.0, 1.5, fig3_mixture))
    assert v.stable is False
    assert v.decided_by is DecidedBy.RIGHTMOST_ROOT


def test_classify_marginal_single_delay():
    v = classify(CharacteristicProblem(0.0, 1.0, single_delay(math.pi / 2)))
    assert v.stable is None


def test_classify_never_contradicts_roots(rng):
    # a stable verdict must never coexist with a positive rightmost root
    for _ in range(300):
        kind = rng.random()
        d = random_discrete(rng, tau_hi=3.0) if kind < 0.5 else random_mixture(rng, q_hi=6)
        a = float(rng.uniform(-2.0, 2.0))
        b = float(rng.uniform(-2.0, 2.0))
        if b == 0.0:
            continue
        v = classify(CharacteristicProblem(a, b, d))
        if v.stable is True:
            report = rightmost_root(CharacteristicProblem(a, b, d))
            assert report.rightmost_real <= EPS_STAB


def test_verdict_json_roundtrip(fig1_atoms):
    v = classify(CharacteristicProblem(-0.5, 1.0, fig1_atoms))
    assert verdict_from_json(v.to_json()).to_json() == v.to_json()


# ----------------------------------------------------------------------
# extremal construction, zero anchor
# ----------------------------------------------------------------------

def test_f_star_reaches_crossing():
    omega_s = 0.8307861700702432
    ex = extremal_f_star(-0.5, 1.2, omega_s)
    d = ex.to_delay_distribution()
    c, s = d.cs_moments(omega_s)
    assert c == pytest.approx(0.5, abs=1e-9)
    assert d.mean() == pytest.approx(1.2, abs=1e-12)
    assert 0.0 < ex.p2_star < 1.0
    assert 0.0 < ex.omega_s * ex.tau2_star <= constants_c_thetac()[1]
    assert s == pytest.approx(ex.s_value(), abs=1e-12)


def test_f_star_degenerates_to_single_atom():
    # approaching the critical mean pushes all the mass onto the positive atom
    a = -0.5
    omega_c = math.sqrt(1.0 - a * a)
    mean = 0.9999 * math.acos(-a) / omega_c
    ex = extremal_f_star(a, mean, omega_c)
    assert ex.p2_star > 0.99
    single = ExtremalDistribution(1.0, mean, omega_c).to_delay_distribution()
    assert single.effective_atoms() == [(1.0, mean)]


def test_f_star_infeasible():
    with pytest.raises(FeasibilityError):
        extremal_f_star(0.9, 0.1, 0.4)


def test_f_star_subcritical_sine(rng):
    # quick version of the maximizer sweep; the acceptance suite runs 200
    checked = 0
    while checked < 30:
        a = float(rng.uniform(-0.9, 0.9))
        omega_c = math.sqrt(1.0 - a * a)
        mean = float(rng.uniform(0.2, 0.98)) * math.acos(-a) / omega_c
        d = random_discrete(rng, mean=mean, n_max=2)
        if len(d.inner.atoms) != 2:
            continue
        crossings = cs_crossings(a, d)
        if not crossings:
            continue
        for omega_s in crossings:
            ex = extremal_f_star(a, mean, omega_s)
            s2 = d.cs_moments(omega_s)[1]
            assert s2 <= ex.s_value() + 1e-9
            assert ex.s_value() < omega_s
            # chord-bound consequences of a crossing below the critical mean
            assert omega_s * mean < constants_c_thetac()[1]
            assert math.cos(omega_s * mean) > -a
        checked += 1


# ----------------------------------------------------------------------
# extremal construction, anchored at u
# ----------------------------------------------------------------------

def test_chord_solution_reference_values():
    sol = extremal_given_u(-0.5, 0.99694340408429, 0.519241356293902)
    assert sol.v1 == pytest.approx(1.3056, abs=1e-3)
    assert sol.v_roots[-1] == pytest.approx(2.9078, abs=1e-3)
    d = chord_density(0.519241356293902, sol.v1, 0.99694340408429, 0.8307861700702432)
    atoms = d.effective_atoms()
    assert atoms[0][0] == pytest.approx(0.3925, abs=1e-3)
    assert atoms[1][0] == pytest.approx(0.6075, abs=1e-3)
    assert atoms[0][1] == pytest.approx(0.625, abs=1e-3)
    assert atoms[1][1] == pytest.approx(1.5715, abs=1e-3)


def test_chord_solution_is_crossing():
    t_mean = 0.9969434
    for u in (0.0, 0.2, 0.5192, 0.7):
        sol = extremal_given_u(-0.5, t_mean, u)
        d = chord_density(u, sol.v1, t_mean, 1.0)
        c, s = d.cs_moments(1.0)
        assert c == pytest.approx(0.5, abs=1e-9)
        assert s == pytest.approx(sol.s_value, abs=1e-12)


def test_chord_anchor_near_mean_is_infeasible():
    # close to the mean the second atom carries too little weight to reach -a
    with pytest.raises(FeasibilityError):
        extremal_given_u(-0.5, 0.9969434, 0.99)


def test_chord_sine_decreases_in_u():
    # strict decrease over the admissible anchor range (Newton-polished roots)
    t_mean = 0.9969434
    values = []
    for u in np.linspace(0.0, t_mean * 0.999, 100):
        try:
            values.append(extremal_given_u(-0.5, t_mean, float(u)).s_value)
        except FeasibilityError:
            break
    assert len(values) >= 30
    assert np.all(np.diff(values) < 0.0)


def test_chord_requires_valid_anchor():
    with pytest.raises(ValueError):
        extremal_given_u(-0.5, 0.9969, 1.2)     # u >= T
    with pytest.raises(ValueError):
        extremal_given_u(-0.5, 2.5, 0.1)        # T beyond tangency angle
    with pytest.raises(ValueError):
        extremal_given_u(-0.99, 0.5, 3.0)       # cos(u) + a <= 0 needs u < T anyway


def test_constants_runtime():
    constants_c_thetac.cache_clear()
    t0 = time.perf_counter()
    constants_c_thetac()
    assert time.perf_counter() - t0 < 1e-3
