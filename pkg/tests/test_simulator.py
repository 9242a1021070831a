import math

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.special import gammaincc

from delaystab import (
    CharacteristicProblem,
    DelayMode,
    HematoModel,
    HistorySpec,
    SteadyBranch,
    TraceClass,
    chain_matrix,
    classify_trace,
    discrete,
    gamma_mixture,
    hemato_linearize,
    hemato_steady_states,
    hemato_verdict,
    rightmost_root,
    simulate_hemato,
    simulate_linear,
    single_delay,
)
from delaystab.simulator import trace_from_csv
from conftest import random_mixture


# ----------------------------------------------------------------------
# linear simulations
# ----------------------------------------------------------------------

def test_region_one_decays(fig1_atoms):
    p = CharacteristicProblem(1.0, 0.5, fig1_atoms)
    trace = simulate_linear(p, HistorySpec.constant(1.0), 80.0, 0.01)
    assert abs(trace.x[-1]) < 1e-6


def test_boundary_oscillation_amplitude_holds():
    # roots exactly at +-i: amplitude must not drift over 50 periods
    p = CharacteristicProblem(0.0, 1.0, single_delay(math.pi / 2))
    t_end = 52.0 * 2.0 * math.pi
    trace = simulate_linear(p, HistorySpec.constant(1.0), t_end, 0.01, record_points=40001)
    period_pts = int(round(2.0 * math.pi / (trace.t[1] - trace.t[0])))
    early = trace.x[(trace.t > 4 * 2 * math.pi) & (trace.t < 8 * 2 * math.pi)]
    late = trace.x[-4 * period_pts:]
    amp_early = 0.5 * (early.max() - early.min())
    amp_late = 0.5 * (late.max() - late.min())
    assert abs(amp_late / amp_early - 1.0) < 0.02


def test_fig1_atoms_decay(fig1_atoms):
    p = CharacteristicProblem(-0.5, 1.0, fig1_atoms)
    trace = simulate_linear(p, HistorySpec.constant(1.0), 120.0, 0.01)
    assert abs(trace.x[-1]) < 1e-2
    assert np.max(np.abs(trace.x[-100:])) < np.max(np.abs(trace.x[:100]))


def test_unstable_run_flags_divergence(fig3_mixture):
    p = CharacteristicProblem(0.0, 1.5, fig3_mixture)
    trace = simulate_linear(p, HistorySpec.constant(1.0), 4000.0, 0.005)
    assert trace.truncated


def test_dt_validation(fig1_atoms):
    p = CharacteristicProblem(0.0, 1.0, fig1_atoms)
    with pytest.raises(ValueError):
        simulate_linear(p, HistorySpec.constant(1.0), 10.0, 0.05)  # > tau_min/20


def test_sampled_history_matches_constant(fig3_mixture):
    p = CharacteristicProblem(-0.2, 0.8, fig3_mixture)
    hist_c = HistorySpec.constant(1.0)
    hist_s = HistorySpec.sampled(np.linspace(-30.0, 0.0, 500), np.ones(500))
    t1 = simulate_linear(p, hist_c, 10.0, 0.002)
    t2 = simulate_linear(p, hist_s, 10.0, 0.002)
    # sampled histories initialize the cascade by quadrature, not exactly
    assert np.max(np.abs(t1.x - t2.x)) < 1e-5


def test_history_span_checked(fig1_atoms):
    p = CharacteristicProblem(-0.5, 1.0, fig1_atoms)
    short = HistorySpec.sampled([-1.0, 0.0], [1.0, 1.0])  # max delay is 3.5
    with pytest.raises(ValueError):
        simulate_linear(p, short, 5.0, 0.01)


# ----------------------------------------------------------------------
# chain reduction vs direct quadrature of the history integral
# ----------------------------------------------------------------------

def _history_quadrature_reference(a, b, kernels, t_end, dt):
    """4th-order predictor-corrector for x' = -a x - b * int x(t-s) f(s) ds.

    The delay integral is a trapezoid rule on a lag grid aligned with the
    step grid (lag spacing = 2 dt), so every delayed read lands on a stored
    node and no interpolation error enters. Completely independent of the
    compartment-chain reduction.
    """
    from delaystab import gamma_density

    cut = 0.0
    for _, q, beta in kernels:
        hi = (q + 60.0 + 20.0 * math.sqrt(q)) / beta
        while gammaincc(q, beta * hi) > 1e-11:
            hi *= 1.25
        cut = max(cut, hi)
    m = int(math.ceil(cut / (2.0 * dt)))
    lag = 2.0 * dt * np.arange(m + 1)
    dens = np.zeros_like(lag)
    for w, q, beta in kernels:
        dens += w * gamma_density(q, beta, lag)
    wts = np.full(m + 1, 2.0 * dt)
    wts[0] = wts[-1] = dt  # trapezoid
    kern = dens * wts

    n = int(round(t_end / dt))
    n0 = 2 * m
    x = np.ones(n0 + n + 1)  # constant history 1

    def deriv(k, xk):
        window = x[k + n0 - 2 * m: k + n0 + 1: 2][::-1]
        z = float(kern @ window) + kern[0] * (xk - x[k + n0])
        return -a * xk - b * z

    f = np.empty(n + 1)
    f[0] = deriv(0, x[n0])
    # startup: tight Runge-Kutta substeps with linear half-node reads
    for k in range(3):
        sub = 8
        h = dt / sub
        xv = x[k + n0]
        for j in range(sub):
            t0 = k * dt + j * h

            def rhs(t, v):
                pos = (t - (0.0)) / dt
                # delayed reads at arbitrary lag: linear interp on the node grid
                idx = t / dt + n0 - lag / dt
                lo = np.floor(idx).astype(int)
                th = idx - lo
                vals = x[lo] * (1 - th) + x[np.minimum(lo + 1, k + n0)] * th
                head = kern[0] * (v - vals[0])
                return -a * v - b * (float(kern @ vals) + head)

            k1 = rhs(t0, xv)
            k2 = rhs(t0 + h / 2, xv + h / 2 * k1)
            k3 = rhs(t0 + h / 2, xv + h / 2 * k2)
            k4 = rhs(t0 + h, xv + h * k3)
            xv += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        x[k + 1 + n0] = xv
        f[k + 1] = deriv(k + 1, xv)
    for k in range(3, n):
        xp = x[k + n0] + dt / 24.0 * (55 * f[k] - 59 * f[k - 1] + 37 * f[k - 2] - 9 * f[k - 3])
        x[k + 1 + n0] = xp
        fp = deriv(k + 1, xp)
        x[k + 1 + n0] = x[k + n0] + dt / 24.0 * (9 * fp + 19 * f[k] - 5 * f[k - 1] + f[k - 2])
        f[k + 1] = deriv(k + 1, x[k + 1 + n0])
    return x[n0:]


def test_chain_matches_history_quadrature(rng):
    # restricted to non-growing trajectories: an absolute sup-norm tolerance
    # is meaningless once the solution blows up by orders of magnitude
    dt = 0.005
    done = 0
    while done < 20:
        d = random_mixture(rng, q_hi=5, beta_lo=0.8, beta_hi=2.5)
        a = float(rng.uniform(-1.0, 1.2))
        b = float(rng.uniform(-1.2, 1.2))
        p = CharacteristicProblem(a, b, d)
        if float(np.max(np.linalg.eigvals(chain_matrix(p)).real)) > 0.0:
            continue
        trace = simulate_linear(p, HistorySpec.constant(1.0), 20.0, dt, record_points=4001)
        ref = _history_quadrature_reference(a, b, d.effective_kernels(), 20.0, dt)
        assert trace.x.size == ref.size
        assert np.max(np.abs(trace.x - ref)) < 1e-4
        done += 1


# ----------------------------------------------------------------------
# integrator order
# ----------------------------------------------------------------------

def observed_convergence_orders():
    d = gamma_mixture([(0.5, 2, 1.0), (0.5, 3, 2.0)])
    p = CharacteristicProblem(0.4, 0.8, d)
    m = chain_matrix(p)
    u0 = np.ones(m.shape[0])
    t_end = 4.8
    x_ref = float((expm(m * t_end) @ u0)[0])
    errors = []
    for dt in (0.08, 0.04, 0.02):
        trace = simulate_linear(p, HistorySpec.constant(1.0), t_end, dt, record_points=100001)
        assert trace.t[-1] == pytest.approx(t_end, abs=1e-12)
        errors.append(abs(trace.x[-1] - x_ref))
    return [math.log2(errors[i] / errors[i + 1]) for i in range(len(errors) - 1)]


def test_integrator_fourth_order():
    for order in observed_convergence_orders():
        assert order == pytest.approx(4.0, abs=0.3)


# ----------------------------------------------------------------------
# steady states and linearization
# ----------------------------------------------------------------------

def test_steady_states_neutral(fig3_model):
    states = {s.branch: s.x for s in hemato_steady_states(fig3_model)}
    assert states[SteadyBranch.ZERO] == 0.0
    assert states[SteadyBranch.UNIQUE] == pytest.approx(1.0, abs=1e-12)


def test_steady_states_negative_cooperativity():
    m = HematoModel(1.0, 2.0, 0.0, 1.9, ((1.0, 2, 1.0),))
    states = hemato_steady_states(m)
    assert len(states) == 1  # x = 0 is not a steady state when r = 0
    assert states[0].branch is SteadyBranch.UNIQUE
    assert states[0].x == pytest.approx(1.0, abs=1e-10)


def test_steady_states_positive_cooperativity():
    m = HematoModel(1.0, 2.0, 1.3, 1.9, ((1.0, 2, 1.0),))
    states = {s.branch: s.x for s in hemato_steady_states(m)}
    assert states[SteadyBranch.ZERO] == 0.0
    assert states[SteadyBranch.UPPER] == pytest.approx(1.0, abs=1e-10)
    assert 0.1 < states[SteadyBranch.LOWER] < 0.2


def test_steady_states_no_positive_when_k0_small():
    m = HematoModel(3.0, 2.0, 1.0, 1.9, ((1.0, 2, 1.0),))
    states = hemato_steady_states(m)
    assert [s.branch for s in states] == [SteadyBranch.ZERO]


def test_steady_state_residuals(fig3_model):
    for s in hemato_steady_states(fig3_model):
        assert abs(fig3_model.steady_residual(s.x)) < 1e-10 * max(1.0, fig3_model.alpha * s.x)


@pytest.mark.parametrize("r,expected_a", [(1.0, 0.0), (0.0, 1.0), (1.3, -0.3)])
def test_linearize_coefficients(r, expected_a):
    m = HematoModel(1.0, 2.0, r, 1.9, ((0.3, 2, 2.0), (0.4, 20, 10.0), (0.3, 60, 20.0)))
    a, b = hemato_linearize(m, 1.0)
    assert a == pytest.approx(expected_a, abs=1e-12)
    assert b == pytest.approx(0.95, abs=1e-12)


def test_linearize_rejects_non_steady(fig3_model):
    with pytest.raises(ValueError):
        hemato_linearize(fig3_model, 1.4)


# ----------------------------------------------------------------------
# verdicts
# ----------------------------------------------------------------------

def test_verdict_mean_bound_point_i():
    m = HematoModel(1.0, 2.0, 1.0, 1.5, ((0.3, 2, 2.0), (0.4, 20, 10.0), (0.3, 60, 20.0)))
    results = {v.state.branch: v for v in hemato_verdict(m)}
    positive = results[SteadyBranch.UNIQUE]
    assert positive.verdict.stable is True
    assert positive.verdict.mean_bound == pytest.approx(math.pi / 1.5, abs=1e-9)


def test_verdict_point_ii_distributed_vs_discrete(fig3_model):
    distributed = {v.state.branch: v for v in hemato_verdict(fig3_model)}
    discrete_mode = {v.state.branch: v
                     for v in hemato_verdict(fig3_model, DelayMode.DISCRETE_AT_MEAN)}
    assert distributed[SteadyBranch.UNIQUE].verdict.stable is True
    assert discrete_mode[SteadyBranch.UNIQUE].verdict.stable is False
    # mean bound fails either way: pi/1.9 < 2
    assert distributed[SteadyBranch.UNIQUE].verdict.mean_bound == pytest.approx(math.pi / 1.9, abs=1e-9)


def test_verdict_zero_state():
    m = HematoModel(3.0, 2.0, 1.0, 1.9, ((1.0, 2, 1.0),))
    results = hemato_verdict(m)
    assert len(results) == 1
    assert results[0].state.branch is SteadyBranch.ZERO
    assert results[0].verdict.stable is True  # k0 < alpha
    m = HematoModel(1.0, 2.0, 1.0, 1.9, ((1.0, 2, 1.0),))
    zero = [v for v in hemato_verdict(m) if v.state.branch is SteadyBranch.ZERO][0]
    assert zero.verdict.stable is False  # k0 > alpha


def test_verdict_r_zero_flags_origin():
    m = HematoModel(1.0, 2.0, 0.0, 1.9, ((1.0, 2, 1.0),))
    results = hemato_verdict(m)
    assert results[0].verdict is None
    assert "not a steady state" in results[0].note


def test_verdict_positive_cooperativity_lower_unstable():
    m = HematoModel(1.0, 2.0, 1.3, 1.9, ((0.3, 2, 2.0), (0.4, 20, 10.0), (0.3, 60, 20.0)))
    results = {v.state.branch: v for v in hemato_verdict(m)}
    assert results[SteadyBranch.LOWER].verdict.stable is False
    assert results[SteadyBranch.ZERO].verdict.stable is True  # r > 1


# ----------------------------------------------------------------------
# nonlinear simulation
# ----------------------------------------------------------------------

def test_equilibrium_preserved(fig3_model):
    trace = simulate_hemato(fig3_model, HistorySpec.constant(1.0), 5.0, 4e-5)
    assert np.max(np.abs(trace.x - 1.0)) < 1e-9
    assert np.max(np.abs(trace.z - 1.0)) < 1e-9


def test_hemato_dt_validation(fig3_model):
    with pytest.raises(ValueError):
        simulate_hemato(fig3_model, HistorySpec.constant(1.0), 10.0, 1e-3)


def test_hemato_requires_positive_history(fig3_model):
    with pytest.raises(ValueError):
        simulate_hemato(fig3_model, HistorySpec.constant(-1.0), 10.0, 4e-5)


def test_hemato_discrete_mode_oscillates(fig3_model):
    trace = simulate_hemato(fig3_model, HistorySpec.constant(1.1), 80.0, 4e-5,
                            DelayMode.DISCRETE_AT_MEAN)
    assert classify_trace(trace) is TraceClass.OSCILLATORY
    assert np.ptp(trace.x[-trace.x.size // 4:]) > 0.05


def test_linearized_decay_rate_matches_root(fig3_model):
    # small perturbation about the positive state decays at the rightmost-root rate
    a, b = hemato_linearize(fig3_model, 1.0)
    report = rightmost_root(CharacteristicProblem(a, b, fig3_model.delay_distribution()))
    lam = report.roots[0][0]
    mu, omega = lam.real, abs(lam.imag)
    assert mu < 0
    period = 2 * math.pi / omega
    t_end = 30.0 + 1.5 / abs(mu)
    trace = simulate_hemato(fig3_model, HistorySpec.constant(1.0 + 1e-4), t_end, 4.5e-5,
                            record_points=20001)
    u = trace.x - 1.0
    dt_rec = trace.t[1] - trace.t[0]
    k = int(round(period / dt_rec))
    i1 = int(round(25.0 / dt_rec))
    i2 = int(round((25.0 + 1.0 / abs(mu)) / dt_rec))
    rms1 = np.sqrt(np.mean(u[i1:i1 + k] ** 2))
    rms2 = np.sqrt(np.mean(u[i2:i2 + k] ** 2))
    rate = math.log(rms2 / rms1) / (trace.t[i2] - trace.t[i1])
    assert rate == pytest.approx(mu, rel=0.05)


def test_trace_csv_roundtrip(tmp_path, fig3_model):
    trace = simulate_hemato(fig3_model, HistorySpec.constant(1.05), 2.0, 4e-5)
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    again = trace_from_csv(path)
    assert np.allclose(again.t, trace.t)
    assert np.allclose(again.x, trace.x)
    assert np.allclose(again.z, trace.z)
    header = path.read_text().splitlines()[0]
    assert header == "t,x,z"
