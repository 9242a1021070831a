"""Time-domain integration and the hematopoiesis compartment model.

Two integration routes, both fixed-step classical 4-stage Runge-Kutta:

* discrete delay distributions use the method of steps: the solution and its
  derivative are stored on the step grid and delayed reads interpolate with
  two-point cubic Hermite polynomials, which preserves the 4th-order accuracy
  of the integrator;
* Gamma-mixture distributions reduce exactly to a cascade of first-order
  compartments (one per unit of shape), integrated as a plain ODE system.

The hematopoiesis model couples a stem-cell pool ``x`` to parallel maturation
lineages whose outputs repress production through a mixed feedback term
``P(x, z) = k0 x^r / (1 + z^h)``. Steady states, linearized coefficients and
per-steady-state stability verdicts are derived here and cross-checked by
simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit

from .criteria import DecidedBy, Region, StabilityVerdict, classify
from .distributions import DelayDistribution, gamma_mixture, single_delay
from .spectrum import CharacteristicProblem

__all__ = [
    "HematoModel",
    "HistorySpec",
    "Trace",
    "TraceClass",
    "DelayMode",
    "SteadyBranch",
    "SteadyState",
    "HematoStateVerdict",
    "simulate_linear",
    "simulate_hemato",
    "hemato_steady_states",
    "hemato_linearize",
    "hemato_verdict",
    "classify_trace",
]

#: trajectories whose magnitude passes this are flagged divergent and truncated
DIVERGENCE_LIMIT = 1e100

#: fraction of clipped steps beyond which a hemato run is rejected as under-resolved
CLIP_FAIL_FRACTION = 0.01


class DelayMode(str, Enum):
    DISTRIBUTED_CHAIN = "distributed_chain"
    DISCRETE_AT_MEAN = "discrete_at_mean"


class TraceClass(str, Enum):
    CONVERGED = "converged"
    OSCILLATORY = "oscillatory"
    UNDECIDED = "undecided"


class SteadyBranch(str, Enum):
    ZERO = "zero"
    LOWER = "lower"
    UPPER = "upper"
    UNIQUE = "unique"
    DOUBLE = "double"


# ----------------------------------------------------------------------
# model and histories
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class HematoModel:
    """Stem-cell compartment model with parallel maturation lineages.

    ``alpha`` is the disappearance rate, ``k0`` the production scale, ``r``
    the cooperativity of the activating loop (``r <= h`` keeps solutions
    bounded) and ``h > 1`` the Hill coefficient of the repressing loop.
    Each lineage ``(p, q, beta)`` is a chain of ``q`` compartments with
    kinetic rate ``beta`` feeding a repressor with weight ``p``.
    """

    alpha: float
    k0: float
    r: float
    h: float
    lineages: tuple[tuple[float, int, float], ...]

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError("alpha must be positive")
        if not (self.k0 > 0 and math.isfinite(self.k0)):
            raise ValueError("k0 must be positive")
        if not (0.0 <= self.r <= self.h):
            raise ValueError("need 0 <= r <= h for bounded solutions")
        if not self.h > 1.0:
            raise ValueError("Hill coefficient h must exceed 1")
        if not 1 <= len(self.lineages) <= 3:
            raise ValueError("1 to 3 lineages supported")
        lineages = tuple((float(p), int(q), float(beta)) for p, q, beta in self.lineages)
        total = math.fsum(p for p, _, _ in lineages)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"lineage weights sum to {total!r}, expected 1")
        for p, q, beta in lineages:
            if p <= 0 or q < 1 or beta <= 0:
                raise ValueError("each lineage needs p > 0, q >= 1, beta > 0")
        object.__setattr__(self, "lineages", tuple((p / total, q, beta) for p, q, beta in lineages))

    def delay_distribution(self) -> DelayDistribution:
        """The Gamma-mixture delay distribution realized by the lineages."""
        return gamma_mixture([(p, q, beta) for p, q, beta in self.lineages])

    def mean_delay(self) -> float:
        return self.delay_distribution().mean()

    def production(self, x: float, z: float) -> float:
        xp = max(x, 0.0)
        zp = max(z, 0.0)
        return self.k0 * xp ** self.r / (1.0 + zp ** self.h)

    def steady_residual(self, x: float) -> float:
        # the delay kernel integrates to 1, so the repressor equals x at rest
        return self.production(x, x) - self.alpha * x

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "k0": self.k0,
            "r": self.r,
            "h": self.h,
            "lineages": [[p, q, beta] for p, q, beta in self.lineages],
        }


def hemato_from_json(obj: dict) -> HematoModel:
    return HematoModel(
        float(obj["alpha"]), float(obj["k0"]), float(obj["r"]), float(obj["h"]),
        tuple((float(p), int(q), float(beta)) for p, q, beta in obj["lineages"]),
    )


@dataclass(frozen=True)
class HistorySpec:
    """Initial function on the delay horizon ``[-tau_max, 0]``."""

    kind: str
    value: float | None = None
    times: tuple[float, ...] | None = None
    values: tuple[float, ...] | None = None

    @staticmethod
    def constant(value: float) -> "HistorySpec":
        return HistorySpec("constant", value=float(value))

    @staticmethod
    def sampled(times, values) -> "HistorySpec":
        times = tuple(float(t) for t in times)
        values = tuple(float(v) for v in values)
        if len(times) != len(values) or len(times) < 2:
            raise ValueError("sampled history needs matching times/values, at least two samples")
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("sample times must be strictly increasing")
        if times[-1] < 0.0:
            raise ValueError("samples must reach t = 0")
        return HistorySpec("sampled", times=times, values=values)

    def span(self) -> float:
        """Length of past time covered by this history."""
        if self.kind == "constant":
            return math.inf
        return -self.times[0]

    def at(self, t):
        """History value at time(s) ``t <= 0``."""
        if self.kind == "constant":
            t = np.asarray(t, dtype=float)
            out = np.full_like(t, self.value)
            return float(out) if out.ndim == 0 else out
        return np.interp(t, self.times, self.values)

    def grid(self, t_lo: float, dt: float, n: int) -> np.ndarray:
        """Values at the ``n + 1`` nodes ``t_lo, t_lo + dt, ..., 0``."""
        ts = t_lo + dt * np.arange(n + 1)
        return np.asarray(self.at(ts), dtype=float)


@dataclass
class Trace:
    """Uniformly sampled trajectory with integration metadata.

    ``x`` is the scalar state; ``z`` carries the weighted repressor when one
    exists. ``truncated`` marks divergence cut-off, ``clipped_steps`` counts
    positivity clips (nonzero only for the nonlinear model).
    """

    t: np.ndarray
    x: np.ndarray
    z: np.ndarray | None
    dt: float
    scheme: str
    truncated: bool = False
    clipped_steps: int = 0

    def to_csv(self, path) -> None:
        if self.z is None:
            data = np.column_stack([self.t, self.x])
            header = "t,x"
        else:
            data = np.column_stack([self.t, self.x, self.z])
            header = "t,x,z"
        np.savetxt(path, data, delimiter=",", header=header, comments="")


def trace_from_csv(path) -> Trace:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t, x = data[:, 0], data[:, 1]
    z = data[:, 2] if data.shape[1] > 2 else None
    dt = float(t[1] - t[0]) if t.size > 1 else 0.0
    return Trace(t, x, z, dt, "csv")


# ----------------------------------------------------------------------
# numba kernels
# ----------------------------------------------------------------------

@njit(cache=True)
def _chain_rhs(u, du, rates, srcs, z_idx, z_w, mode, p0, p1, p2, p3):
    z = 0.0
    for k in range(z_idx.size):
        z += z_w[k] * u[z_idx[k]]
    x = u[0]
    if mode == 0:
        du[0] = -p0 * x - p1 * z
    else:
        xp = x if x > 0.0 else 0.0
        zp = z if z > 0.0 else 0.0
        du[0] = p1 * xp ** p2 / (1.0 + zp ** p3) - p0 * x
    for k in range(1, u.shape[0]):
        du[k] = rates[k] * (u[srcs[k]] - u[k])


@njit(cache=True)
def _chain_z(u, z_idx, z_w):
    z = 0.0
    for k in range(z_idx.size):
        z += z_w[k] * u[z_idx[k]]
    return z


@njit(cache=True)
def _rk4_chain(u, dt, n_steps, stride, rates, srcs, z_idx, z_w, mode,
               p0, p1, p2, p3, clip, out_x, out_z):
    n = u.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    clips = 0
    rec = 0
    out_x[0] = u[0]
    out_z[0] = _chain_z(u, z_idx, z_w)
    for step in range(n_steps):
        _chain_rhs(u, k1, rates, srcs, z_idx, z_w, mode, p0, p1, p2, p3)
        for i in range(n):
            tmp[i] = u[i] + 0.5 * dt * k1[i]
        _chain_rhs(tmp, k2, rates, srcs, z_idx, z_w, mode, p0, p1, p2, p3)
        for i in range(n):
            tmp[i] = u[i] + 0.5 * dt * k2[i]
        _chain_rhs(tmp, k3, rates, srcs, z_idx, z_w, mode, p0, p1, p2, p3)
        for i in range(n):
            tmp[i] = u[i] + dt * k3[i]
        _chain_rhs(tmp, k4, rates, srcs, z_idx, z_w, mode, p0, p1, p2, p3)
        for i in range(n):
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        if clip == 1:
            for i in range(n):
                if u[i] < 0.0:
                    u[i] = 0.0
                    clips += 1
        ax = abs(u[0])
        if not np.isfinite(ax) or ax > DIVERGENCE_LIMIT:
            return rec, clips, 1
        if (step + 1) % stride == 0:
            rec += 1
            out_x[rec] = u[0]
            out_z[rec] = _chain_z(u, z_idx, z_w)
    return rec, clips, 0


@njit(cache=True)
def _delayed_read(s, xbuf, xdbuf, ring, dt, m_now, hist_vals, t_lo, n0):
    """State value at time ``s``: history for s <= 0, Hermite for s > 0."""
    if s <= 0.0:
        pos = (s - t_lo) / dt
        j = int(pos)
        if j < 0:
            j = 0
        if j > n0 - 1:
            j = n0 - 1
        th = pos - j
        return hist_vals[j] * (1.0 - th) + hist_vals[j + 1] * th
    pos = s / dt
    j = int(pos)
    if j > m_now - 1:
        j = m_now - 1
    th = pos - j
    x0 = xbuf[j % ring]
    x1 = xbuf[(j + 1) % ring]
    d0 = xdbuf[j % ring]
    d1 = xdbuf[(j + 1) % ring]
    h00 = (1.0 + 2.0 * th) * (1.0 - th) ** 2
    h10 = th * (1.0 - th) ** 2
    h01 = th * th * (3.0 - 2.0 * th)
    h11 = th * th * (th - 1.0)
    return h00 * x0 + h10 * dt * d0 + h01 * x1 + h11 * dt * d1


@njit(cache=True)
def _steps_rhs(s, xval, xbuf, xdbuf, ring, dt, m_now, hist_vals, t_lo, n0,
               delays, weights, mode, p0, p1, p2, p3):
    if mode == 0:
        acc = 0.0
        for i in range(delays.size):
            acc += weights[i] * _delayed_read(s - delays[i], xbuf, xdbuf, ring, dt,
                                              m_now, hist_vals, t_lo, n0)
        return -p0 * xval - p1 * acc
    zd = _delayed_read(s - delays[0], xbuf, xdbuf, ring, dt, m_now, hist_vals, t_lo, n0)
    zp = zd if zd > 0.0 else 0.0
    xp = xval if xval > 0.0 else 0.0
    return p1 * xp ** p2 / (1.0 + zp ** p3) - p0 * xval


@njit(cache=True)
def _rk4_steps(dt, n_steps, stride, delays, weights, mode, p0, p1, p2, p3, clip,
               hist_vals, t_lo, n0, ring, out_x, out_z):
    xbuf = np.zeros(ring)
    xdbuf = np.zeros(ring)
    x = hist_vals[n0]
    xbuf[0] = x
    xdbuf[0] = _steps_rhs(0.0, x, xbuf, xdbuf, ring, dt, 0, hist_vals, t_lo, n0,
                          delays, weights, mode, p0, p1, p2, p3)
    clips = 0
    rec = 0
    out_x[0] = x
    out_z[0] = _delayed_read(-delays[0], xbuf, xdbuf, ring, dt, 0, hist_vals, t_lo, n0)
    for step in range(n_steps):
        t = step * dt
        x = xbuf[step % ring]
        k1 = xdbuf[step % ring]
        k2 = _steps_rhs(t + 0.5 * dt, x + 0.5 * dt * k1, xbuf, xdbuf, ring, dt, step,
                        hist_vals, t_lo, n0, delays, weights, mode, p0, p1, p2, p3)
        k3 = _steps_rhs(t + 0.5 * dt, x + 0.5 * dt * k2, xbuf, xdbuf, ring, dt, step,
                        hist_vals, t_lo, n0, delays, weights, mode, p0, p1, p2, p3)
        k4 = _steps_rhs(t + dt, x + dt * k3, xbuf, xdbuf, ring, dt, step,
                        hist_vals, t_lo, n0, delays, weights, mode, p0, p1, p2, p3)
        xn = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if clip == 1 and xn < 0.0:
            xn = 0.0
            clips += 1
        if not np.isfinite(xn) or abs(xn) > DIVERGENCE_LIMIT:
            return rec, clips, 1
        xbuf[(step + 1) % ring] = xn
        xdbuf[(step + 1) % ring] = _steps_rhs(t + dt, xn, xbuf, xdbuf, ring, dt, step + 1,
                                              hist_vals, t_lo, n0, delays, weights,
                                              mode, p0, p1, p2, p3)
        if (step + 1) % stride == 0:
            rec += 1
            out_x[rec] = xn
            out_z[rec] = _delayed_read(t + dt - delays[0], xbuf, xdbuf, ring, dt, step + 1,
                                       hist_vals, t_lo, n0)
    return rec, clips, 0


# ----------------------------------------------------------------------
# integration wrappers
# ----------------------------------------------------------------------

def _chain_structure(kernels):
    """Flatten ``(weight, q, beta)`` cascades into rate/source/readout arrays."""
    n = 1 + sum(q for _, q, _ in kernels)
    rates = np.zeros(n)
    srcs = np.zeros(n, dtype=np.int64)
    z_idx = np.zeros(len(kernels), dtype=np.int64)
    z_w = np.zeros(len(kernels))
    idx = 1
    for k, (w, q, beta) in enumerate(kernels):
        rates[idx] = beta
        srcs[idx] = 0
        for j in range(1, q):
            rates[idx + j] = beta
            srcs[idx + j] = idx + j - 1
        z_idx[k] = idx + q - 1
        z_w[k] = w
        idx += q
    return rates, srcs, z_idx, z_w


def _chain_initial_state(history: HistorySpec, kernels, x0: float) -> np.ndarray:
    """Compartment contents consistent with the history function.

    Stage ``j`` of a cascade holds the history averaged against a Gamma
    density of shape ``j``; for a constant history every stage equals it.
    """
    n = 1 + sum(q for _, q, _ in kernels)
    u0 = np.empty(n)
    u0[0] = x0
    if history.kind == "constant":
        u0[1:] = history.value
        return u0
    from .distributions import gamma_density

    idx = 1
    for _, q, beta in kernels:
        # integrate far enough that the slowest stage tail is below 1e-10
        tail = (q + 40.0 + 10.0 * math.sqrt(q)) / beta
        ts = np.linspace(0.0, tail, 4001)
        hv = np.asarray(history.at(-ts), dtype=float)
        for j in range(1, q + 1):
            dens = gamma_density(j, beta, ts)
            u0[idx + j - 1] = np.trapezoid(hv * dens, ts)
        idx += q
    return u0


def _run_chain(kernels, x0, history, t_end, dt, mode, params, clip, record_points):
    rates, srcs, z_idx, z_w = _chain_structure(kernels)
    max_rate = float(np.max(rates[1:])) if rates.size > 1 else 0.0
    if max_rate > 0.0 and dt > 2.5 / max_rate:
        raise ValueError(f"dt={dt} too large for chain rate {max_rate} (explicit scheme unstable)")
    u0 = _chain_initial_state(history, kernels, x0)
    n_steps = max(1, int(round(t_end / dt)))
    stride = max(1, int(math.ceil(n_steps / max(record_points - 1, 1))))
    n_rec = n_steps // stride
    out_x = np.zeros(n_rec + 1)
    out_z = np.zeros(n_rec + 1)
    p0, p1, p2, p3 = params
    rec, clips, trunc = _rk4_chain(u0, dt, n_steps, stride, rates, srcs, z_idx, z_w,
                                   mode, p0, p1, p2, p3, 1 if clip else 0, out_x, out_z)
    t = dt * stride * np.arange(rec + 1)
    return Trace(t, out_x[:rec + 1], out_z[:rec + 1], dt, "rk4_chain",
                 truncated=bool(trunc), clipped_steps=int(clips)), n_steps


def _run_steps(delays, weights, history, t_end, dt, mode, params, clip, record_points):
    tau_max = float(np.max(delays))
    n0 = int(math.ceil(tau_max / dt)) + 2
    t_lo = -n0 * dt
    if history.span() < tau_max - 1e-12:
        raise ValueError(f"history covers {history.span()}, but the maximal delay is {tau_max}")
    hist_vals = history.grid(t_lo, dt, n0)
    n_steps = max(1, int(round(t_end / dt)))
    stride = max(1, int(math.ceil(n_steps / max(record_points - 1, 1))))
    n_rec = n_steps // stride
    out_x = np.zeros(n_rec + 1)
    out_z = np.zeros(n_rec + 1)
    ring = n0 + 8
    p0, p1, p2, p3 = params
    rec, clips, trunc = _rk4_steps(dt, n_steps, stride, delays, weights, mode,
                                   p0, p1, p2, p3, 1 if clip else 0,
                                   hist_vals, t_lo, n0, ring, out_x, out_z)
    t = dt * stride * np.arange(rec + 1)
    return Trace(t, out_x[:rec + 1], out_z[:rec + 1], dt, "rk4_steps",
                 truncated=bool(trunc), clipped_steps=int(clips)), n_steps


def simulate_linear(problem: CharacteristicProblem, history: HistorySpec,
                    t_end: float, dt: float, record_points: int = 4001) -> Trace:
    """Integrate ``x' = -a x - b * (delayed average of x)`` from the history.

    Discrete distributions use the method of steps and require
    ``dt <= min(0.01, tau_min / 20)`` over the positive delays; mixtures are
    integrated through their exact compartment chain. Divergence truncates
    the trace and sets its flag rather than raising.
    """
    if t_end <= 0 or dt <= 0:
        raise ValueError("t_end and dt must be positive")
    d = problem.dist
    params = (problem.a, problem.b, 0.0, 0.0)
    if d.is_mixture and d.rho > 0.0:
        trace, _ = _run_chain(d.effective_kernels(), history.at(0.0), history, t_end, dt,
                              0, params, False, record_points)
        return trace
    atoms = d.effective_atoms()
    a_eff = problem.a + problem.b * sum(w for w, t in atoms if t == 0.0)
    delayed = [(w, t) for w, t in atoms if t > 0.0]
    if not delayed:
        # no delayed term left: plain scalar ODE x' = -(a + b) x
        if dt > 0.01:
            raise ValueError("dt too large: discrete simulations require dt <= 0.01")
        n_steps = max(1, int(round(t_end / dt)))
        stride = max(1, int(math.ceil(n_steps / max(record_points - 1, 1))))
        t = dt * stride * np.arange(n_steps // stride + 1)
        x = history.at(0.0) * np.exp(-a_eff * t)
        return Trace(t, x, None, dt, "exact_exponential")
    tau_min = min(t for _, t in delayed)
    if dt > min(0.01, tau_min / 20.0):
        raise ValueError(
            f"dt={dt} too large: discrete simulations require dt <= min(0.01, tau_min/20) = "
            f"{min(0.01, tau_min / 20.0):.6g}"
        )
    delays = np.array([t for _, t in delayed])
    weights = np.array([w for w, _ in delayed])
    trace, _ = _run_steps(delays, weights, history, t_end, dt,
                          0, (a_eff, problem.b, 0.0, 0.0), False, record_points)
    trace.z = None
    return trace


def simulate_hemato(model: HematoModel, history: HistorySpec, t_end: float, dt: float,
                    delay_mode: DelayMode = DelayMode.DISTRIBUTED_CHAIN,
                    record_points: int = 4001) -> Trace:
    """Integrate the nonlinear compartment model.

    ``distributed_chain`` integrates the full lineage cascade;
    ``discrete_at_mean`` replaces the delay distribution by a single delay
    at its mean. Requires a positive history and
    ``dt <= 1e-3 * min(1/beta_i, mean/20)``. Negative states are clipped to
    zero and counted; a run with more than 1% clipped steps is rejected as
    under-resolved.
    """
    if t_end <= 0 or dt <= 0:
        raise ValueError("t_end and dt must be positive")
    delay_mode = DelayMode(delay_mode)
    if history.kind == "constant":
        if not history.value > 0.0:
            raise ValueError("hemato histories must be positive")
    elif not all(v > 0.0 for v in history.values):
        raise ValueError("hemato histories must be positive")
    mean = model.mean_delay()
    dt_cap = 1e-3 * min(min(1.0 / beta for _, _, beta in model.lineages), mean / 20.0)
    if dt > dt_cap:
        raise ValueError(f"dt={dt} too large: requires dt <= {dt_cap:.6g}")
    params = (model.alpha, model.k0, model.r, model.h)
    if delay_mode is DelayMode.DISTRIBUTED_CHAIN:
        trace, n_steps = _run_chain([(p, q, beta) for p, q, beta in model.lineages],
                                    history.at(0.0), history, t_end, dt, 1, params,
                                    True, record_points)
    else:
        delays = np.array([mean])
        weights = np.array([1.0])
        trace, n_steps = _run_steps(delays, weights, history, t_end, dt,
                                    1, params, True, record_points)
    if trace.clipped_steps > CLIP_FAIL_FRACTION * n_steps:
        raise RuntimeError(
            f"{trace.clipped_steps} positivity clips in {n_steps} steps: dt too coarse"
        )
    return trace


def classify_trace(trace: Trace, window: float = 0.25,
                   osc_threshold: float = 1e-2, conv_threshold: float = 1e-4) -> TraceClass:
    """Late-time behaviour: peak-to-peak of x over the trailing window.

    Above ``osc_threshold`` is oscillatory, below ``conv_threshold`` is
    converged, anything between is undecided (extend the horizon).
    """
    if trace.truncated:
        return TraceClass.OSCILLATORY
    n = trace.x.size
    tail = trace.x[int((1.0 - window) * n):]
    spread = float(np.max(tail) - np.min(tail))
    if spread > osc_threshold:
        return TraceClass.OSCILLATORY
    if spread < conv_threshold:
        return TraceClass.CONVERGED
    return TraceClass.UNDECIDED


# ----------------------------------------------------------------------
# steady states, linearization, verdicts
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SteadyState:
    x: float
    branch: SteadyBranch


def _positive_roots(model: HematoModel) -> list[tuple[float, SteadyBranch]]:
    alpha, k0, r, h = model.alpha, model.k0, model.r, model.h
    if r == 1.0:
        if k0 > alpha:
            return [(((k0 - alpha) / alpha) ** (1.0 / h), SteadyBranch.UNIQUE)]
        return []
    if r < 1.0:
        # alpha * (1 + x^h) * x^(1-r) = k0 is strictly increasing in x
        fn = lambda x: alpha * (1.0 + x ** h) * x ** (1.0 - r) - k0
        hi = 1.0
        for _ in range(200):
            if fn(hi) > 0.0:
                break
            hi *= 2.0
        lo = hi
        for _ in range(400):
            if fn(lo) < 0.0:
                break
            lo *= 0.5
        root = _refine_root(fn, lo, hi)
        return [(root, SteadyBranch.UNIQUE)]
    # r > 1: psi(x) = alpha x^h - k0 x^(r-1) + alpha has 0, 1 (tangent) or 2 positive roots
    fn = lambda x: alpha * x ** h - k0 * x ** (r - 1.0) + alpha
    x_hi = 2.0 * max(1.0, (k0 / alpha) ** (1.0 / (h - r + 1.0)))
    grid = np.geomspace(1e-9, x_hi, 600)
    vals = np.array([fn(x) for x in grid])
    roots: list[float] = []
    for i in range(grid.size - 1):
        if vals[i] == 0.0:
            roots.append(float(grid[i]))
        elif vals[i] * vals[i + 1] < 0.0:
            roots.append(_refine_root(fn, float(grid[i]), float(grid[i + 1])))
    if not roots:
        # possible tangency: inspect the minimum of psi
        i_min = int(np.argmin(vals))
        lo, hi = grid[max(i_min - 1, 0)], grid[min(i_min + 1, grid.size - 1)]
        for _ in range(200):
            m1, m2 = lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0
            if fn(m1) < fn(m2):
                hi = m2
            else:
                lo = m1
        xm = 0.5 * (lo + hi)
        if abs(fn(xm)) < 1e-9 * max(1.0, k0):
            return [(xm, SteadyBranch.DOUBLE)]
        return []
    if len(roots) == 1:
        return [(roots[0], SteadyBranch.DOUBLE)]
    return [(roots[0], SteadyBranch.LOWER), (roots[-1], SteadyBranch.UPPER)]


def _refine_root(fn, lo: float, hi: float) -> float:
    flo, fhi = fn(lo), fn(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if fm == 0.0:
            return mid
        if flo * fm < 0.0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
        if hi - lo < 1e-12 * max(1.0, abs(lo)):
            break
    return 0.5 * (lo + hi)


def hemato_steady_states(model: HematoModel) -> list[SteadyState]:
    """All nonnegative steady states of the model.

    ``x = 0`` rests only when ``r > 0`` (for ``r = 0`` production at zero is
    strictly positive). Positive states solve ``P(x, x) = alpha x``; for
    ``r > 1`` the smaller/larger pair is labeled explicitly, a coincident
    pair is labeled ``double``.
    """
    out: list[SteadyState] = []
    if model.r > 0.0:
        out.append(SteadyState(0.0, SteadyBranch.ZERO))
    for x, branch in _positive_roots(model):
        resid = abs(model.steady_residual(x))
        if resid > 1e-10 * max(1.0, model.alpha * x):
            raise RuntimeError(f"steady-state refinement left residual {resid:.3e} at x={x!r}")
        out.append(SteadyState(float(x), branch))
    return out


def hemato_linearize(model: HematoModel, xbar: float) -> tuple[float, float]:
    """Linearized coefficients ``(a, b)`` about a positive steady state.

    ``a = alpha (1 - r)`` and ``b = alpha^2 h xbar^(h - r + 1) / k0``; the
    delay distribution of the linear problem is the lineage mixture.
    """
    if not xbar > 0.0:
        raise ValueError("linearization requires a positive steady state")
    resid = abs(model.steady_residual(xbar))
    if resid > 1e-8 * max(1.0, model.alpha * xbar):
        raise ValueError(f"x={xbar!r} is not a steady state (residual {resid:.3e})")
    a = model.alpha * (1.0 - model.r)
    b = model.alpha ** 2 * model.h * xbar ** (model.h - model.r + 1.0) / model.k0
    return a, b


@dataclass(frozen=True)
class HematoStateVerdict:
    state: SteadyState
    verdict: StabilityVerdict | None
    note: str = ""

    def to_json(self) -> dict:
        return {
            "x": self.state.x,
            "branch": self.state.branch.value,
            "verdict": self.verdict.to_json() if self.verdict is not None else None,
            "note": self.note,
        }


def hemato_verdict(model: HematoModel,
                   delay_mode: DelayMode = DelayMode.DISTRIBUTED_CHAIN) -> list[HematoStateVerdict]:
    """Linear stability verdict for every steady state.

    Positive states are linearized and classified against the lineage delay
    distribution (or a single delay at its mean, in ``discrete_at_mean``
    mode). The zero state follows the cooperativity cases: always stable for
    ``r > 1``, stable iff ``k0 < alpha`` for ``r = 1``, always unstable for
    ``0 < r < 1``, and not a steady state at all for ``r = 0``.
    """
    delay_mode = DelayMode(delay_mode)
    if delay_mode is DelayMode.DISTRIBUTED_CHAIN:
        dist = model.delay_distribution()
    else:
        dist = single_delay(model.mean_delay())
    out: list[HematoStateVerdict] = []
    for state in hemato_steady_states(model):
        if state.branch is SteadyBranch.ZERO:
            if model.r > 1.0:
                verdict = StabilityVerdict(
                    Region.DELAY_INDEPENDENT_STABLE, DecidedBy.HAYES_AXIOMS, True,
                    "zero state with positively cooperative production is linearly stable",
                    mean_bound=math.inf,
                )
            elif model.r == 1.0:
                # production linearizes to k0 x at the origin, so a = alpha - k0, b = 0
                verdict = classify(CharacteristicProblem(model.alpha - model.k0, 0.0, dist))
            else:
                verdict = StabilityVerdict(
                    Region.DELAY_INDEPENDENT_UNSTABLE, DecidedBy.HAYES_AXIOMS, False,
                    "zero state with negative cooperativity is unstable "
                    "(production derivative unbounded at 0)",
                )
            out.append(HematoStateVerdict(state, verdict))
            continue
        if state.branch is SteadyBranch.DOUBLE:
            out.append(HematoStateVerdict(
                state,
                StabilityVerdict(
                    Region.DELAY_INDEPENDENT_UNSTABLE, DecidedBy.HAYES_AXIOMS, False,
                    "coincident steady-state pair (a = -b): unstable",
                ),
                note="tangent saddle-node pair",
            ))
            continue
        a, b = hemato_linearize(model, state.x)
        out.append(HematoStateVerdict(state, classify(CharacteristicProblem(a, b, dist))))
    if model.r == 0.0:
        out.insert(0, HematoStateVerdict(
            SteadyState(0.0, SteadyBranch.ZERO), None,
            note="x = 0 is not a steady state: production k0/(1+z^h) is positive at x = 0",
        ))
    return out
