"""Closed-form and semi-analytic stability criteria.

The classifier resolves a problem in the cheapest order that is sound:

1. ``a <= -b``: a nonnegative real characteristic root exists; unstable for
   every delay distribution.
2. ``a >= |b|`` and ``a > -b``: no root can reach the right half plane;
   stable for every delay distribution.
3. ``b > |a|`` and mean delay below the critical single-delay mean
   ``arccos(-a/b) / sqrt(b^2 - a^2)``: stable regardless of the shape of
   the distribution, because the single delay at the mean is the worst case.
4. otherwise the verdict depends on the distribution: a sufficient
   frequency-sweep test runs first and the rightmost characteristic root
   decides when the sweep is inconclusive.

The module also builds the worst-case two-delay density: among all two-atom
densities with a fixed mean and a fixed cosine moment ``C(omega_s) = -a``,
the one anchored at lag zero maximizes the sine moment ``S(omega_s)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable

import numpy as np

from .distributions import DelayDistribution, discrete, single_delay
from .spectrum import EPS_STAB, CharacteristicProblem, RootReport, rightmost_root

__all__ = [
    "Region",
    "DecidedBy",
    "StabilityVerdict",
    "SweepResult",
    "ExtremalDistribution",
    "ChordSolution",
    "FeasibilityError",
    "constants_c_thetac",
    "g_eval",
    "hayes_bound",
    "cs_crossings",
    "cs_sweep",
    "classify",
    "extremal_f_star",
    "extremal_given_u",
    "chord_density",
]


class FeasibilityError(ValueError):
    """The requested extremal construction does not exist."""


class Region(str, Enum):
    DELAY_INDEPENDENT_STABLE = "delay_independent_stable"
    MEAN_BOUND_STABLE = "mean_bound_stable"
    DISTRIBUTION_DEPENDENT = "distribution_dependent"
    DELAY_INDEPENDENT_UNSTABLE = "delay_independent_unstable"


class DecidedBy(str, Enum):
    HAYES_AXIOMS = "hayes_axioms"
    MEAN_BOUND = "mean_bound"
    CS_SWEEP = "cs_sweep"
    RIGHTMOST_ROOT = "rightmost_root"


class SweepResult(str, Enum):
    CERTIFIED_STABLE = "certified_stable"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class StabilityVerdict:
    """Outcome of the stability classification for one problem."""

    region: Region
    decided_by: DecidedBy
    stable: bool | None
    details: str
    mean_bound: float | None = None

    def to_json(self) -> dict:
        return {
            "region": self.region.value,
            "decided_by": self.decided_by.value,
            "stable": self.stable,
            "details": self.details,
            "mean_bound": self.mean_bound if self.mean_bound is not None and math.isfinite(self.mean_bound) else None,
        }


def verdict_from_json(obj: dict) -> StabilityVerdict:
    mb = obj.get("mean_bound")
    return StabilityVerdict(
        Region(obj["region"]),
        DecidedBy(obj["decided_by"]),
        obj["stable"],
        obj.get("details", ""),
        float(mb) if mb is not None else None,
    )


# ----------------------------------------------------------------------
# scalar solves: bracketed bisection plus a short Newton polish
# ----------------------------------------------------------------------

def _bisect_newton(fn: Callable[[float], float], lo: float, hi: float,
                   dfn: Callable[[float], float] | None = None, tol: float = 1e-10) -> float:
    flo, fhi = fn(lo), fn(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        raise ValueError(f"no sign change on [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if fm == 0.0:
            lo = hi = mid
            break
        if flo * fm < 0.0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    x = 0.5 * (lo + hi)
    if dfn is not None:
        for _ in range(2):
            d = dfn(x)
            if d == 0.0:
                break
            step = fn(x) / d
            if not math.isfinite(step):
                break
            x -= step
    return x


@lru_cache(maxsize=1)
def constants_c_thetac() -> tuple[float, float]:
    """Tangency constants of the chord bound ``cos(x) >= 1 - c x``.

    ``theta_c`` in ``(pi/2, pi)`` solves ``1 - theta sin(theta) = cos(theta)``
    and ``c = sin(theta_c)`` is the smallest slope for which the chord
    ``1 - c x`` stays below the cosine for all positive ``x``.
    """
    fn = lambda th: math.cos(th) - 1.0 + th * math.sin(th)
    dfn = lambda th: th * math.cos(th)
    theta_c = _bisect_newton(fn, math.pi / 2 + 1e-12, math.pi - 1e-12, dfn, tol=1e-12)
    return math.sin(theta_c), theta_c


def g_eval(x: float) -> float:
    """Convex minorant of the cosine: ``1 - c x`` up to the tangency, then ``cos``."""
    c, theta_c = constants_c_thetac()
    if not -1e-12 <= x <= math.pi + 1e-12:
        raise ValueError(f"g is defined on [0, pi], got {x!r}")
    x = min(max(x, 0.0), math.pi)
    return 1.0 - c * x if x < theta_c else math.cos(x)


def hayes_bound(a: float, b: float) -> float | None:
    """Critical mean delay below which any distribution is stable.

    Returns ``arccos(-a/b) / sqrt(b^2 - a^2)`` when ``b > |a|``,
    ``inf`` in the delay-independent stable wedge (``a >= |b|, a > -b``),
    and ``None`` when ``a <= -b`` (unstable for every delay).
    """
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("a and b must be finite")
    if a <= -b:
        return None
    if a >= abs(b):
        return math.inf
    return math.acos(-a / b) / math.sqrt(b * b - a * a)


# ----------------------------------------------------------------------
# frequency sweep (normalized problem, b = 1)
# ----------------------------------------------------------------------

def cs_crossings(a: float, d: DelayDistribution, resolution: float = 1e-3) -> list[float]:
    """Frequencies in ``(0, omega_c]`` where ``C(omega) = -a`` (normalized b=1).

    Grid scan at ``resolution * omega_c`` with bisection refinement of each
    sign change to 1e-10; local minima grazing zero are refined too so
    near-tangent crossings are not silently skipped.
    """
    if not -1.0 < a < 1.0:
        raise ValueError("normalized problems need a in (-1, 1)")
    omega_c = math.sqrt(1.0 - a * a)
    n = max(3, int(round(1.0 / resolution)) + 1)
    h = lambda w: d.cs_moments(w)[0] + a
    ws = np.linspace(0.0, omega_c, n)
    hs = np.asarray(d.laplace(1j * ws)).real + a
    out: list[float] = []

    def push(w: float) -> None:
        w = float(w)
        if all(abs(w - v) > 1e-9 for v in out):
            out.append(w)

    for i in range(n - 1):
        if hs[i] == 0.0 and ws[i] > 0.0:
            push(ws[i])
        if hs[i] * hs[i + 1] < 0.0:
            push(_bisect_newton(h, ws[i], ws[i + 1], tol=1e-10))
    if hs[-1] == 0.0:
        push(ws[-1])
    # tangential grazes and an exact touch at omega_c: refine minima near zero
    near = 1e-4 * (1.0 + abs(a))
    for i in range(1, n - 1):
        if 0.0 < hs[i] < near and hs[i] <= hs[i - 1] and hs[i] <= hs[i + 1]:
            lo, hi = ws[i - 1], ws[i + 1]
            for _ in range(80):
                m1 = lo + (hi - lo) / 3.0
                m2 = hi - (hi - lo) / 3.0
                if h(m1) < h(m2):
                    hi = m2
                else:
                    lo = m1
            wm = 0.5 * (lo + hi)
            if h(wm) <= 1e-12:
                push(wm)
    if 0.0 < hs[-1] < near and hs[-1] <= 1e-12:
        push(ws[-1])
    return sorted(out)


def cs_sweep(a: float, d: DelayDistribution) -> SweepResult:
    """Sufficient stability test on the normalized problem (b = 1).

    Certifies stability when ``C(omega) = -a`` never happens on
    ``(0, omega_c]``, or when every crossing ``omega_s`` has
    ``S(omega_s) < omega_s``. The condition is sufficient only, so the
    other outcome is ``INCONCLUSIVE``, never "unstable".
    """
    for ws in cs_crossings(a, d):
        s = d.cs_moments(ws)[1]
        if not s < ws - 1e-9:
            return SweepResult.INCONCLUSIVE
    return SweepResult.CERTIFIED_STABLE


# ----------------------------------------------------------------------
# classifier
# ----------------------------------------------------------------------

def classify(problem: CharacteristicProblem, eps_stab: float = EPS_STAB) -> StabilityVerdict:
    """Stability verdict for the linear problem, cheapest sound route first.

    Rightmost roots with ``|Re| < eps_stab`` are reported as marginal
    (``stable=None``): a numerical root finder cannot certify the sign at
    the stability boundary.
    """
    a, b = problem.a, problem.b
    bound = hayes_bound(a, b)
    if bound is None:
        return StabilityVerdict(
            Region.DELAY_INDEPENDENT_UNSTABLE, DecidedBy.HAYES_AXIOMS, False,
            f"a <= -b: a real root >= 0 exists for every delay distribution (a={a:.6g}, b={b:.6g})",
        )
    if math.isinf(bound):
        return StabilityVerdict(
            Region.DELAY_INDEPENDENT_STABLE, DecidedBy.HAYES_AXIOMS, True,
            f"a >= |b| and a > -b: stable for every delay distribution (a={a:.6g}, b={b:.6g})",
            mean_bound=math.inf,
        )
    mean = problem.dist.mean()
    if mean < bound:
        return StabilityVerdict(
            Region.MEAN_BOUND_STABLE, DecidedBy.MEAN_BOUND, True,
            f"mean delay {mean:.6g} below critical mean {bound:.6g}",
            mean_bound=bound,
        )
    # distribution dependent: b > |a| here, so b > 0 and normalization is valid
    if b > 0:
        sweep = cs_sweep(a / b, problem.dist.scaled(b))
        if sweep is SweepResult.CERTIFIED_STABLE:
            return StabilityVerdict(
                Region.DISTRIBUTION_DEPENDENT, DecidedBy.CS_SWEEP, True,
                "every cosine-moment crossing has subcritical sine moment",
                mean_bound=bound,
            )
    report = rightmost_root(problem)
    re = report.rightmost_real
    if abs(re) < eps_stab:
        stable, word = None, "marginal"
    else:
        stable, word = re < 0.0, ("stable" if re < 0.0 else "unstable")
    return StabilityVerdict(
        Region.DISTRIBUTION_DEPENDENT, DecidedBy.RIGHTMOST_ROOT, stable,
        f"rightmost characteristic root {re:.6g} ({word})",
        mean_bound=bound,
    )


# ----------------------------------------------------------------------
# extremal two-delay construction
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ExtremalDistribution:
    """Worst-case two-delay density ``(1-p2) d(tau) + p2 d(tau - tau2)``.

    One atom sits at lag zero; among all two-atom densities with the same
    mean whose cosine moment equals ``-a`` at ``omega_s``, this one
    maximizes the sine moment.
    """

    p2_star: float
    tau2_star: float
    omega_s: float

    def to_delay_distribution(self) -> DelayDistribution:
        if self.p2_star >= 1.0 - 1e-15:
            return single_delay(self.tau2_star)
        return discrete([(1.0 - self.p2_star, 0.0), (self.p2_star, self.tau2_star)])

    def s_value(self) -> float:
        """Sine moment of the density at ``omega_s``."""
        return self.p2_star * math.sin(self.omega_s * self.tau2_star)


def extremal_f_star(a: float, mean: float, omega_s: float) -> ExtremalDistribution:
    """Zero-anchored two-delay density with mean ``mean`` and ``C(omega_s) = -a``.

    Solves ``cos(x) = 1 - (1+a)/(omega_s * mean) * x`` for the smallest
    positive ``x = omega_s * tau2``; the chord-slope feasibility condition
    ``c >= (1+a)/(omega_s * mean)`` must hold, otherwise no zero-anchored
    density can reach the crossing and :class:`FeasibilityError` is raised.
    """
    if not -1.0 < a < 1.0:
        raise ValueError("a must lie in (-1, 1)")
    omega_c = math.sqrt(1.0 - a * a)
    if not 0.0 < omega_s <= omega_c + 1e-12:
        raise ValueError(f"omega_s={omega_s!r} must lie in (0, sqrt(1-a^2)]")
    if not mean > 0.0:
        raise ValueError("mean must be positive")
    if not mean < math.acos(-a) / omega_c:
        raise ValueError(f"mean {mean!r} must be below the critical mean {math.acos(-a) / omega_c!r}")
    c, theta_c = constants_c_thetac()
    slope = (1.0 + a) / (omega_s * mean)
    if slope > c + 1e-12:
        raise FeasibilityError(
            f"no crossing possible: chord slope {slope:.6g} exceeds the tangency slope {c:.6g}"
        )
    slope = min(slope, c)
    fn = lambda x: math.cos(x) - 1.0 + slope * x
    dfn = lambda x: -math.sin(x) + slope
    # fn > 0 just right of zero and fn(theta_c) = theta_c*(slope - c) <= 0
    lo = 1e-8
    if fn(lo) <= 0.0:
        lo = 1e-12
    x = _bisect_newton(fn, lo, theta_c, dfn, tol=1e-10)
    tau2 = x / omega_s
    p2 = mean / tau2
    if not 0.0 < p2 <= 1.0 + 1e-12:
        raise FeasibilityError(f"constructed weight p2={p2!r} outside (0, 1]")
    return ExtremalDistribution(min(p2, 1.0), tau2, omega_s)


@dataclass(frozen=True)
class ChordSolution:
    """Chord intersection data for a two-delay density anchored at ``u``.

    ``v1`` is the smallest rescaled lag ``v > T`` with ``C(u, v) = -a``;
    ``s_value = S(u, v1)``. All intersections found in ``(T, pi]`` are kept
    for diagnostics (the non-minimal ones produce strictly smaller sine
    moments).
    """

    v1: float
    s_value: float
    v_roots: tuple[float, ...]


def chord_cs(u: float, v: float, t_mean: float) -> tuple[float, float]:
    """Cosine and sine moments of the two-atom density with rescaled lags u, v.

    Weights are fixed by the mean: ``p1 = (v - T)/(v - u)``,
    ``p2 = (T - u)/(v - u)`` with ``T = omega_s * mean``.
    """
    p1 = (v - t_mean) / (v - u)
    p2 = (t_mean - u) / (v - u)
    return (p1 * math.cos(u) + p2 * math.cos(v), p1 * math.sin(u) + p2 * math.sin(v))


def chord_density(u: float, v: float, t_mean: float, omega_s: float) -> DelayDistribution:
    """Two-atom density with rescaled lags ``u < T < v`` and mean ``T/omega_s``."""
    p1 = (v - t_mean) / (v - u)
    p2 = (t_mean - u) / (v - u)
    return discrete([(p1, u / omega_s), (p2, v / omega_s)])


def extremal_given_u(a: float, t_mean: float, u: float) -> ChordSolution:
    """Smallest ``v`` with ``C(u, v) = -a`` for a two-delay density anchored at ``u``.

    The constraint is the line-cosine intersection
    ``cos(v) = alpha(u) - beta(u) v`` with positive slope coefficient
    ``beta(u) = (a + cos u)/(T - u)``; a solution always lies in ``(T, pi]``
    when a crossing exists at all, so the scan is bracketed there.
    """
    _, theta_c = constants_c_thetac()
    if not 0.0 <= u < t_mean:
        raise ValueError("u must lie in [0, T)")
    if not t_mean < theta_c:
        raise ValueError(f"T={t_mean!r} must be below the tangency angle {theta_c!r}")
    if not math.cos(u) + a > 0.0:
        raise ValueError("construction requires cos(u) + a > 0")
    alpha_u = (a * u + t_mean * math.cos(u)) / (t_mean - u)
    beta_u = (a + math.cos(u)) / (t_mean - u)
    fn = lambda v: math.cos(v) - alpha_u + beta_u * v
    dfn = lambda v: -math.sin(v) + beta_u
    n = 4001
    roots: list[float] = []
    vs = [t_mean + (math.pi - t_mean) * i / (n - 1) for i in range(n)]
    fs = [fn(v) for v in vs]
    for i in range(n - 1):
        if fs[i] == 0.0 and vs[i] > t_mean:
            roots.append(vs[i])
        elif fs[i] * fs[i + 1] < 0.0:
            roots.append(_bisect_newton(fn, vs[i], vs[i + 1], dfn, tol=1e-10))
    if fs[-1] == 0.0:
        roots.append(math.pi)
    roots = sorted(set(round(r, 14) for r in roots))
    if not roots:
        raise FeasibilityError(f"no solution of C(u, v) = -a with v in ({t_mean}, pi]")
    v1 = roots[0]
    return ChordSolution(v1, chord_cs(u, v1, t_mean)[1], tuple(roots))
