"""Characteristic roots of ``x' = -a x - b * (delayed average of x)``.

The characteristic function is ``D(lam) = lam + a + b * L(lam)`` where ``L``
is the Laplace transform of the delay distribution. Asymptotic stability is
equivalent to every root of ``D`` having negative real part, so the central
operation here is locating the rightmost root.

Three routes are used, depending on the distribution:

* point mass at zero (or ``b = 0``): the single root is explicit;
* Gamma mixtures: exact reduction to a real polynomial (the chain
  determinant), rooted through the companion matrix and polished against
  the rational form of ``D``;
* discrete atoms: ``D`` is a quasi-polynomial with infinitely many roots.
  A rectangle in the complex plane is scanned by argument-principle winding
  counts with recursive subdivision, and every counted root is pinned down
  by Newton iteration. The returned report certifies that the scanned box
  contains exactly the roots listed.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .distributions import DelayDistribution

__all__ = [
    "CharacteristicProblem",
    "RootReport",
    "RootMethod",
    "RootSearchError",
    "lambert_w0",
    "polynomial_roots",
    "chain_polynomial",
    "rightmost_root_discrete",
    "rightmost_root",
]

#: roots with |real part| below this are reported as marginal by callers
EPS_STAB = 1e-7

#: residual bound for certified roots, measured as |D(lam)| / max(1, |b|)
ROOT_RESIDUAL_TOL = 1e-8


class RootSearchError(RuntimeError):
    """Root search failed to converge or to certify its count."""


class _ContourNearRoot(Exception):
    """Internal: the winding contour passed too close to a root."""


class RootMethod(str, Enum):
    POLYNOMIAL = "polynomial"
    QUASI_ARGUMENT_PRINCIPLE = "quasi_argument_principle"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class CharacteristicProblem:
    """Coefficients and delay distribution of the linear delay equation."""

    a: float
    b: float
    dist: DelayDistribution

    def __post_init__(self) -> None:
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError("coefficients a, b must be finite")
        if not isinstance(self.dist, DelayDistribution):
            raise TypeError("dist must be a DelayDistribution")

    def char_eval(self, lam):
        """``D(lam) = lam + a + b * L(lam)`` for scalar or array ``lam``."""
        return lam + self.a + self.b * self.dist.laplace(lam)

    def char_deriv(self, lam):
        """``D'(lam)`` for scalar or array ``lam``."""
        return 1.0 + self.b * self.dist.laplace_deriv(lam)

    def residual_scale(self) -> float:
        """Normalization for residuals: rescales the problem to |b| <= 1."""
        return max(1.0, abs(self.b))


@dataclass(frozen=True)
class RootReport:
    """Certified characteristic roots inside a rectangular search box."""

    roots: tuple[tuple[complex, float], ...]
    rightmost_real: float
    method: RootMethod
    search_box: tuple[tuple[float, float], tuple[float, float]]

    def to_json(self) -> dict:
        return {
            "roots": [[lam.real, lam.imag, res] for lam, res in self.roots],
            "rightmost_real": self.rightmost_real,
            "method": self.method.value,
            "search_box": [list(self.search_box[0]), list(self.search_box[1])],
        }


def report_from_json(obj: dict) -> RootReport:
    roots = tuple((complex(re, im), float(res)) for re, im, res in obj["roots"])
    box = (tuple(obj["search_box"][0]), tuple(obj["search_box"][1]))
    return RootReport(roots, float(obj["rightmost_real"]), RootMethod(obj["method"]), box)


# ----------------------------------------------------------------------
# Lambert W, principal branch
# ----------------------------------------------------------------------

def lambert_w0(z) -> complex:
    """Principal branch of the Lambert W function, ``w * exp(w) = z``.

    Halley iteration from a branch-point series or logarithmic seed. Used
    only to seed Newton refinement of single-delay characteristic roots.
    """
    z = complex(z)
    if z == 0:
        return 0j
    p = cmath.sqrt(2.0 * (math.e * z + 1.0))
    if abs(p) < 1.4:
        # series around the branch point z = -1/e
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    elif abs(z) < 1.0:
        w = z * (1.0 - z + 1.5 * z * z)
    else:
        w = cmath.log(z)
        w = w - cmath.log(w)
    for _ in range(80):
        ew = cmath.exp(w)
        f = w * ew - z
        wp1 = w + 1.0
        if abs(wp1) < 1e-300:
            w += 1e-8
            continue
        dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= dw
        if abs(dw) <= 1e-15 * (1.0 + abs(w)):
            break
    return w


# ----------------------------------------------------------------------
# polynomial route (Gamma mixtures)
# ----------------------------------------------------------------------

#: largest chain polynomial degree accepted (total shape budget ~ 255)
MAX_CHAIN_DEGREE = 256


def chain_polynomial(problem: CharacteristicProblem) -> np.ndarray:
    """Real polynomial whose roots are the characteristic roots (mixtures).

    Clearing the rational Laplace transform of a Gamma mixture against its
    poles turns ``D(lam) = 0`` into ``(lam + a) * prod (lam + beta_i)^q_i +
    b * sum_i p_i beta_i^q_i * prod_{j != i} (lam + beta_j)^q_j = 0``.
    Components sharing a rate are grouped first so no spurious root appears
    at a pole. Coefficients are returned in descending order with leading
    coefficient 1.
    """
    d = problem.dist
    if not d.is_mixture:
        raise TypeError("chain_polynomial requires a Gamma mixture distribution")
    if d.rho == 0.0:
        raise ValueError("rho = 0 has an explicit root; no chain polynomial")
    kernels = d.effective_kernels()

    groups: dict[float, list[tuple[float, int]]] = {}
    for w, q, beta in kernels:
        groups.setdefault(beta, []).append((w, q))
    betas = sorted(groups)
    degree = 1 + sum(max(q for _, q in groups[beta]) for beta in betas)
    if degree > MAX_CHAIN_DEGREE:
        raise ValueError(f"chain polynomial degree {degree} exceeds cap {MAX_CHAIN_DEGREE}")

    def linpow(beta: float, n: int) -> np.ndarray:
        # (lam + beta)^n, descending coefficients
        out = np.array([1.0])
        for _ in range(n):
            out = np.polymul(out, [1.0, beta])
        return out

    denoms = []
    numers = []
    for beta in betas:
        comps = groups[beta]
        q_max = max(q for _, q in comps)
        denoms.append(linpow(beta, q_max))
        num = np.array([0.0])
        for w, q in comps:
            num = np.polyadd(num, w * beta ** q * linpow(beta, q_max - q))
        numers.append(num)

    prod_all = np.array([1.0])
    for den in denoms:
        prod_all = np.polymul(prod_all, den)
    poly = np.polymul([1.0, problem.a], prod_all)
    for i, num in enumerate(numers):
        rest = np.array([1.0])
        for j, den in enumerate(denoms):
            if j != i:
                rest = np.polymul(rest, den)
        poly = np.polyadd(poly, problem.b * np.polymul(num, rest))
    return poly


def polynomial_roots(coeffs) -> np.ndarray:
    """All complex roots of a polynomial given by descending coefficients.

    Companion-matrix eigenvalues (after scaling by the largest coefficient
    magnitude) followed by Newton polish. Every returned root satisfies
    ``|p(root)| / (1 + |root|**deg) < 1e-9`` on the scaled polynomial.
    """
    c = np.atleast_1d(np.asarray(coeffs, dtype=float))
    nz = np.nonzero(c)[0]
    if nz.size == 0:
        raise ValueError("degenerate polynomial: all coefficients zero")
    c = c[nz[0]:]
    if c.size < 2:
        raise ValueError("polynomial degree must be >= 1")
    c = c / np.max(np.abs(c))
    deg = c.size - 1
    roots = np.roots(c)

    # damped Newton polish: only accept steps that reduce |p|
    dc = c[:-1] * np.arange(deg, 0, -1)
    for _ in range(4):
        pv = np.polyval(c, roots)
        dv = np.polyval(dc, roots)
        step = np.where(np.abs(dv) > 1e-300, pv / np.where(dv == 0, 1.0, dv), 0.0)
        cand = roots - step
        better = np.abs(np.polyval(c, cand)) <= np.abs(pv)
        roots = np.where(better, cand, roots)

    resid = np.abs(np.polyval(c, roots)) / (1.0 + np.abs(roots) ** deg)
    if np.max(resid) >= 1e-9:
        raise RootSearchError(f"polynomial root residual {np.max(resid):.3e} exceeds 1e-9")
    return roots[np.argsort(-roots.real)]


def chain_matrix(problem: CharacteristicProblem) -> np.ndarray:
    """State matrix of the equivalent linear chain ODE system (mixtures).

    A Gamma kernel of shape ``q`` and rate ``beta`` is realized exactly by a
    cascade of ``q`` first-order compartments; the matrix eigenvalues are the
    characteristic roots. This is the companion form actually used for
    rooting: it is far better conditioned than the expanded coefficient
    polynomial for long chains.
    """
    kernels = problem.dist.effective_kernels()
    n = 1 + sum(q for _, q, _ in kernels)
    m = np.zeros((n, n))
    m[0, 0] = -problem.a
    idx = 1
    for w, q, beta in kernels:
        m[idx, 0] = beta
        m[idx, idx] = -beta
        for j in range(1, q):
            m[idx + j, idx + j - 1] = beta
            m[idx + j, idx + j] = -beta
        m[0, idx + q - 1] += -problem.b * w
        idx += q
    return m


def _mixture_report(problem: CharacteristicProblem, box_height: float | None = None) -> RootReport:
    """Root report for Gamma mixtures.

    Chain-matrix eigenvalues provide root candidates; only those whose
    characteristic residual passes the certification gate are listed (for
    long chains the deep-left part of the spectrum is intrinsically beyond
    double-precision resolution and is dropped). A pole-free slab that
    contains every root with real part >= -min(beta)/2, and hence every
    candidate unstable root, is then certified by argument-principle
    winding counts seeded with the retained candidates.
    """
    scale = problem.residual_scale()
    roots = np.linalg.eigvals(chain_matrix(problem)).astype(complex)

    # damped polish against the rational characteristic function
    for _ in range(8):
        fv = problem.char_eval(roots)
        dv = problem.char_deriv(roots)
        step = np.where(np.abs(dv) > 1e-300, fv / np.where(dv == 0, 1.0, dv), 0.0)
        cand = roots - step
        better = np.abs(problem.char_eval(cand)) <= np.abs(fv)
        roots = np.where(better, cand, roots)
    resid = np.abs(problem.char_eval(roots)) / scale
    keep = roots[resid < ROOT_RESIDUAL_TOL]

    beta_min = min(beta for _, _, beta in problem.dist.effective_kernels())
    radius = abs(problem.a) + abs(problem.b)
    height = box_height if box_height is not None else radius + 1.0
    box = (-0.5 * beta_min, radius + 0.5, -height, height)

    def f(lam):
        return problem.char_eval(np.asarray(lam, dtype=complex))

    def fp(lam):
        return problem.char_deriv(np.asarray(lam, dtype=complex))

    def inside(lam: complex) -> bool:
        return box[0] < lam.real < box[1] and box[2] < lam.imag < box[3]

    hints = [complex(lam) for lam in keep if inside(lam)]
    certified = _collect_roots(f, fp, box, 1e-9 * max(1.0, radius), max(1.0, radius), hints, depth=60)
    merged = list(certified)
    for lam in keep:
        if all(abs(lam - r) > 1e-7 * (1.0 + abs(lam)) for r in merged):
            merged.append(complex(lam))
    merged = _symmetrize(merged, max(1.0, radius))
    if not merged:
        raise RootSearchError("no characteristic root could be certified for the mixture")

    pairs = []
    for lam in sorted(merged, key=lambda z: (-z.real, abs(z.imag), z.imag)):
        res = abs(complex(problem.char_eval(lam))) / scale
        if res >= ROOT_RESIDUAL_TOL:
            raise RootSearchError(f"root {lam} has residual {res:.3e} above {ROOT_RESIDUAL_TOL}")
        pairs.append((lam, res))
    rightmost = max(lam.real for lam, _ in pairs)
    report_box = ((box[0], box[1]), (box[2], box[3]))
    return RootReport(tuple(pairs), rightmost, RootMethod.POLYNOMIAL, report_box)


# ----------------------------------------------------------------------
# argument-principle route (discrete atoms)
# ----------------------------------------------------------------------

def _edge_arg_change(f, z0: complex, z1: complex, small: float) -> float:
    """Total change of arg f along the segment z0 -> z1.

    Adaptive refinement keeps successive phase increments below pi/2 so the
    unwrapped total is unambiguous. Raises ``_ContourNearRoot`` when |f|
    drops below ``small`` at a sample point.
    """
    ts = np.linspace(0.0, 1.0, 17)
    vals = f(z0 + (z1 - z0) * ts)
    for _ in range(40):
        if not np.all(np.isfinite(vals)):
            raise RootSearchError("characteristic function overflowed on the contour")
        if np.min(np.abs(vals)) < small:
            raise _ContourNearRoot
        dphi = np.angle(vals[1:] / vals[:-1])
        bad = np.abs(dphi) > 0.5 * math.pi
        if not bad.any():
            return float(np.sum(dphi))
        if ts.size > 200_000:
            break
        mid = 0.5 * (ts[:-1][bad] + ts[1:][bad])
        idx = np.nonzero(bad)[0] + 1
        ts = np.insert(ts, idx, mid)
        vals = np.insert(vals, idx, f(z0 + (z1 - z0) * mid))
    raise RootSearchError("contour phase tracking did not converge")


def _winding_number(f, box: tuple[float, float, float, float], small: float) -> int:
    re_lo, re_hi, im_lo, im_hi = box
    corners = [
        complex(re_lo, im_lo),
        complex(re_hi, im_lo),
        complex(re_hi, im_hi),
        complex(re_lo, im_hi),
        complex(re_lo, im_lo),
    ]
    total = 0.0
    for z0, z1 in zip(corners[:-1], corners[1:]):
        total += _edge_arg_change(f, z0, z1, small)
    w = total / (2.0 * math.pi)
    n = round(w)
    if abs(w - n) > 0.25:
        raise RootSearchError(f"winding number {w:.3f} not close to an integer")
    return n


def _winding_retry(f, box, small, scale):
    """Winding count with small contour perturbations when a root sits on it."""
    re_lo, re_hi, im_lo, im_hi = box
    eps = 1e-7 * scale
    for k in range(6):
        try:
            return _winding_number(f, (re_lo, re_hi, im_lo, im_hi), small), (re_lo, re_hi, im_lo, im_hi)
        except _ContourNearRoot:
            # grow the box slightly; keeps every previously counted root inside
            re_lo -= eps
            re_hi += eps
            im_lo -= eps
            im_hi += eps
            eps *= 3.7
    raise RootSearchError("contour repeatedly passed through a root")


def _newton(f, fp, seed: complex, small_resid: float) -> complex | None:
    def feval(z: complex) -> complex:
        with np.errstate(over="ignore", invalid="ignore"):
            val = complex(f(np.array([z]))[0])
        return val

    lam = seed
    flam = feval(lam)
    if not cmath.isfinite(flam):
        return None
    for _ in range(60):
        with np.errstate(over="ignore", invalid="ignore"):
            dlam = complex(fp(np.array([lam]))[0])
        if not cmath.isfinite(dlam) or abs(dlam) < 1e-300:
            lam += 1e-9 * (1 + abs(lam))
            flam = feval(lam)
            continue
        step = flam / dlam
        cand = lam - step
        fcand = feval(cand)
        shrink = 0
        while (not cmath.isfinite(fcand) or abs(fcand) > abs(flam)) and shrink < 12:
            step *= 0.5
            cand = lam - step
            fcand = feval(cand)
            shrink += 1
        if shrink == 12 and (not cmath.isfinite(fcand) or abs(fcand) > abs(flam)):
            break
        lam, flam = cand, fcand
        if abs(flam) < small_resid and abs(step) < 1e-9 * (1.0 + abs(lam)):
            return lam
    return lam if abs(flam) < small_resid else None


def _collect_roots(f, fp, box, small, scale, hints, depth) -> list[complex]:
    count, box = _winding_retry(f, box, small, scale)
    if count == 0:
        return []
    re_lo, re_hi, im_lo, im_hi = box
    width, height = re_hi - re_lo, im_hi - im_lo

    def inside(lam: complex) -> bool:
        return re_lo < lam.real < re_hi and im_lo < lam.imag < im_hi

    if count <= 4 or max(width, height) < 1e-5 * scale:
        seeds = [h for h in hints if inside(h)]
        seeds.append(complex(0.5 * (re_lo + re_hi), 0.5 * (im_lo + im_hi)))
        if count > 1 or seeds == []:
            for fx in (0.25, 0.5, 0.75):
                for fy in (0.25, 0.5, 0.75):
                    seeds.append(complex(re_lo + fx * width, im_lo + fy * height))
        found: list[complex] = []
        for seed in seeds:
            lam = _newton(f, fp, seed, small_resid=1e-10 * scale)
            if lam is None or not inside(lam):
                continue
            if all(abs(lam - r) > 1e-7 * (1.0 + abs(lam)) for r in found):
                found.append(lam)
            if len(found) == count:
                return found

    if depth <= 0 or max(width, height) < 1e-9 * scale:
        raise RootSearchError(
            f"subdivision exhausted: box {box} holds {count} roots that Newton could not separate"
        )
    # split the longer side; nudge the cut if it lands on a root
    for frac in (0.5, 0.53, 0.47, 0.59):
        if width >= height:
            cut = re_lo + frac * width
            sub1 = (re_lo, cut, im_lo, im_hi)
            sub2 = (cut, re_hi, im_lo, im_hi)
        else:
            cut = im_lo + frac * height
            sub1 = (re_lo, re_hi, im_lo, cut)
            sub2 = (re_lo, re_hi, cut, im_hi)
        try:
            r1 = _collect_roots(f, fp, sub1, small, scale, hints, depth - 1)
            r2 = _collect_roots(f, fp, sub2, small, scale, hints, depth - 1)
        except _ContourNearRoot:
            continue
        merged = list(r1)
        for lam in r2:
            if all(abs(lam - r) > 1e-7 * (1.0 + abs(lam)) for r in merged):
                merged.append(lam)
        if len(merged) == count:
            return merged
    raise RootSearchError(f"could not certify {count} roots in box {box}")


def _symmetrize(roots: list[complex], scale: float) -> list[complex]:
    """Pair conjugate roots exactly; keep near-real roots on the axis."""
    out: list[complex] = []
    used = [False] * len(roots)
    tol = 1e-6 * scale
    for i, lam in enumerate(roots):
        if used[i]:
            continue
        used[i] = True
        if abs(lam.imag) <= tol:
            out.append(complex(lam.real, 0.0))
            continue
        mate = None
        for j in range(i + 1, len(roots)):
            if not used[j] and abs(roots[j] - lam.conjugate()) <= 1e-5 * (1.0 + abs(lam)):
                mate = j
                break
        if mate is not None:
            used[mate] = True
            re = 0.5 * (lam.real + roots[mate].real)
            im = 0.5 * (abs(lam.imag) + abs(roots[mate].imag))
        else:
            re, im = lam.real, abs(lam.imag)
        out.append(complex(re, im))
        out.append(complex(re, -im))
    return out


def rightmost_root_discrete(problem: CharacteristicProblem, box_height: float | None = None) -> RootReport:
    """Rightmost characteristic root for a discrete delay distribution.

    Every root with nonnegative real part satisfies ``|lam| <= |a| + |b|``,
    so the search box ``[-10(|a|+|b|+1), |a|+|b|+0.5] x [-H, H]`` with
    ``H = box_height`` (default ``|a|+|b|+1``) certifiably contains all
    unstable roots. The box is subdivided by argument-principle winding
    counts until each root is isolated and Newton-refined; for a single
    positive delay the explicit Lambert-W form seeds the iteration.
    """
    if not problem.dist.is_discrete and problem.dist.rho != 0.0:
        raise TypeError("rightmost_root_discrete requires a discrete distribution")
    atoms = problem.dist.effective_atoms()
    a_eff = problem.a + problem.b * sum(w for w, t in atoms if t == 0.0)
    delayed = [(w, t) for w, t in atoms if t > 0.0]
    if not delayed or problem.b == 0.0:
        raise ValueError("no delayed term: the rightmost root is explicit")

    w_arr = np.array([w for w, _ in delayed])
    t_arr = np.array([t for _, t in delayed])
    b = problem.b

    def f(lam):
        return lam + a_eff + b * (np.exp(-np.multiply.outer(lam, t_arr)) @ w_arr)

    def fp(lam):
        return 1.0 + b * (np.exp(-np.multiply.outer(lam, t_arr)) @ (-t_arr * w_arr))

    radius = abs(problem.a) + abs(problem.b)
    height = box_height if box_height is not None else radius + 1.0
    # cap the left edge so exp(-Re*tau) stays finite on the contour
    left = min(10.0 * (radius + 1.0), 600.0 / float(np.max(t_arr)))
    box = (-left, radius + 0.5, -height, height)
    scale = max(1.0, radius)
    small = 1e-9 * scale

    hints: list[complex] = []
    if len(delayed) == 1:
        w0, tau = delayed[0]
        x = -b * w0 * tau * math.exp(a_eff * tau)
        hints.append(-a_eff + lambert_w0(x) / tau)

    roots = _collect_roots(f, fp, box, small, scale, hints, depth=60)
    if not roots:
        raise RootSearchError("no characteristic root found inside the search box")
    roots = _symmetrize(roots, scale)

    resid_scale = problem.residual_scale()
    pairs = []
    for lam in sorted(roots, key=lambda z: (-z.real, abs(z.imag), z.imag)):
        res = abs(complex(f(np.array([lam]))[0])) / resid_scale
        if res >= ROOT_RESIDUAL_TOL:
            raise RootSearchError(f"root {lam} has residual {res:.3e} above {ROOT_RESIDUAL_TOL}")
        pairs.append((lam, res))
    rightmost = max(lam.real for lam, _ in pairs)
    report_box = ((box[0], box[1]), (box[2], box[3]))
    return RootReport(tuple(pairs), rightmost, RootMethod.QUASI_ARGUMENT_PRINCIPLE, report_box)


def rightmost_root(problem: CharacteristicProblem, box_height: float | None = None) -> RootReport:
    """Rightmost characteristic root, dispatching on the distribution family."""
    d = problem.dist
    if problem.b == 0.0 or d.is_point_mass_zero:
        lam = complex(-(problem.a + problem.b)) if d.is_point_mass_zero and problem.b != 0.0 else complex(-problem.a)
        box = ((lam.real - 1.0, lam.real + 1.0), (-1.0, 1.0))
        return RootReport(((lam, 0.0),), lam.real, RootMethod.EXPLICIT, box)
    if d.is_discrete:
        return rightmost_root_discrete(problem, box_height)
    return _mixture_report(problem, box_height)
