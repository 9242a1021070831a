"""Delay distributions with finite mean: discrete atom sets and Gamma mixtures.

A delay distribution assigns probability weight to nonnegative lags. Two
families are representable:

* :class:`DiscreteAtoms` -- a finite set of point masses ``sum p_i d(tau - tau_i)``.
* :class:`GammaMixture` -- a weighted average of integer-shape Gamma kernels.

Both have exponentially bounded tails, so every moment and transform used by
the stability machinery is finite. A :class:`DelayDistribution` wraps either
variant together with a nonnegative time-scale factor ``rho``; ``rho = 0``
collapses the distribution to a unit point mass at lag zero.

All values are immutable after construction and all operations are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

__all__ = [
    "DiscreteAtoms",
    "GammaKernel",
    "GammaMixture",
    "DelayDistribution",
    "PoleProximityError",
    "discrete",
    "gamma_mixture",
    "single_delay",
    "point_mass_zero",
    "gamma_density",
    "dist_from_json",
]

#: absolute tolerance on the weight sum after renormalization
WEIGHT_SUM_TOL = 1e-12
#: weight sums within this distance of 1 are silently renormalized
WEIGHT_RENORM_TOL = 1e-9


class PoleProximityError(ValueError):
    """Laplace-transform evaluation requested too close to a Gamma pole."""


def _normalize_weights(weights: Sequence[float], what: str) -> list[float]:
    total = math.fsum(weights)
    if not math.isfinite(total) or abs(total - 1.0) > WEIGHT_RENORM_TOL:
        raise ValueError(f"{what} weights sum to {total!r}, expected 1 within {WEIGHT_RENORM_TOL}")
    return [w / total for w in weights]


@dataclass(frozen=True)
class DiscreteAtoms:
    """Finite set of point masses ``(weight, delay)``.

    Atoms are canonicalized on construction: delays sorted ascending,
    duplicates merged by summing weights, weights renormalized to sum to 1.
    """

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.atoms:
            raise ValueError("at least one atom required")
        for w, tau in self.atoms:
            if not (w > 0.0 and math.isfinite(w)):
                raise ValueError(f"atom weight {w!r} must be positive and finite")
            if not (tau >= 0.0 and math.isfinite(tau)):
                raise ValueError(f"atom delay {tau!r} must be nonnegative and finite")
        merged: dict[float, float] = {}
        for w, tau in self.atoms:
            merged[tau] = merged.get(tau, 0.0) + w
        delays = sorted(merged)
        weights = _normalize_weights([merged[t] for t in delays], "atom")
        object.__setattr__(self, "atoms", tuple(zip(weights, delays)))

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.atoms])

    @property
    def delays(self) -> np.ndarray:
        return np.array([t for _, t in self.atoms])

    def mean(self) -> float:
        return math.fsum(w * t for w, t in self.atoms)


@dataclass(frozen=True)
class GammaKernel:
    """Gamma density with integer shape ``q`` and rate ``beta``.

    Mean is ``q/beta``, variance ``q/beta**2``. Integer shapes keep the
    reduction to a chain of first-order compartments exact.
    """

    q: int
    beta: float

    def __post_init__(self) -> None:
        if not (isinstance(self.q, (int, np.integer)) and self.q >= 1):
            raise ValueError(f"shape q={self.q!r} must be an integer >= 1")
        object.__setattr__(self, "q", int(self.q))
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise ValueError(f"rate beta={self.beta!r} must be positive and finite")

    def mean(self) -> float:
        return self.q / self.beta


@dataclass(frozen=True)
class GammaMixture:
    """Weighted average of Gamma kernels: ``sum p_i g(tau, q_i, beta_i)``."""

    components: tuple[tuple[float, GammaKernel], ...]

    def __post_init__(self) -> None:
        if not self.components:
            raise ValueError("at least one mixture component required")
        merged: dict[GammaKernel, float] = {}
        for w, k in self.components:
            if not (w > 0.0 and math.isfinite(w)):
                raise ValueError(f"component weight {w!r} must be positive and finite")
            if not isinstance(k, GammaKernel):
                raise TypeError("mixture components must carry GammaKernel kernels")
            merged[k] = merged.get(k, 0.0) + w
        kernels = sorted(merged, key=lambda k: (k.beta, k.q))
        weights = _normalize_weights([merged[k] for k in kernels], "mixture")
        object.__setattr__(self, "components", tuple(zip(weights, kernels)))

    def mean(self) -> float:
        return math.fsum(w * k.mean() for w, k in self.components)


Variant = Union[DiscreteAtoms, GammaMixture]


@dataclass(frozen=True)
class DelayDistribution:
    """A delay distribution: inner variant plus a time-scale factor.

    ``rho`` multiplies every lag, so the mean scales linearly with it;
    ``rho = 0`` is the unit step at zero (a single instantaneous delay)
    regardless of the inner variant.
    """

    inner: Variant
    rho: float = 1.0

    def __post_init__(self) -> None:
        if not isinstance(self.inner, (DiscreteAtoms, GammaMixture)):
            raise TypeError("inner must be DiscreteAtoms or GammaMixture")
        if not (self.rho >= 0.0 and math.isfinite(self.rho)):
            raise ValueError(f"scale rho={self.rho!r} must be >= 0 and finite")

    # ------------------------------------------------------------------
    # structure
    # ------------------------------------------------------------------
    @property
    def is_discrete(self) -> bool:
        return isinstance(self.inner, DiscreteAtoms)

    @property
    def is_mixture(self) -> bool:
        return isinstance(self.inner, GammaMixture)

    @property
    def is_point_mass_zero(self) -> bool:
        """True when the distribution is the unit mass at lag zero."""
        if self.rho == 0.0:
            return True
        return self.is_discrete and all(t == 0.0 for _, t in self.inner.atoms)

    def effective_atoms(self) -> list[tuple[float, float]]:
        """Point masses ``(weight, rho * delay)`` actually seen by the dynamics."""
        if self.rho == 0.0:
            return [(1.0, 0.0)]
        if not self.is_discrete:
            raise TypeError("effective_atoms is defined for discrete distributions only")
        return [(w, self.rho * t) for w, t in self.inner.atoms]

    def effective_kernels(self) -> list[tuple[float, int, float]]:
        """Mixture components ``(weight, q, beta / rho)`` in unscaled time."""
        if not self.is_mixture:
            raise TypeError("effective_kernels is defined for Gamma mixtures only")
        if self.rho == 0.0:
            raise ValueError("rho = 0 has no kernel representation (point mass at zero)")
        return [(w, k.q, k.beta / self.rho) for w, k in self.inner.components]

    def max_delay(self) -> float:
        """Largest lag carrying mass (discrete variants only)."""
        if self.rho == 0.0:
            return 0.0
        if not self.is_discrete:
            raise TypeError("max_delay is defined for discrete distributions only")
        return self.rho * self.inner.atoms[-1][1]

    # ------------------------------------------------------------------
    # moments and transforms
    # ------------------------------------------------------------------
    def mean(self) -> float:
        """Mean delay ``E = integral tau d eta(tau)``."""
        return self.rho * self.inner.mean()

    def laplace(self, lam):
        """Laplace transform ``integral exp(-lam*tau) d eta(tau)``.

        Accepts a complex scalar or a numpy array of complex values. For
        Gamma mixtures the closed form ``sum p (beta/(beta + rho*lam))**q``
        is a meromorphic continuation valid everywhere except the poles at
        ``lam = -beta/rho``; evaluation nearer than 1e-12 to a pole raises
        :class:`PoleProximityError`.
        """
        lam = np.asarray(lam, dtype=complex)
        scalar = lam.ndim == 0
        if self.rho == 0.0:
            out = np.ones_like(lam)
            return complex(out) if scalar else out
        if self.is_discrete:
            w = self.inner.weights
            t = self.rho * self.inner.delays
            out = np.exp(-np.multiply.outer(lam, t)) @ w
        else:
            out = np.zeros_like(lam)
            for w, k in self.inner.components:
                denom = k.beta + self.rho * lam
                if np.min(np.abs(denom)) < 1e-12:
                    raise PoleProximityError(
                        f"laplace evaluated within 1e-12 of pole at -beta/rho = {-k.beta / self.rho!r}"
                    )
                out = out + w * (k.beta / denom) ** k.q
        return complex(out) if scalar else out

    def laplace_deriv(self, lam):
        """Derivative of the Laplace transform with respect to ``lam``."""
        lam = np.asarray(lam, dtype=complex)
        scalar = lam.ndim == 0
        if self.rho == 0.0:
            out = np.zeros_like(lam)
            return complex(out) if scalar else out
        if self.is_discrete:
            w = self.inner.weights
            t = self.rho * self.inner.delays
            out = np.exp(-np.multiply.outer(lam, t)) @ (-t * w)
        else:
            out = np.zeros_like(lam)
            for w, k in self.inner.components:
                denom = k.beta + self.rho * lam
                if np.min(np.abs(denom)) < 1e-12:
                    raise PoleProximityError("laplace derivative evaluated too close to a pole")
                out = out - w * k.q * self.rho / denom * (k.beta / denom) ** k.q
        return complex(out) if scalar else out

    def cs_moments(self, omega: float) -> tuple[float, float]:
        """Cosine and sine moments ``(C, S)`` at angular frequency ``omega``.

        ``C(w) = integral cos(w tau) d eta`` and ``S(w) = integral sin(w tau) d eta``,
        i.e. the real part and negated imaginary part of ``laplace(i w)``.
        """
        val = self.laplace(1j * float(omega))
        return val.real, -val.imag

    def density(self, tau):
        """Mixture density value at ``tau`` (Gamma mixtures with rho > 0 only)."""
        kernels = self.effective_kernels()
        tau = np.asarray(tau, dtype=float)
        out = np.zeros_like(tau)
        for w, q, beta in kernels:
            out = out + w * gamma_density(q, beta, tau)
        return float(out) if out.ndim == 0 else out

    def scaled(self, rho: float) -> "DelayDistribution":
        """Distribution with every lag multiplied by ``rho`` (composable)."""
        if not (rho >= 0.0 and math.isfinite(rho)):
            raise ValueError(f"scale rho={rho!r} must be >= 0 and finite")
        return DelayDistribution(self.inner, self.rho * rho)

    # ------------------------------------------------------------------
    # serialization
    # ------------------------------------------------------------------
    def to_json(self) -> dict:
        """JSON-ready dict. Discrete variants fold ``rho`` into the delays."""
        if self.is_discrete or self.rho == 0.0:
            return {"type": "discrete", "atoms": [[w, t] for w, t in self.effective_atoms()]}
        return {
            "type": "gamma_mixture",
            "components": [[w, k.q, k.beta] for w, k in self.inner.components],
            "scale": self.rho,
        }


def discrete(atoms: Iterable[tuple[float, float]], rho: float = 1.0) -> DelayDistribution:
    """Build a discrete distribution from ``(weight, delay)`` pairs."""
    return DelayDistribution(DiscreteAtoms(tuple((float(w), float(t)) for w, t in atoms)), rho)


def gamma_mixture(components: Iterable[tuple[float, int, float]], rho: float = 1.0) -> DelayDistribution:
    """Build a Gamma mixture from ``(weight, shape, rate)`` triples."""
    comps = tuple((float(w), GammaKernel(int(q), float(beta))) for w, q, beta in components)
    return DelayDistribution(GammaMixture(comps), rho)


def single_delay(tau: float) -> DelayDistribution:
    """The unit point mass at lag ``tau``."""
    return discrete([(1.0, float(tau))])


def point_mass_zero() -> DelayDistribution:
    """The unit point mass at lag zero (``rho = 0``)."""
    return DelayDistribution(DiscreteAtoms(((1.0, 0.0),)), 0.0)


def gamma_density(q: int, beta: float, tau):
    """Gamma density ``beta**q / Gamma(q) * tau**(q-1) * exp(-beta*tau)``.

    ``q`` must be an integer >= 1 and ``beta > 0``; ``tau`` may be a scalar
    or array of nonnegative values. Evaluated in log space to stay finite
    for large shapes.
    """
    q = int(q)
    if q < 1:
        raise ValueError("shape q must be >= 1")
    if not beta > 0.0:
        raise ValueError("rate beta must be positive")
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0.0):
        raise ValueError("tau must be nonnegative")
    out = np.zeros_like(tau)
    pos = tau > 0.0
    logpdf = q * math.log(beta) - math.lgamma(q) + (q - 1) * np.log(tau, where=pos, out=np.zeros_like(tau)) - beta * tau
    np.exp(logpdf, where=pos, out=out)
    if q == 1:
        out = np.where(tau == 0.0, beta, out)
    return float(out) if out.ndim == 0 else out


def dist_from_json(obj: dict) -> DelayDistribution:
    """Parse the canonical JSON form produced by :meth:`DelayDistribution.to_json`."""
    if not isinstance(obj, dict) or "type" not in obj:
        raise ValueError("distribution JSON must be an object with a 'type' field")
    kind = obj["type"]
    if kind == "discrete":
        atoms = obj.get("atoms")
        if not atoms:
            raise ValueError("discrete distribution needs a nonempty 'atoms' list")
        rho = float(obj.get("scale", 1.0))
        return discrete([(float(p), float(t)) for p, t in atoms], rho)
    if kind == "gamma_mixture":
        comps = obj.get("components")
        if not comps:
            raise ValueError("gamma_mixture distribution needs a nonempty 'components' list")
        rho = float(obj.get("scale", 1.0))
        return gamma_mixture([(float(p), int(q), float(b)) for p, q, b in comps], rho)
    raise ValueError(f"unknown distribution type {kind!r}")
