import numpy as np
import pytest

from delaystab import HematoModel, discrete, gamma_mixture


@pytest.fixture
def fig1_atoms():
    """Two-atom density with mean 1.2 used throughout the worked examples."""
    return discrete([(0.8, 0.625), (0.2, 3.5)])


@pytest.fixture
def fig3_mixture():
    """Three-lineage Gamma mixture with mean delay 2."""
    return gamma_mixture([(0.3, 2, 2.0), (0.4, 20, 10.0), (0.3, 60, 20.0)])


@pytest.fixture
def fig3_model():
    return HematoModel(1.0, 2.0, 1.0, 1.9, ((0.3, 2, 2.0), (0.4, 20, 10.0), (0.3, 60, 20.0)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240803)


def random_discrete(rng, mean=None, n_max=5, tau_hi=4.0):
    """Random atom set, optionally rescaled to a prescribed mean."""
    n = int(rng.integers(1, n_max + 1))
    raw = rng.uniform(0.05, 1.0, n)
    weights = raw / raw.sum()
    delays = np.sort(rng.uniform(0.0, tau_hi, n))
    if mean is not None:
        current = float(weights @ delays)
        while current <= 0.0:
            delays = np.sort(rng.uniform(0.1, tau_hi, n))
            current = float(weights @ delays)
        delays = delays * (mean / current)
    return discrete([(float(w), float(t)) for w, t in zip(weights, delays)])


def random_mixture(rng, n_max=3, q_hi=10, beta_lo=0.3, beta_hi=4.0):
    n = int(rng.integers(1, n_max + 1))
    raw = rng.uniform(0.1, 1.0, n)
    weights = raw / raw.sum()
    comps = [(float(w), int(rng.integers(1, q_hi + 1)), float(rng.uniform(beta_lo, beta_hi)))
             for w in weights]
    return gamma_mixture(comps)
