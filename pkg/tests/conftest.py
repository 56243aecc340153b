import numpy as np
import pytest

from voikit import LinearGaussianSpec, PsaSample, generate_psa


@pytest.fixture(scope="session")
def lin_spec():
    return LinearGaussianSpec()


@pytest.fixture(scope="session")
def lin_sample(lin_spec):
    """Reference linear-Gaussian sample, S=10^4, shared across tests."""
    return generate_psa(lin_spec, 10_000, seed=1)


def make_sample(nb, phi=None, seed=0):
    """Small helper: wrap an nb matrix (and optional parameter column) in a
    PsaSample with a generated parameter matrix."""
    nb = np.asarray(nb, dtype=float)
    n = nb.shape[0]
    if phi is None:
        phi = np.random.default_rng(seed).standard_normal(n)
    return PsaSample(param_names=("x",), params=np.asarray(phi, float)[:, None], nb=nb)
