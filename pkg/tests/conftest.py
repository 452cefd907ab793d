import pytest

from kineticflow import covariance, modes


@pytest.fixture(scope="session")
def table_k2():
    return modes.enumerate_modes(2)


@pytest.fixture(scope="session")
def table_k3():
    return modes.enumerate_modes(3)


@pytest.fixture(scope="session")
def gamma_k3(table_k3):
    return modes.christoffel_tensor(modes.structure_constants(table_k3))


@pytest.fixture(scope="session")
def iso4():
    return covariance.isotropic_spectrum(4)


@pytest.fixture(scope="session")
def torus_k1_spec():
    return covariance.sobolev_spectrum(modes.enumerate_modes(1), a=1.0)
