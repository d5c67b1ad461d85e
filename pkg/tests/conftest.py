import math

import numpy as np
import pytest

from ptmarkov import (
    build_process_tensor,
    ic_basis,
    model_b1,
    model_b2,
    model_b3,
    model_markov,
)
from ptmarkov.random_ops import random_cptp

from oracles import P0, PP


@pytest.fixture(scope="session")
def basis2():
    return ic_basis(2)


@pytest.fixture(scope="session")
def b1_model():
    return model_b1(gamma=1.0, g=1.0)


@pytest.fixture(scope="session")
def b1_pt(b1_model, basis2):
    """B.1 tensor on a gamma*g*dt = 1 two-step grid."""
    return build_process_tensor(b1_model, (0.0, 1.0, 2.0), basis2)


@pytest.fixture(scope="session")
def b2_model():
    return model_b2(omega=1.0)


@pytest.fixture(scope="session")
def b2_pt(b2_model, basis2):
    """B.2 tensor with omega*dt = pi/4 steps."""
    theta = math.pi / 4
    return build_process_tensor(b2_model, (0.0, theta, 2 * theta), basis2)


@pytest.fixture(scope="session")
def b3_states():
    return PP.copy(), P0.copy()


@pytest.fixture(scope="session")
def b3_model(b3_states):
    rho_s, rho_e = b3_states
    return model_b3(rho_s, rho_e)


@pytest.fixture(scope="session")
def b3_pt(b3_model, basis2):
    return build_process_tensor(b3_model, (0.0, 1.0, 2.0), basis2)


@pytest.fixture(scope="session")
def markov_maps():
    rng = np.random.default_rng(11)
    return [random_cptp(2, rng) for _ in range(3)]


@pytest.fixture(scope="session")
def markov_pt2(markov_maps, basis2):
    model = model_markov(markov_maps[:2], np.eye(2) / 2)
    return build_process_tensor(model, (0.0, 1.0, 2.0), basis2)


@pytest.fixture(scope="session")
def markov_pt3(markov_maps, basis2):
    rng = np.random.default_rng(12)
    rho0 = None
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho0 = a @ a.conj().T
    rho0 /= np.trace(rho0).real
    model = model_markov(markov_maps, rho0)
    return build_process_tensor(model, (0.0, 1.0, 2.0, 3.0), basis2)
