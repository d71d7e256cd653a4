from typing import Callable

import numpy as np
import pytest

from app.solver.models import IsospectralPair
from app.solver.states import density_from_matrix, isospectral_pair

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@pytest.fixture
def paulis() -> dict:
    return {"I": PAULI_I, "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}


@pytest.fixture
def qubit_pair() -> Callable[[float], IsospectralPair]:
    """rho = (I + pX)/2 and sigma = (I + pY)/2."""

    def make(p: float = 1.0) -> IsospectralPair:
        rho = density_from_matrix((PAULI_I + p * PAULI_X) / 2)
        sigma = density_from_matrix((PAULI_I + p * PAULI_Y) / 2)
        return isospectral_pair(rho, sigma)

    return make


@pytest.fixture
def phi_z() -> np.ndarray:
    """Initial phases whose generator is π/4·Z, the time-optimal one."""
    return np.array([np.pi / 4, np.pi / 4])


@pytest.fixture
def phi_xy() -> np.ndarray:
    """Initial phases whose generator has traceless part (X + Y)·√2π/4."""
    return np.array([np.pi / 4, -3 * np.pi / 4])
