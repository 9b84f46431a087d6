import numpy as np
import pytest

from mmflow import DoubleWell, SchemeParams, run

# t = 0 equilibrium of the loaded double well: real root of u^3 - u + 1
U0 = np.array([-1.324717957244746])
FOLD_T = 1.0 + 2.0 / (3.0 * np.sqrt(3.0))
U_MINUS = -1.0 / np.sqrt(3.0)
U_PLUS = 2.0 / np.sqrt(3.0)


@pytest.fixture(scope="session")
def double_well():
    return DoubleWell()


@pytest.fixture(scope="session")
def bv_pair(double_well):
    """Two coarse BV-regime runs, enough to exercise the limit machinery."""
    return [
        run(double_well, SchemeParams(epsilon=e, tau=e**1.5, u0=U0))
        for e in (1e-2, 3e-3)
    ]


@pytest.fixture(scope="session")
def lambda_pair(double_well):
    """Two coarse lambda = 1/2 runs."""
    return [
        run(double_well, SchemeParams(epsilon=e, tau=2 * e, u0=U0))
        for e in (3e-3, 1e-3)
    ]
