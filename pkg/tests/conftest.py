import numpy as np
import pytest

from centroflow.sphere import build_grid


@pytest.fixture(scope="session")
def circle():
    return build_grid(1, 256)


@pytest.fixture(scope="session")
def circle_fine():
    return build_grid(1, 360)


@pytest.fixture(scope="session")
def sphere():
    return build_grid(2, (32, 64))


@pytest.fixture(scope="session")
def sphere_coarse():
    return build_grid(2, (16, 32))


def random_special_linear(dim, cond_max, rng):
    """Random A with det 1 and condition number at most cond_max."""
    while True:
        u, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        v, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        sv = np.exp(rng.uniform(-0.5 * np.log(cond_max),
                                0.5 * np.log(cond_max), size=dim))
        sv /= np.prod(sv) ** (1.0 / dim)
        if sv.max() / sv.min() <= cond_max:
            a = u @ np.diag(sv) @ v.T
            if np.linalg.det(a) < 0:
                a[:, 0] *= -1
            return a
