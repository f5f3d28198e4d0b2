import numpy as np
import pytest

from blendforge import cotangent_laplacian, lbo_eigenpairs
from blendforge import synthetic


@pytest.fixture(scope="session")
def tetra():
    return synthetic.tetrahedron()


@pytest.fixture(scope="session")
def icosa():
    return synthetic.icosahedron()


@pytest.fixture(scope="session")
def sphere():
    return synthetic.icosphere(2)  # n = 162


@pytest.fixture(scope="session")
def sphere_fine():
    return synthetic.icosphere(3)  # n = 642


@pytest.fixture(scope="session")
def cross_gen():
    return synthetic.CrossSheet()


@pytest.fixture(scope="session")
def cross_lap(cross_gen):
    return cotangent_laplacian(cross_gen.mesh)


@pytest.fixture(scope="session")
def cross_basis(cross_gen, cross_lap):
    return lbo_eigenpairs(cross_lap, 15)


def rand_rotation(rng):
    """Uniform random rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
