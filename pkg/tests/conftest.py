import numpy as np
import pytest

from duofm.mesh import generate_icosphere, generate_symmetric_blob
from duofm.scenarios import feature_stack
from duofm.shape import prepare_shape, random_permutation


@pytest.fixture(scope="session")
def sphere3():
    return generate_icosphere(3, 1.0)


@pytest.fixture(scope="session")
def blob():
    return generate_symmetric_blob(3, 10)


@pytest.fixture(scope="session")
def small_blob():
    return generate_symmetric_blob(5, 6)


@pytest.fixture(scope="session")
def blob_shape(blob):
    return prepare_shape(blob[0])


@pytest.fixture(scope="session")
def small_shape(small_blob):
    return prepare_shape(small_blob[0], k_c=20, k_q=10)


@pytest.fixture(scope="session")
def permuted_pair(blob, blob_shape):
    """(shape, relabeled shape, perm) where old vertex i is new vertex perm[i]."""
    perm = random_permutation(blob[0].n_vertices, 1)
    other = prepare_shape(blob[0].relabeled(perm))
    return blob_shape, other, perm


@pytest.fixture(scope="session")
def blob_features(blob_shape):
    return feature_stack(blob_shape)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import REPORT
    if not REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(REPORT):
        terminalreporter.write_line(REPORT[key])
