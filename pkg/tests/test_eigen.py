import numpy as np
import pytest

from tripc.eigen import NumericalError, inverse_sqrt, jacobi_eigh


def test_diagonal():
    values, vectors = jacobi_eigh(np.diag([1.0, 4.0]))
    assert np.allclose(values, [4.0, 1.0])
    assert np.allclose(np.abs(vectors), [[0, 1], [1, 0]])


def test_two_by_two():
    values, vectors = jacobi_eigh([[2.0, 1.0], [1.0, 2.0]])
    assert np.allclose(values, [3.0, 1.0])
    assert np.allclose(np.abs(vectors), np.full((2, 2), 2**-0.5))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_symmetric_against_numpy(seed):
    a = np.random.default_rng(seed).standard_normal((16, 16))
    a = a + a.T
    values, vectors = jacobi_eigh(a)
    ref = np.linalg.eigh(a)[0][::-1]
    assert np.max(np.abs(values - ref)) < 1e-8
    assert np.allclose(vectors.T @ vectors, np.eye(16), atol=1e-10)
    assert np.allclose(vectors @ np.diag(values) @ vectors.T, a, atol=1e-8)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        jacobi_eigh(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        jacobi_eigh([[1.0, 2.0], [0.0, 1.0]])


def test_inverse_sqrt():
    g = np.array([[1.0, 0.5], [0.5, 1.0]])
    r = inverse_sqrt(g)
    assert np.allclose(r @ r @ g, np.eye(2))
    assert np.allclose(r, [[1.11535, -0.29886], [-0.29886, 1.11535]], atol=1e-5)
    with pytest.raises(NumericalError):
        inverse_sqrt([[1.0, 0.0], [0.0, -1.0]])


def test_empty_and_one_by_one():
    values, vectors = jacobi_eigh([[5.0]])
    assert values[0] == 5.0 and vectors[0, 0] == 1.0
