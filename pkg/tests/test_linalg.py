import numpy as np
import pytest

from tools.errors import EigenNotConverged
from tools.linalg import jacobi_eigh


def _random_symmetric(rng, n, d):
    a = rng.normal(size=(n, d, d))
    return 0.5 * (a + np.swapaxes(a, -1, -2))


@pytest.mark.parametrize("d", [2, 3, 5, 8])
def test_matches_numpy_eigenvalues(d):
    rng = np.random.default_rng(d)
    a = _random_symmetric(rng, 50, d)
    vals, vecs = jacobi_eigh(a)
    expected = np.sort(np.linalg.eigvalsh(a), axis=-1)[:, ::-1]
    np.testing.assert_allclose(vals, expected, atol=1e-12)
    assert np.all(np.diff(vals, axis=-1) <= 0.0)


def test_eigenvectors_reconstruct_and_are_orthonormal():
    rng = np.random.default_rng(11)
    a = _random_symmetric(rng, 20, 6)
    vals, vecs = jacobi_eigh(a)
    rebuilt = np.einsum("nij,nj,nkj->nik", vecs, vals, vecs)
    np.testing.assert_allclose(rebuilt, a, atol=1e-12)
    gram = np.einsum("nji,njk->nik", vecs, vecs)
    np.testing.assert_allclose(gram, np.broadcast_to(np.eye(6), gram.shape), atol=1e-12)


def test_sign_convention_first_component_positive():
    rng = np.random.default_rng(2)
    _, vecs = jacobi_eigh(_random_symmetric(rng, 30, 4))
    for v in vecs.reshape(-1, 4, 4):
        for col in v.T:
            lead = col[np.argmax(np.abs(col) > 1e-12)]
            assert lead > 0.0


def test_single_matrix_and_diagonal_input():
    vals, vecs = jacobi_eigh(np.diag([1.0, 3.0, 2.0]))
    np.testing.assert_allclose(vals, [3.0, 2.0, 1.0])
    np.testing.assert_allclose(np.abs(vecs), [[0, 0, 1], [1, 0, 0], [0, 1, 0]])


def test_two_point_onsager_matrix():
    vals, vecs = jacobi_eigh(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    np.testing.assert_allclose(vals, [2.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(vecs[:, 1], [1.0 / np.sqrt(2.0), 1.0 / np.sqrt(2.0)], atol=1e-15)


def test_sweep_limit_raises():
    rng = np.random.default_rng(0)
    with pytest.raises(EigenNotConverged):
        jacobi_eigh(_random_symmetric(rng, 1, 6), max_sweeps=1)
