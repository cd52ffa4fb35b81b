import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facexpr.pca import ConvergenceError, PcaModel, pca_fit, pca_project, pca_reconstruct, sym_eigen


def test_eigen_identity():
    values, vectors = sym_eigen(np.eye(3))
    np.testing.assert_array_equal(values, [1, 1, 1])
    np.testing.assert_allclose(vectors.T @ vectors, np.eye(3), atol=1e-12)


def test_eigen_diagonal():
    values, vectors = sym_eigen(np.diag([5.0, 2.0, 7.0]))
    np.testing.assert_array_equal(values, [7, 5, 2])
    np.testing.assert_array_equal(np.abs(vectors), [[0, 1, 0], [0, 0, 1], [1, 0, 0]])


def test_eigen_two_by_two():
    # det([[2-l, 1], [1, 2-l]]) = (l - 3)(l - 1)
    values, vectors = sym_eigen([[2.0, 1.0], [1.0, 2.0]])
    assert values.tolist() == [3.0, 1.0]
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(np.abs(vectors[:, 0]), [s, s], atol=1e-15)
    np.testing.assert_allclose(vectors[:, 1] * np.sign(vectors[0, 1]), [s, -s], atol=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 17, 40])
def test_eigen_against_lapack(rng, n):
    b = rng.normal(size=(n, n))
    s = b + b.T
    values, vectors = sym_eigen(s)
    np.testing.assert_allclose(values, np.sort(np.linalg.eigvalsh(s))[::-1], atol=1e-10 * np.linalg.norm(s))
    assert np.all(np.diff(values) <= 0)
    np.testing.assert_allclose(vectors.T @ vectors, np.eye(n), atol=1e-12)
    residual = np.linalg.norm(s @ vectors - vectors * values, axis=0)
    assert residual.max() <= 1e-8 * np.linalg.norm(s, 2)


def test_eigen_rejects_non_symmetric():
    with pytest.raises(ValueError):
        sym_eigen([[1.0, 2.0], [0.0, 1.0]])


def test_eigen_sweep_cap():
    b = np.random.default_rng(0).normal(size=(6, 6))
    with pytest.raises(ConvergenceError):
        sym_eigen(b + b.T, max_sweeps=1)


def test_fit_mean():
    m = pca_fit([[1.0, 2.0], [3.0, 4.0]], 1)
    np.testing.assert_array_equal(m.mean, [2.0, 3.0])


def test_fit_two_points_chord():
    a, b = np.array([1.0, 5.0, -2.0]), np.array([4.0, 1.0, 0.0])
    for method in ("gram", "covariance"):
        m = pca_fit([a, b], 1, method=method)
        chord = (b - a) / np.linalg.norm(b - a)
        np.testing.assert_allclose(np.abs(m.components[0] @ chord), 1.0, atol=1e-12)
        assert np.linalg.norm(m.components[0]) == pytest.approx(1.0)
        assert m.components[0][0] > 0


def test_fit_axis_aligned():
    x = np.zeros((6, 4))
    x[:, 0] = [-3.0, -1.0, 0.0, 2.0, 5.0, 9.0]
    m = pca_fit(x, 3, method="covariance")
    np.testing.assert_allclose(m.components[0], [1, 0, 0, 0], atol=1e-12)
    np.testing.assert_array_equal(m.eigenvalues[1:], 0.0)
    mg = pca_fit(x, 3, method="gram")
    np.testing.assert_allclose(mg.components[0], [1, 0, 0, 0], atol=1e-12)
    np.testing.assert_array_equal(mg.eigenvalues[1:], 0.0)
    np.testing.assert_allclose(mg.components @ mg.components.T, np.eye(3), atol=1e-10)


def test_fit_errors():
    with pytest.raises(ValueError):
        pca_fit([[1.0, 2.0]], 1)
    with pytest.raises(ValueError):
        pca_fit(np.zeros((3, 5)), 3)
    with pytest.raises(ValueError):
        pca_fit(np.zeros((4, 2)), 3)


def _random_model(rng, m=12, n=6, k=4, method="auto"):
    x = rng.normal(size=(m, n)) * rng.uniform(0.5, 3.0, size=n)
    return x, pca_fit(x, k, method=method)


@pytest.mark.parametrize("method", ["gram", "covariance"])
def test_fitted_model_invariants(rng, method):
    x, m = _random_model(rng, m=10, n=7, k=5, method=method)
    np.testing.assert_allclose(m.components @ m.components.T, np.eye(5), atol=1e-6)
    assert np.all(np.diff(m.eigenvalues) <= 0) and np.all(m.eigenvalues >= 0)
    y = pca_project(m, x)
    np.testing.assert_allclose((y**2).mean(axis=0), m.eigenvalues, rtol=1e-6)


def test_project_mean_is_zero(rng):
    _, m = _random_model(rng)
    np.testing.assert_allclose(pca_project(m, m.mean), 0.0, atol=1e-12)


def test_project_first_component(rng):
    _, m = _random_model(rng)
    expected = np.zeros(m.n_components)
    expected[0] = 1.0
    np.testing.assert_allclose(pca_project(m, m.mean + m.components[0]), expected, atol=1e-12)


def test_reconstruct_zero_is_mean(rng):
    _, m = _random_model(rng)
    np.testing.assert_array_equal(pca_reconstruct(m, np.zeros(m.n_components)), m.mean)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_full_basis_reconstructs(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    x = rng.normal(size=(n + 3, n))
    m = pca_fit(x, n)
    v = rng.normal(size=n) * 10
    np.testing.assert_allclose(pca_reconstruct(m, pca_project(m, v)), v, atol=1e-6)


def test_reconstruction_error_non_increasing(rng):
    x = rng.normal(size=(9, 12))
    errors = []
    for k in range(1, 9):
        m = pca_fit(x, k)
        errors.append(np.linalg.norm(x - pca_reconstruct(m, pca_project(m, x))))
    assert all(b <= a + 1e-9 for a, b in zip(errors, errors[1:]))
    assert errors[-1] <= 1e-6


def test_length_mismatch(rng):
    _, m = _random_model(rng)
    with pytest.raises(ValueError):
        pca_project(m, np.zeros(m.n_features + 1))
    with pytest.raises(ValueError):
        pca_reconstruct(m, np.zeros(m.n_components + 1))


def test_dict_roundtrip(rng):
    _, m = _random_model(rng)
    m2 = PcaModel.from_dict(m.to_dict())
    for a, b in ((m.mean, m2.mean), (m.components, m2.components), (m.eigenvalues, m2.eigenvalues)):
        np.testing.assert_array_equal(a, b)
