import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forestgp.errors import InputError
from forestgp.kernel import KernelParams, euclidean_distance, gram, matern32, separable_kernel

# (1 + sqrt(3) d / l) exp(-sqrt(3) d / l) evaluated with mpmath at 30 digits
MATERN_D10_L10 = 0.483357724596507650595
MATERN_D5_L10 = 0.784887653957450654481


def test_matern_values():
    assert matern32(0.0) == 1.0
    assert matern32(10.0) == pytest.approx(MATERN_D10_L10, abs=1e-14)
    assert matern32(5.0, KernelParams(length_scale=10.0)) == pytest.approx(MATERN_D5_L10, abs=1e-14)


@pytest.mark.parametrize("d", [np.nan, np.inf, -1.0])
def test_matern_rejects_bad_distance(d):
    with pytest.raises(InputError):
        matern32(d)


def test_kernel_params_validation():
    with pytest.raises(InputError):
        KernelParams(length_scale=0.0)
    with pytest.raises(InputError):
        KernelParams(nu=2.5)
    with pytest.raises(InputError):
        KernelParams(signal_sigma=-1.0)


@given(st.lists(st.floats(0, 200, allow_nan=False), min_size=2, max_size=50))
def test_matern_monotone(ds):
    d = np.sort(np.unique(ds))
    k = matern32(d)
    assert np.all(np.diff(k) <= 0)
    # strict where the gap is resolvable in double precision
    far = np.diff(d) > 1e-6
    assert np.all(np.diff(k)[far] < 0)
    assert np.all((k > 0) & (k <= 1))


def test_matern_tail():
    assert matern32(1e4) < 1e-12


def test_euclidean_distance(rng):
    assert euclidean_distance([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert euclidean_distance([3.0, 0.0], [0.0, 4.0]) == 5.0
    x, y = rng.normal(size=77), rng.normal(size=77)
    total = 0.0
    for a, b in zip(x, y):
        total += (a - b) * (a - b)
    assert euclidean_distance(x, y) == pytest.approx(total ** 0.5, abs=1e-12)
    with pytest.raises(InputError):
        euclidean_distance([1.0], [1.0, 2.0])


def test_gram_basic(rng):
    X = rng.normal(size=(7, 3))
    K = gram(X, X)
    np.testing.assert_allclose(K, K.T, atol=1e-15)
    np.testing.assert_allclose(np.diag(K), 1.0)
    assert np.all((K > 0) & (K <= 1))
    assert gram(np.zeros((1, 4))).tolist() == [[1.0]]
    K2 = gram(np.array([[0.0, 0.0]]), np.array([[6.0, 8.0]]))
    assert K2[0, 0] == pytest.approx(MATERN_D10_L10, abs=1e-14)


def test_gram_matches_loop(rng):
    A, B = rng.normal(size=(4, 5)), rng.normal(size=(3, 5))
    K = gram(A, B)
    for i in range(4):
        for j in range(3):
            assert K[i, j] == pytest.approx(matern32(euclidean_distance(A[i], B[j])), abs=1e-14)


def test_gram_errors():
    with pytest.raises(InputError):
        gram(np.zeros((2, 3)), np.zeros((2, 4)))
    with pytest.raises(InputError):
        gram(np.zeros((0, 3)))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 50), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_gram_psd(n, dim, seed):
    X = np.random.default_rng(seed).normal(size=(n, dim))
    assert np.linalg.eigvalsh(gram(X)).min() >= -1e-8


def test_separable_layout(rng):
    G = np.cov(rng.normal(size=(10, 3)), rowvar=False)
    K = rng.normal(size=(4, 4))
    M = separable_kernel(G, K)
    assert M.shape == (12, 12)
    for a in range(3):
        for b in range(3):
            for i in range(4):
                for j in range(4):
                    assert M[a * 4 + i, b * 4 + j] == pytest.approx(G[a, b] * K[i, j], abs=1e-14)
    np.testing.assert_array_equal(separable_kernel(np.eye(2), K)[:4, 4:], 0.0)
    np.testing.assert_array_equal(separable_kernel(np.eye(2), K)[4:, 4:], K)


def test_separable_full_dims():
    M = separable_kernel(np.eye(15), np.eye(492))
    assert M.shape == (7380, 7380)


def test_separable_errors():
    with pytest.raises(InputError):
        separable_kernel(np.ones((2, 3)), np.eye(2))
    with pytest.raises(InputError):
        separable_kernel(np.array([[1.0, 0.5], [0.2, 1.0]]), np.eye(2))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_separable_psd_and_matvec(seed):
    r = np.random.default_rng(seed)
    G = np.cov(r.normal(size=(8, 3)), rowvar=False)
    K = gram(r.normal(size=(5, 2)))
    M = separable_kernel(G, K)
    assert np.linalg.eigvalsh(M).min() >= -1e-8
    v = r.normal(size=15)
    blocks = np.zeros(15)
    for a in range(3):
        for b in range(3):
            blocks[a * 5:(a + 1) * 5] += G[a, b] * (K @ v[b * 5:(b + 1) * 5])
    np.testing.assert_allclose(M @ v, blocks, atol=1e-10)
