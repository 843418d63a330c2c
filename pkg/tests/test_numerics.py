import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thimv.errors import InvalidArgument, NumericalFailure
from thimv.numerics import eig_hermitian, eigh_batch, envelope, solve_hpd, solve_hpd_batch


def random_hpd(rng, n, complex_=True):
    a = rng.standard_normal((n, n))
    if complex_:
        a = a + 1j * rng.standard_normal((n, n))
    return a @ a.conj().T + n * 1e-3 * np.eye(n)


def check_decomposition(m, dec):
    lam, v = dec.eigenvalues, dec.eigenvectors
    n = m.shape[0]
    assert np.all(np.diff(lam) <= 0)
    np.testing.assert_allclose(v.conj().T @ v, np.eye(n), atol=1e-10)
    err = np.linalg.norm(dec.reconstruct() - m) / np.linalg.norm(m)
    assert err <= 1e-10
    assert abs(lam.sum() - np.trace(m).real) <= 1e-10 * abs(np.trace(m))


def test_eig_diagonal():
    dec = eig_hermitian(np.diag([2.0, 1.0]))
    np.testing.assert_allclose(dec.eigenvalues, [2.0, 1.0])
    np.testing.assert_allclose(np.abs(dec.eigenvectors), np.eye(2), atol=1e-15)


def test_eig_two_by_two_closed_form():
    dec = eig_hermitian(np.array([[1.1, 1.0], [1.0, 1.1]]))
    np.testing.assert_allclose(dec.eigenvalues, [2.1, 0.1], atol=1e-14)
    v1, v2 = dec.eigenvectors.T
    assert abs(abs(np.vdot(v1, np.array([1, 1]) / np.sqrt(2))) - 1) < 1e-12
    assert abs(abs(np.vdot(v2, np.array([1, -1]) / np.sqrt(2))) - 1) < 1e-12


def test_eig_degenerate_identity():
    m = np.eye(3)
    dec = eig_hermitian(m)
    np.testing.assert_allclose(dec.eigenvalues, 1.0)
    check_decomposition(m, dec)


@pytest.mark.parametrize("n", [1, 2, 5, 33, 66])
def test_eig_random_complex(n, rng):
    m = random_hpd(rng, n)
    dec = eig_hermitian(m)
    check_decomposition(m, dec)
    assert np.all(dec.eigenvalues > 0)


@given(st.integers(1, 12), st.integers(0, 2**32 - 1), st.booleans())
def test_eig_matches_lapack(n, seed, complex_):
    m = random_hpd(np.random.default_rng(seed), n, complex_)
    dec = eig_hermitian(m)
    ref = np.linalg.eigvalsh(m)[::-1]
    np.testing.assert_allclose(dec.eigenvalues, ref, rtol=1e-10, atol=1e-10 * ref[0])
    check_decomposition(m, dec)


def test_eig_rejects_non_hermitian():
    with pytest.raises(InvalidArgument):
        eig_hermitian(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(InvalidArgument):
        eig_hermitian(np.ones((2, 3)))
    with pytest.raises(InvalidArgument):
        eig_hermitian(np.array([[np.nan]]))


def test_eig_budget_exhaustion(rng):
    with pytest.raises(NumericalFailure):
        eig_hermitian(random_hpd(rng, 10), max_sweeps=1)


def test_eigh_batch_descending(rng):
    mats = np.stack([random_hpd(rng, 6) for _ in range(4)])
    lam, v = eigh_batch(mats)
    assert np.all(np.diff(lam, axis=-1) <= 0)
    for m, l, vv in zip(mats, lam, v):
        np.testing.assert_allclose((vv * l) @ vv.conj().T, m, atol=1e-10 * np.abs(m).max())


@pytest.mark.parametrize(
    "m,b,x",
    [
        (np.eye(2), [1.0, 1.0], [1.0, 1.0]),
        (np.diag([2.0, 1.0]), [1.0, 1.0], [0.5, 1.0]),
    ],
)
def test_solve_examples(m, b, x):
    np.testing.assert_allclose(solve_hpd(m, np.array(b)), x, atol=1e-15)


def test_solve_singular_fails():
    with pytest.raises(NumericalFailure, match="loading"):
        solve_hpd(np.zeros((2, 2)), np.ones(2))


def test_solve_rhs_length():
    with pytest.raises(InvalidArgument):
        solve_hpd(np.eye(3), np.ones(2))


@given(st.integers(1, 66), st.integers(0, 2**32 - 1))
def test_solve_residual(n, seed):
    rng = np.random.default_rng(seed)
    m = random_hpd(rng, n)
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x = solve_hpd(m, b)
    assert np.linalg.norm(m @ x - b) / np.linalg.norm(b) <= 1e-10


def test_solve_batch_reports_failing_matrix(rng):
    mats = np.stack([np.eye(3), np.eye(3), np.zeros((3, 3))])
    with pytest.raises(NumericalFailure) as info:
        solve_hpd_batch(mats, np.ones((3, 3)))
    assert info.value.args[1] == 2
    x = solve_hpd_batch(mats[:2] * 2.0, np.ones((2, 3)))
    np.testing.assert_allclose(x, 0.5)


def test_envelope_zero():
    assert np.all(envelope(np.zeros(16), 1.0) == 0)


@pytest.mark.parametrize("amp", [1.0, 0.5])
def test_envelope_tone(amp):
    fs = 1.0
    t = np.arange(256)
    s = amp * np.cos(2 * np.pi * t * fs / 16)
    e = envelope(s, fs)
    np.testing.assert_allclose(e[16:-16], amp, rtol=0.01)


@given(st.floats(0.01, 100.0), st.integers(0, 2**32 - 1))
def test_envelope_homogeneous(c, seed):
    s = np.random.default_rng(seed).standard_normal(64)
    np.testing.assert_allclose(envelope(c * s, 1.0), c * envelope(s, 1.0), rtol=1e-12, atol=1e-14)


def test_envelope_rejects_short():
    with pytest.raises(InvalidArgument):
        envelope(np.ones(3), 1.0)
    with pytest.raises(InvalidArgument):
        envelope(np.ones(8), 0.0)
