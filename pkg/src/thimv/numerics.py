"""Dense kernels used by the adaptive beamformers.

``eig_hermitian`` is a cyclic Jacobi eigensolver that rotates a full set of
disjoint index pairs at once (round-robin ordering), which keeps the Python
overhead to one vectorized step per round. Whole images need tens of
thousands of decompositions per frame, so the image path uses the batched
LAPACK routines in ``eigh_batch`` / ``solve_hpd_batch`` instead; both routes
are cross-checked in the test-suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular
from scipy.signal import hilbert

from .errors import InvalidArgument, NumericalFailure

HERMITIAN_TOL = 1e-12
JACOBI_MAX_SWEEPS = 30
JACOBI_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    """Eigenvalues in descending order with matching orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def check_hermitian(m) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidArgument(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidArgument("matrix has non-finite entries")
    scale = np.max(np.abs(m)) if m.size else 0.0
    if m.size and np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL * scale:
        raise InvalidArgument("matrix is not Hermitian")
    return m


@lru_cache(maxsize=None)
def _rounds(n: int):
    """Round-robin schedule: n-1 rounds of disjoint (p, q) pairs, p < q."""
    m = n + (n % 2)
    order = list(range(m))
    out = []
    for _ in range(m - 1):
        pairs = [(order[i], order[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n]
        p = np.array([a for a, _ in pairs], dtype=np.intp)
        q = np.array([b for _, b in pairs], dtype=np.intp)
        out.append((p, q))
        order = [order[0], order[-1]] + order[1:-1]
    return tuple(out)


def _off_norm(a: np.ndarray) -> float:
    # Summed directly: total minus diagonal would cancel catastrophically.
    off = a[~np.eye(a.shape[0], dtype=bool)]
    return float(np.linalg.norm(off))


def eig_hermitian(m, *, max_sweeps: int = JACOBI_MAX_SWEEPS, tol: float = JACOBI_TOL) -> EigenDecomposition:
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    m : array_like, shape (n, n)
        Hermitian (or real symmetric) matrix.
    max_sweeps : int
        Iteration budget; each sweep visits every off-diagonal pair once.
    tol : float
        Convergence when the off-diagonal Frobenius norm is at most
        ``tol * ||m||_F``.

    Returns
    -------
    EigenDecomposition
        Eigenvalues sorted in descending order.

    Raises
    ------
    InvalidArgument
        If ``m`` is not square and Hermitian.
    NumericalFailure
        If the budget is exhausted before convergence.
    """
    m = check_hermitian(m)
    n = m.shape[0]
    dtype = np.complex128 if np.iscomplexobj(m) else np.float64
    a = np.array(m, dtype=dtype)
    # Hermitian part only; the check above bounds what is discarded.
    a = 0.5 * (a + a.conj().T)
    v = np.eye(n, dtype=dtype)
    threshold = tol * float(np.linalg.norm(a))
    rounds = _rounds(n) if n > 1 else ()

    converged = _off_norm(a) <= threshold
    sweep = 0
    while not converged:
        if sweep >= max_sweeps:
            raise NumericalFailure(
                f"Jacobi eigensolver did not converge in {max_sweeps} sweeps "
                f"(off-diagonal norm {_off_norm(a):.3e})"
            )
        for p, q in rounds:
            if p.size == 0:
                continue
            app = a[p, p].real
            aqq = a[q, q].real
            b = a[p, q]
            mag = np.abs(b)
            active = mag > 0.0
            if not np.any(active):
                continue
            safe = np.where(active, mag, 1.0)
            phase = np.where(active, b / safe, 1.0)
            with np.errstate(over="ignore"):
                tau = (aqq - app) / (2.0 * safe)
                t = np.where(tau >= 0.0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            cph = np.conj(phase)
            # a <- G^H a G with G = [[c, s], [-s e^{-i phi}, c e^{-i phi}]] on
            # every (p, q) plane; the pairs are disjoint so one update per round.
            ap, aq = a[:, p], a[:, q]
            a[:, p] = c * ap - (s * cph) * aq
            a[:, q] = s * ap + (c * cph) * aq
            ap, aq = a[p, :], a[q, :]
            a[p, :] = c[:, None] * ap - (s * phase)[:, None] * aq
            a[q, :] = s[:, None] * ap + (c * phase)[:, None] * aq
            a[p[active], q[active]] = 0.0
            a[q[active], p[active]] = 0.0
            vp, vq = v[:, p], v[:, q]
            v[:, p] = c * vp - (s * cph) * vq
            v[:, q] = s * vp + (c * cph) * vq
        sweep += 1
        converged = _off_norm(a) <= threshold

    lam = np.diagonal(a).real.copy()
    order = np.argsort(-lam, kind="stable")
    return EigenDecomposition(eigenvalues=lam[order], eigenvectors=v[:, order])


def eigh_batch(mats: np.ndarray):
    """Batched Hermitian eigendecomposition via LAPACK, descending order.

    Returns ``(eigenvalues, eigenvectors)`` with shapes ``(..., n)`` and
    ``(..., n, n)``.
    """
    try:
        lam, v = np.linalg.eigh(mats)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"batched eigensolver failed: {exc}") from exc
    return lam[..., ::-1], v[..., ::-1]


def solve_hpd(m, b) -> np.ndarray:
    """Solve ``m x = b`` for Hermitian positive-definite ``m`` via Cholesky.

    A failed factorization means ``m`` is not positive definite, which for a
    covariance estimate signals insufficient diagonal loading.
    """
    m = check_hermitian(m)
    b = np.asarray(b)
    if b.shape != (m.shape[0],):
        raise InvalidArgument(f"right-hand side must have length {m.shape[0]}")
    try:
        low = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(
            "matrix is not positive definite; increase the diagonal loading"
        ) from exc
    y = solve_triangular(low, b, lower=True)
    return solve_triangular(low.conj().T, y, lower=False)


def solve_hpd_batch(mats: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched ``solve_hpd``; ``b`` has shape ``(..., n)``.

    Raises ``NumericalFailure`` whose ``args[1]`` is the flat index of the
    first matrix that is not positive definite.
    """
    try:
        np.linalg.cholesky(mats)
    except np.linalg.LinAlgError:
        flat = mats.reshape(-1, *mats.shape[-2:])
        for i, mat in enumerate(flat):
            try:
                np.linalg.cholesky(mat)
            except np.linalg.LinAlgError:
                raise NumericalFailure(
                    "matrix is not positive definite; increase the diagonal loading", i
                ) from None
        raise
    return np.linalg.solve(mats, b[..., None])[..., 0]


def envelope(signal, fs: float) -> np.ndarray:
    """Magnitude of the analytic signal along the last axis.

    The analytic signal is built from the one-sided DFT spectrum.
    """
    x = np.asarray(signal, dtype=float)
    if not fs > 0:
        raise InvalidArgument("fs must be positive")
    if x.ndim == 0 or x.shape[-1] < 4:
        raise InvalidArgument("envelope needs at least 4 samples")
    return np.abs(hilbert(x, axis=-1))
