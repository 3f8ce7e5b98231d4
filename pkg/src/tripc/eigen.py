"""Cyclic Jacobi eigendecomposition for real symmetric matrices."""

from __future__ import annotations

import numpy as np


class NumericalError(ArithmeticError):
    pass


def _off_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.sqrt(np.sum(off * off)))


def jacobi_eigh(a, tol: float = 1e-12, max_sweeps: int = 30, symmetry_tol: float = 1e-9):
    """Eigenvalues (descending) and orthonormal eigenvectors (columns).

    Sweeps over all off-diagonal pairs, zeroing each with a plane rotation,
    until the off-diagonal Frobenius norm falls below ``tol * ||A||_F``.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"need a square matrix, got shape {a.shape}")
    n = a.shape[0]
    scale = float(np.linalg.norm(a))
    if n and np.max(np.abs(a - a.T)) > symmetry_tol * max(1.0, scale):
        raise ValueError("matrix is not symmetric")
    a = (a + a.T) / 2
    v = np.eye(n)
    target = tol * scale
    for _ in range(max_sweeps):
        if _off_norm(a) <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-18 * abs(diff):
                    t = apq / diff  # tiny angle; avoids overflow in theta
                else:
                    theta = diff / (2.0 * apq)
                    t = np.sign(theta) / (abs(theta) + np.hypot(1.0, theta)) if theta != 0 else 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        if _off_norm(a) > target:
            raise NumericalError(f"Jacobi did not converge in {max_sweeps} sweeps")
    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    return values[order], v[:, order]


def inverse_sqrt(g) -> np.ndarray:
    """Plaintext G^(-1/2) = E diag(lambda^(-1/2)) E^T."""
    values, vectors = jacobi_eigh(g)
    if values[-1] <= 0:
        raise NumericalError("matrix is not positive definite")
    return (vectors * values ** -0.5) @ vectors.T
