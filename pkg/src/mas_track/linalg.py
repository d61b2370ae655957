"""Small dense matrix kernels used by the graph and bound machinery.

Everything here operates at desk scale (a few dozen rows at most): a cyclic
Jacobi eigensolver for symmetric matrices, a spectral-norm helper, a linear
solve, the continuous Lyapunov equation solved by Kronecker vectorization,
and the assembly of the three block matrices governing the stacked
estimation/tracking error dynamics of the second-order controller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_LYAPUNOV_SIZE = 64


class LinalgError(ValueError):
    """Base class for solver failures in this module."""


class SingularMatrixError(LinalgError):
    """Linear system has no unique solution."""


class LyapunovSingularError(LinalgError):
    """The vectorized Lyapunov system is singular (eigenvalues of the
    coefficient matrix sum to zero in pairs, e.g. imaginary-axis modes)."""


class NotHurwitzError(LinalgError):
    """Lyapunov solution exists but is not positive definite, i.e. the
    coefficient matrix is not Hurwitz.  Carries the offending eigenvalue."""

    def __init__(self, lambda_min_p: float):
        super().__init__(
            f"matrix is not Hurwitz: Lyapunov solution has "
            f"lambda_min(P) = {lambda_min_p:.6g} <= 0"
        )
        self.lambda_min_p = lambda_min_p


def symmetric_eigen(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 60):
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Sweeps rotate away off-diagonal entries until their Frobenius norm drops
    below ``tol`` times the matrix scale.  Unconditionally stable and exact
    enough (~1e-14 relative) for the small matrices used here.

    Returns ``(values, vectors)`` with eigenvalues ascending and eigenvectors
    in the matching columns.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise LinalgError(f"expected a square matrix, got shape {a.shape}")
    if n and np.abs(a - a.T).max() > 1e-10 * (1.0 + np.abs(a).max()):
        raise LinalgError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = np.sqrt((a * a).sum())
    if n <= 1 or scale == 0.0:
        return np.diag(a).copy(), v

    def off_norm(m):
        off = m - np.diag(np.diag(m))
        return np.sqrt((off * off).sum())

    for _ in range(max_sweeps):
        if off_norm(a) <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                # Rutishauser rotation: pick the smaller-angle root.
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                rot_p = c * v[:, p] - s * v[:, q]
                rot_q = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = rot_p, rot_q
    else:
        raise LinalgError("Jacobi sweep limit reached without convergence")

    values = np.diag(a).copy()
    order = np.argsort(values, kind="stable")
    return values[order], v[:, order]


def symmetric_eigenvalues(a: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Ascending eigenvalues of a symmetric matrix (Jacobi)."""
    values, _ = symmetric_eigen(a, tol=tol)
    return values


def spectral_norm(m: np.ndarray) -> float:
    """Largest singular value of a real matrix, via the symmetric eigen path
    on ``m.T @ m``.  For a symmetric matrix this equals max |eigenvalue|."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0.0
    gram = m.T @ m
    values = symmetric_eigenvalues(gram)
    return float(np.sqrt(max(values[-1], 0.0)))


def solve_linear(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Dense linear solve (partial-pivot LU)."""
    try:
        return np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(str(exc)) from exc


@dataclass(frozen=True)
class LyapunovSolution:
    """Positive definite solution of ``q.T @ p + p @ q = -I`` and the spectral
    quantities of ``p`` that the bound formulas consume."""

    p: np.ndarray
    lambda_min_p: float
    lambda_max_p: float
    spectral_norm_p: float
    residual: float


def solve_lyapunov(q: np.ndarray) -> LyapunovSolution:
    """Solve the continuous Lyapunov equation ``q.T P + P q = -I``.

    The equation is vectorized into an n²×n² dense linear system (row-major
    flattening: ``kron(q.T, I) + kron(I, q.T)``) and solved by partial-pivot
    elimination, then the solution is symmetrized.  Raises
    :class:`LyapunovSingularError` when the vectorized system is singular and
    :class:`NotHurwitzError` when the solution is not positive definite.
    """
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    if q.shape != (n, n):
        raise LinalgError(f"expected a square matrix, got shape {q.shape}")
    if n > MAX_LYAPUNOV_SIZE:
        raise LinalgError(
            f"matrix size {n} exceeds the desk-scale limit {MAX_LYAPUNOV_SIZE}"
        )
    eye = np.eye(n)
    coeff = np.kron(q.T, eye) + np.kron(eye, q.T)
    try:
        vec_p = solve_linear(coeff, -eye.reshape(-1))
    except SingularMatrixError as exc:
        raise LyapunovSingularError("Lyapunov equation singular") from exc
    p = vec_p.reshape(n, n)
    p = 0.5 * (p + p.T)
    residual = float(np.abs(p @ q + q.T @ p + eye).max())
    if not np.isfinite(residual) or residual > 1e-6 * (1.0 + spectral_norm(q)) ** 2:
        raise LyapunovSingularError(
            f"Lyapunov equation singular or ill-conditioned (residual {residual:.3g})"
        )
    values = symmetric_eigenvalues(p)
    lam_min, lam_max = float(values[0]), float(values[-1])
    if lam_min <= 0.0:
        raise NotHurwitzError(lam_min)
    return LyapunovSolution(
        p=p,
        lambda_min_p=lam_min,
        lambda_max_p=lam_max,
        spectral_norm_p=spectral_norm(p),
        residual=residual,
    )


ERROR_BLOCK_KINDS = ("leader_est", "local_est", "tracking")


def error_block_matrix(kind: str, h: np.ndarray, l: float = 0.0, k: float = 0.0) -> np.ndarray:
    """Assemble one of the three 2N×2N block matrices of the stacked error
    dynamics for the second-order loop.

    ``leader_est``  [[-H, I], [-H, 0]]   leader velocity/disturbance estimation
    ``local_est``   [[-lI, I], [-lI, 0]] own velocity/disturbance estimation
    ``tracking``    [[0, I], [-kH, -I]]  position/velocity tracking
    """
    h = np.asarray(h, dtype=float)
    n = h.shape[0]
    if h.shape != (n, n):
        raise LinalgError(f"expected a square coupling matrix, got shape {h.shape}")
    eye = np.eye(n)
    zero = np.zeros((n, n))
    if kind == "leader_est":
        return np.block([[-h, eye], [-h, zero]])
    if kind == "local_est":
        return np.block([[-l * eye, eye], [-l * eye, zero]])
    if kind == "tracking":
        return np.block([[zero, eye], [-k * h, -eye]])
    raise LinalgError(f"unknown error block kind {kind!r}; expected one of {ERROR_BLOCK_KINDS}")
