import numpy as np
import pytest
import scipy.linalg

from mas_track.linalg import (
    LinalgError,
    LyapunovSingularError,
    NotHurwitzError,
    error_block_matrix,
    solve_linear,
    solve_lyapunov,
    spectral_norm,
    symmetric_eigen,
    symmetric_eigenvalues,
)

RING_L = np.array([
    [2., -1., 0., 0., -1.],
    [-1., 2., -1., 0., 0.],
    [0., -1., 2., -1., 0.],
    [0., 0., -1., 2., -1.],
    [-1., 0., 0., -1., 2.],
])
RING_H = RING_L + np.diag([1., 0., 0., 0., 0.])


def test_jacobi_matches_lapack_on_random_symmetric():
    rng = np.random.default_rng(42)
    for _ in range(50):
        n = int(rng.integers(1, 13))
        m = rng.normal(size=(n, n))
        a = 0.5 * (m + m.T)
        ours = symmetric_eigenvalues(a)
        ref = np.linalg.eigvalsh(a)
        scale = max(1.0, np.abs(ref).max())
        assert np.abs(ours - ref).max() <= 1e-11 * scale


def test_jacobi_eigenvectors_diagonalize():
    rng = np.random.default_rng(3)
    m = rng.normal(size=(6, 6))
    a = 0.5 * (m + m.T)
    values, vectors = symmetric_eigen(a)
    recon = vectors @ np.diag(values) @ vectors.T
    assert np.abs(recon - a).max() <= 1e-12 * max(1.0, np.abs(a).max())
    assert np.abs(vectors.T @ vectors - np.eye(6)).max() <= 1e-12


def test_jacobi_diagonal_is_exact():
    values = symmetric_eigenvalues(np.diag([3.0, -1.0, 2.0]))
    assert values.tolist() == [-1.0, 2.0, 3.0]


def test_jacobi_rejects_nonsymmetric():
    with pytest.raises(LinalgError, match="not symmetric"):
        symmetric_eigenvalues(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_spectral_norm_matches_lapack():
    rng = np.random.default_rng(8)
    for _ in range(20):
        m = rng.normal(size=(int(rng.integers(1, 9)), int(rng.integers(1, 9))))
        assert spectral_norm(m) == pytest.approx(np.linalg.norm(m, 2), rel=1e-9, abs=1e-12)


def test_spectral_norm_of_spd_equals_lambda_max():
    rng = np.random.default_rng(9)
    m = rng.normal(size=(5, 5))
    p = m @ m.T + 0.5 * np.eye(5)
    assert spectral_norm(p) == pytest.approx(symmetric_eigenvalues(p)[-1], rel=1e-11)


def test_solve_linear_singular_raises():
    with pytest.raises(LinalgError):
        solve_linear(np.zeros((2, 2)), np.ones(2))


def test_lyapunov_scalar():
    sol = solve_lyapunov(np.array([[-1.0]]))
    assert sol.p[0, 0] == pytest.approx(0.5, abs=0.0)
    assert sol.residual == 0.0
    assert sol.lambda_min_p == pytest.approx(0.5)
    assert sol.spectral_norm_p == pytest.approx(0.5)


def test_lyapunov_companion_matches_hand_solution():
    # q.T p + p q = -I for q = [[0, 1], [-2, -1]] solved by hand:
    # p = [[1.75, 0.25], [0.25, 0.75]]
    q = np.array([[0.0, 1.0], [-2.0, -1.0]])
    sol = solve_lyapunov(q)
    assert np.abs(sol.p - np.array([[1.75, 0.25], [0.25, 0.75]])).max() <= 1e-12


def _quadrature_oracle_expm(q, t_final=40.0, h=0.005):
    # independent oracle: Simpson quadrature of expm(q.T t) expm(q t)
    steps = int(round(t_final / h))
    if steps % 2:
        steps += 1
    propagator = scipy.linalg.expm(q * h)
    m = np.eye(q.shape[0])
    acc = m.T @ m
    for i in range(1, steps):
        m = m @ propagator
        acc += (4.0 if i % 2 else 2.0) * (m.T @ m)
    m = m @ propagator
    acc += m.T @ m
    return acc * (h / 3.0)


def test_lyapunov_quadrature_oracle_agreement():
    rng = np.random.default_rng(13)
    q = np.array([[0.0, 1.0], [-2.0, -1.0]])
    instances = [q]
    for _ in range(4):
        n = int(rng.integers(1, 5))
        r = rng.normal(size=(n, n))
        instances.append(r - (np.sqrt((r * r).sum()) + 0.5) * np.eye(n))
    for q in instances:
        sol = solve_lyapunov(q)
        oracle = _quadrature_oracle_expm(q)
        assert np.abs(sol.p - oracle).max() <= 1e-6


def test_lyapunov_matches_scipy_solver():
    rng = np.random.default_rng(14)
    for _ in range(10):
        n = int(rng.integers(2, 9))
        r = rng.normal(size=(n, n))
        q = r - (np.sqrt((r * r).sum()) + 0.2) * np.eye(n)
        sol = solve_lyapunov(q)
        ref = scipy.linalg.solve_lyapunov(q.T, -np.eye(n))
        assert np.abs(sol.p - ref).max() <= 1e-8 * max(1.0, np.abs(ref).max())


def test_lyapunov_random_hurwitz_residuals():
    rng = np.random.default_rng(15)
    for _ in range(100):
        n = int(rng.integers(1, 11))
        r = rng.normal(size=(n, n))
        q = r - (np.sqrt((r * r).sum()) + 0.05) * np.eye(n)
        sol = solve_lyapunov(q)
        assert sol.residual <= 1e-9
        assert sol.lambda_min_p > 0


def test_lyapunov_unstable_raises_not_hurwitz():
    with pytest.raises(NotHurwitzError) as excinfo:
        solve_lyapunov(np.array([[1.0]]))
    assert excinfo.value.lambda_min_p < 0


def test_lyapunov_imaginary_axis_raises_singular():
    with pytest.raises(LyapunovSingularError, match="singular"):
        solve_lyapunov(np.array([[0.0, 1.0], [-1.0, 0.0]]))


def test_lyapunov_size_guard():
    with pytest.raises(LinalgError, match="desk-scale"):
        solve_lyapunov(-np.eye(65))


def test_error_block_matrix_leader_est_n1():
    block = error_block_matrix("leader_est", np.array([[2.0]]))
    assert block.tolist() == [[-2.0, 1.0], [-2.0, 0.0]]


def test_error_block_matrix_local_est_blocks():
    block = error_block_matrix("local_est", np.eye(2), l=1.0)
    expected = np.block([[-np.eye(2), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])
    assert np.array_equal(block, expected)


def test_error_block_matrix_unknown_kind():
    with pytest.raises(LinalgError, match="unknown error block kind"):
        error_block_matrix("nope", np.eye(2))


def _match_complex_sets(a, b, tol):
    # greedy nearest-neighbour pairing of two eigenvalue multisets
    a = list(np.asarray(a))
    b = list(np.asarray(b))
    assert len(a) == len(b)
    worst = 0.0
    for value in a:
        dists = [abs(value - other) for other in b]
        j = int(np.argmin(dists))
        worst = max(worst, dists[j])
        b.pop(j)
    return worst <= tol


def test_tracking_block_eigenvalues_match_quadratic_roots():
    # eigenvalues of [[0, I], [-kH, -I]] are the roots of s^2 + s + k*lam_i(H)
    k = 0.5
    block = error_block_matrix("tracking", RING_H, k=k)
    numeric = np.linalg.eigvals(block)
    expected = []
    for lam in symmetric_eigenvalues(RING_H):
        expected.extend(np.roots([1.0, 1.0, k * lam]))
    assert _match_complex_sets(numeric, expected, 1e-8)


def test_leader_block_eigenvalues_match_quadratic_roots():
    # eigenvalues of [[-H, I], [-H, 0]] are the roots of s^2 + lam_i(H) s + lam_i(H)
    block = error_block_matrix("leader_est", RING_H)
    numeric = np.linalg.eigvals(block)
    expected = []
    for lam in symmetric_eigenvalues(RING_H):
        expected.extend(np.roots([1.0, lam, lam]))
    assert _match_complex_sets(numeric, expected, 1e-8)


def test_error_blocks_hurwitz_for_positive_gains():
    # positive definite Lyapunov solutions exist for every block whenever
    # lambda_min(H) > 0, l > 0, k > 0
    rng = np.random.default_rng(16)
    for _ in range(5):
        n = int(rng.integers(1, 5))
        m = rng.normal(size=(n, n))
        h = m @ m.T + (0.05 + rng.random()) * np.eye(n)
        l = 0.1 + 2 * rng.random()
        k = 0.1 + 2 * rng.random()
        for kind in ("leader_est", "local_est", "tracking"):
            sol = solve_lyapunov(error_block_matrix(kind, h, l=l, k=k))
            assert sol.lambda_min_p > 0
