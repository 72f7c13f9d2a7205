import numpy as np
import pytest
import scipy.sparse as sp

from biofilm_mixture.sparse import SolverError, SparseSystem, assemble, bicgstab, solve


def test_assemble_identity():
    s = assemble([(0, 0, 1.0), (1, 1, 1.0)], 2)
    assert np.array_equal(s.matrix.toarray(), np.eye(2))
    assert list(s.indptr) == [0, 1, 2]


def test_assemble_sums_duplicates():
    s = assemble([(0, 0, 1.0), (0, 0, 2.0)], 2)
    assert s.matrix.nnz == 1
    assert s.data[0] == 3.0


def test_assemble_rejects_out_of_range():
    with pytest.raises(IndexError):
        assemble([(0, 5, 1.0)], 2)


def test_solve_identity():
    x, rep = solve(assemble([(0, 0, 1.0), (1, 1, 1.0)], 2, np.array([1.0, 2.0])))
    assert np.array_equal(x, [1.0, 2.0])
    assert rep.method == "direct"


def _poisson(n):
    trip = [(0, 0, 1.0), (n - 1, n - 1, 1.0)]
    for i in range(1, n - 1):
        trip += [(i, i - 1, -1.0), (i, i, 2.0), (i, i + 1, -1.0)]
    return trip


@pytest.mark.parametrize("method", ["direct", "krylov"])
def test_poisson_linear_exactness(method):
    n = 5
    xs = np.linspace(0.0, 1.0, n)
    b = np.zeros(n)
    b[0], b[-1] = xs[0], xs[-1]
    x, _ = solve(assemble(_poisson(n), n, b), tol=1e-13, method=method)
    assert np.max(np.abs(x - xs)) <= 1e-12


@pytest.mark.parametrize("method", ["direct", "krylov"])
def test_random_spd_residual(method):
    rng = np.random.default_rng(7)
    B = rng.standard_normal((50, 50))
    A = B @ B.T + 50 * np.eye(50)
    b = rng.standard_normal(50)
    x, rep = solve(SparseSystem(sp.csr_matrix(A), b), tol=1e-10, method=method)
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) <= 1e-10
    assert rep.residual <= 1e-10


def test_bicgstab_nonsymmetric():
    n = 200
    A = sp.diags([-1.2, 3.0, -0.8], [-1, 0, 1], shape=(n, n)).tocsr()
    b = np.ones(n)
    x, it, ok = bicgstab(A, b, tol=1e-12)
    assert ok and it > 0
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_singular_system_raises():
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SolverError):
        solve(SparseSystem(A, np.array([1.0, 0.0])))


def test_krylov_nonconvergence_raises():
    A = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(400, 400)).tocsr()
    with pytest.raises(SolverError, match="did not converge"):
        solve(SparseSystem(A, np.ones(400)), method="krylov", max_iter=3)


def test_system_shape_checks():
    with pytest.raises(ValueError):
        SparseSystem(sp.csr_matrix((2, 3)), np.zeros(2))
    with pytest.raises(ValueError):
        SparseSystem(sp.eye(2, format="csr"), np.zeros(3))


def test_dump_matrix_market(tmp_path):
    s = assemble([(0, 0, 1.0), (1, 0, 2.0)], 2)
    s.dump(tmp_path / "a.mtx")
    assert (tmp_path / "a.mtx").read_text().startswith("%%MatrixMarket")
