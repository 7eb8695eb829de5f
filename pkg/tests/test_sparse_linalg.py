import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from sprelax.sparse_linalg import (SolverError, as_csr, cg_solve, cg_solve_meanzero, check_csr,
                                   complex_cn_solve, complex_solve)


def test_cg_two_by_two_oracle():
    A = as_csr(np.array([[4.0, 1.0], [1.0, 3.0]]))
    x, rep = cg_solve(A, np.array([1.0, 2.0]))
    np.testing.assert_allclose(x, [1 / 11, 7 / 11], rtol=1e-14)
    assert rep.converged and rep.iterations <= 2


def test_cg_zero_rhs_returns_zero():
    A = as_csr(sp.eye(5))
    x, rep = cg_solve(A, np.zeros(5))
    assert np.all(x == 0) and rep.iterations == 0 and rep.converged


def test_cg_reports_non_convergence():
    rng = np.random.default_rng(0)
    B = rng.normal(size=(40, 40))
    A = as_csr(B @ B.T + 1e-6 * np.eye(40))
    x, rep = cg_solve(A, rng.normal(size=40), tol=1e-15, max_iter=3)
    assert not rep.converged and rep.iterations == 3


def test_cg_rejects_bad_tolerance():
    with pytest.raises(ValueError):
        cg_solve(as_csr(sp.eye(2)), np.ones(2), tol=0)


@given(seed=st.integers(0, 10_000), n=st.integers(2, 30))
@settings(max_examples=30, deadline=None)
def test_cg_matches_dense_solve(seed, n):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(n, n))
    A = B @ B.T + n * np.eye(n)
    b = rng.normal(size=n)
    x, rep = cg_solve(as_csr(A), b, tol=1e-13)
    assert rep.converged
    np.testing.assert_allclose(x, np.linalg.solve(A, b), rtol=1e-9, atol=1e-12)


def _periodic_laplacian(n):
    main = 2 * np.ones(n)
    L = sp.diags([main, -np.ones(n - 1), -np.ones(n - 1)], [0, 1, -1]).tolil()
    L[0, n - 1] = L[n - 1, 0] = -1
    return as_csr(L)


def test_meanzero_solve_deflates_incompatible_rhs():
    n = 16
    L = _periodic_laplacian(n)
    M = as_csr(sp.eye(n) / n)
    b = np.sin(2 * np.pi * np.arange(n) / n) + 0.3  # constant part is incompatible
    x, rep = cg_solve_meanzero(L, b, M)
    assert rep.converged
    assert abs(M @ x @ np.ones(n)) < 1e-14
    b_proj = b - b.mean()
    np.testing.assert_allclose(L @ x, b_proj, atol=1e-11)


def test_meanzero_constant_rhs_gives_zero():
    n = 8
    x, rep = cg_solve_meanzero(_periodic_laplacian(n), np.ones(n), as_csr(sp.eye(n)))
    assert np.all(x == 0) and rep.converged


@given(seed=st.integers(0, 10_000), n=st.integers(2, 40), scale=st.floats(1e-3, 1e3))
@settings(max_examples=30, deadline=None)
def test_complex_cn_solve_matches_dense_lu(seed, n, scale):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(n, n))
    M = B @ B.T + n * np.eye(n)
    C = rng.normal(size=(n, n))
    S = scale * (C + C.T)
    rhs = rng.normal(size=n) + 1j * rng.normal(size=n)
    x, rep = complex_cn_solve(as_csr(M), as_csr(S), rhs, tol=1e-13)
    assert rep.converged
    exact = np.linalg.solve(M + 1j * S, rhs)
    assert np.linalg.norm(x - exact) <= 1e-9 * np.linalg.norm(exact)
    # equivalent real block system
    big = np.block([[M, -S], [S, M]])
    xr = np.linalg.solve(big, np.concatenate([rhs.real, rhs.imag]))
    np.testing.assert_allclose(np.concatenate([x.real, x.imag]), xr, rtol=1e-7, atol=1e-9)


def test_complex_solve_zero_rhs():
    A = as_csr(sp.eye(3, dtype=complex))
    x, rep = complex_solve(A, np.zeros(3))
    assert np.all(x == 0) and rep.iterations == 0


def test_check_csr_detects_broken_structure():
    A = as_csr(np.array([[1.0, 2.0], [0.0, 3.0]]))
    check_csr(A)
    bad = A.copy()
    bad.indices = bad.indices[::-1].copy()
    with pytest.raises(ValueError):
        check_csr(bad)
    bad = A.copy()
    bad.data[0] = np.nan
    with pytest.raises(ValueError):
        check_csr(bad)


def test_solver_error_message_carries_stage():
    from sprelax.sparse_linalg import SolveReport
    err = SolverError("no luck", SolveReport(7, 1e-3, False), stage="potential solve")
    assert "potential solve" in str(err) and "7 iterations" in str(err)
