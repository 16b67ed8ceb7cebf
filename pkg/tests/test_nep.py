"""Branch-bound nonlinear operator view: evaluation, cache, derivatives."""
import time

import numpy as np
import pytest

import mepnl
from mepnl import nep, problems
from mepnl.errors import ConvergenceFailure, ShiftIsEigenvalue


def qep_view(n=5, seed=0):
    rng = np.random.default_rng(seed)
    A1, A2, A3 = (rng.standard_normal((n, n)) for _ in range(3))
    p = problems.gen_qep(A1, A2, A3)
    view = nep.NepView(p, branch_id=0, reference_lam=0.1)
    return p, view, (A1, A2, A3)


def test_eval_m_matches_quadratic_polynomial():
    p, view, (A1, A2, A3) = qep_view(seed=4)
    for lam in (0.3, -0.7 + 0.2j, 1.1j):
        op = view.eval_m(lam)
        assert op.mu == pytest.approx(lam ** 2, abs=1e-12)
        expected = A1 + lam * A2 + lam ** 2 * A3
        np.testing.assert_allclose(op.matrix, expected, atol=1e-12)


def test_solve_shifted_inverts_operator():
    p, view, _ = qep_view(seed=1)
    rng = np.random.default_rng(10)
    rhs = rng.standard_normal(p.n) + 1j * rng.standard_normal(p.n)
    sigma = 0.4 + 0.1j
    u = view.solve_shifted(sigma, rhs)
    op = view.eval_m(sigma)
    np.testing.assert_allclose(op.apply(u), rhs, atol=1e-10)


def test_cache_counters_and_lru_eviction():
    p, view, _ = qep_view(seed=2)
    shifts = [0.1, 0.2, 0.3, 0.4, 0.5]
    rhs = np.ones(p.n)
    for s in shifts[:4]:
        view.solve_shifted(s, rhs)
    assert (view.cache_hits, view.cache_misses) == (0, 4)
    # touching the oldest entry must protect it from the next eviction
    view.solve_shifted(shifts[0], rhs)
    assert view.cache_hits == 1
    view.solve_shifted(shifts[4], rhs)  # evicts 0.2, not 0.1
    assert view.cache_misses == 5
    view.solve_shifted(shifts[0], rhs)
    assert view.cache_hits == 2
    view.solve_shifted(shifts[1], rhs)  # was evicted: a fresh factorization
    assert view.cache_misses == 6


def test_shift_at_exact_singularity_raises():
    rng = np.random.default_rng(6)
    n, m = 4, 2
    A1 = np.diag([0.0, 1.0, 2.0, 3.0])  # singular on purpose
    Z = np.zeros((n, n))
    p = mepnl.TwoParProblem(A1, Z, Z,
                            np.diag([1.0, 2.0]), np.eye(m), np.eye(m),
                            np.ones(m))
    view = nep.NepView(p, branch_id=0)
    with pytest.raises(ShiftIsEigenvalue):
        view.solve_shifted(0.0, np.ones(n))


def test_derivative_sum_apply_quadratic_branch():
    p, view, (A1, A2, A3) = qep_view(seed=3)
    rng = np.random.default_rng(20)
    xs = [rng.standard_normal(p.n) for _ in range(3)]
    sigma = 0.6 - 0.2j
    got = view.derivative_sum_apply(sigma, xs)
    # on this branch g(lam) = lam^2: g' = 2 sigma, g'' = 2, higher ones vanish
    rhs = A2 @ xs[0] + 2 * sigma * (A3 @ xs[0]) + 2.0 * (A3 @ xs[1])
    m_sigma = A1 + sigma * A2 + sigma ** 2 * A3
    np.testing.assert_allclose(got, np.linalg.solve(m_sigma, rhs), atol=1e-10)
    with pytest.raises(ValueError):
        view.derivative_sum_apply(sigma, [])


def test_left_vector_quality_at_eigenvalue():
    p = problems.gen_random(5, 2, seed=8, alphas=(1.0, 1.0, 1.0),
                            betas=(1.0, 1.0, 1.0))
    quads = mepnl.delta.solve(p)
    assert quads
    q = quads[len(quads) // 2]
    view = nep.NepView(p, branch_id=0, reference_lam=q.lam)
    v = view.left_vector(q.lam, tol=1e-8)
    op = view.eval_m(q.lam)
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)
    m_norm = np.linalg.norm(np.asarray(op.matrix), "fro")
    assert np.linalg.norm(np.conj(op.matrix.T) @ v) <= 1e-8 * m_norm


def test_left_vector_far_from_spectrum_fails():
    p, view, _ = qep_view(seed=5)
    with pytest.raises(ConvergenceFailure):
        view.left_vector(1e4, tol=1e-10, maxit=10)


def test_cached_solve_is_much_faster_sparse():
    cfg = problems.HelmholtzConfig(n=5000, m=10,
                                   kappa_a=lambda x: np.full_like(x, 2.0),
                                   kappa_b=lambda x: np.full_like(x, 2.0))
    disc = problems.gen_helmholtz(cfg)
    rhs = np.ones(disc.problem.n)
    sigma = 0.37

    # a cold solve factorizes; time it on a fresh view each repetition
    cold = []
    for _ in range(5):
        view = nep.NepView(disc.problem, branch_id=0, reference_lam=0.0)
        cold.append(_timed(view, sigma, rhs))
        assert view.cache_misses == 1
    warm = [_timed(view, sigma, rhs) for _ in range(5)]
    assert view.cache_misses == 1 and view.cache_hits == 5
    ratio = min(cold) / min(warm)
    assert ratio >= 10.0, f"speedup only {ratio:.1f}x"


def _timed(view, sigma, rhs):
    t0 = time.perf_counter()
    view.solve_shifted(sigma, rhs)
    return time.perf_counter() - t0


def test_unknown_branch_rejected():
    p, _, _ = qep_view(seed=7)
    with pytest.raises(KeyError):
        nep.NepView(p, branch_id=5, reference_lam=0.1)
