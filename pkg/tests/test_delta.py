"""Determinant-operator linearization: structure, cap, and oracle quality."""
import numpy as np
import pytest

import mepnl
from mepnl import delta, problems
from mepnl.errors import SingularProblem, TooLarge


def random_problem(n=4, m=3, seed=0):
    return problems.gen_random(n, m, seed=seed, alphas=(1.0, 1.0, 1.0),
                               betas=(1.0, 1.0, 1.0))


def test_assemble_shapes_and_definitions():
    p = random_problem(3, 2, seed=5)
    dp = delta.assemble(p)
    nm = p.n * p.m
    assert dp.delta0.shape == (nm, nm)
    assert dp.delta1.shape == (nm, nm)
    assert dp.delta2.shape == (nm, nm)
    A1, A2, A3 = (np.asarray(M) for M in (p.A1, p.A2, p.A3))
    np.testing.assert_array_equal(dp.delta0, np.kron(p.B2, A3) - np.kron(p.B3, A2))
    np.testing.assert_array_equal(dp.delta1, np.kron(p.B3, A1) - np.kron(p.B1, A3))
    np.testing.assert_array_equal(dp.delta2, np.kron(p.B1, A2) - np.kron(p.B2, A1))


def test_quadratic_coupling_block_structure():
    # the 2x2 coupling that embeds a quadratic matrix polynomial produces
    # determinant operators with a known block layout
    rng = np.random.default_rng(3)
    n = 4
    A1, A2, A3 = (rng.standard_normal((n, n)) for _ in range(3))
    p = problems.gen_qep(A1, A2, A3)
    dp = delta.assemble(p)
    Z = np.zeros((n, n))
    d1_expected = np.block([[-A1, Z], [Z, A3]])
    d0_expected = np.block([[A2, A3], [A3, Z]])
    np.testing.assert_allclose(dp.delta1, d1_expected, atol=1e-14)
    np.testing.assert_allclose(dp.delta0, d0_expected, atol=1e-14)


def test_solve_residuals_on_random_problems():
    for seed in (0, 1, 2):
        p = random_problem(4, 3, seed=seed)
        quads = delta.solve(p)
        assert quads, f"no quadruplets for seed {seed}"
        for q in quads:
            r = mepnl.residuals(p, q)
            assert r.res_a <= 1e-8
            assert r.res_b <= 1e-8


def test_solve_matches_companion_qep():
    # independent route: (A1 + lam A2 + lam^2 A3) x = 0 via the standard
    # companion linearization, compared against the determinant operators
    # applied to the quadratic coupling
    rng = np.random.default_rng(11)
    n = 4
    A1, A2, A3 = (rng.standard_normal((n, n)) for _ in range(3))
    p = problems.gen_qep(A1, A2, A3)
    quads = delta.solve(p)

    eye = np.eye(n)
    Z = np.zeros((n, n))
    C1 = np.block([[Z, eye], [-A1, -A2]])
    C2 = np.block([[eye, Z], [Z, A3]])
    companion = [z for z in np.linalg.eigvals(np.linalg.solve(C2, C1))
                 if np.isfinite(z)]

    # conjugate pairs make sorted comparisons order-unstable; match greedily
    lams = [q.lam for q in quads]
    assert len(lams) == len(companion) == 2 * n
    for z in companion:
        best = min(lams, key=lambda w: abs(w - z))
        assert abs(best - z) <= 1e-8
        lams.remove(best)
    for q in quads:
        assert q.mu == pytest.approx(q.lam ** 2, abs=1e-8)


def test_cap_enforced_and_env_override(monkeypatch):
    p = random_problem(4, 3, seed=7)
    with pytest.raises(TooLarge):
        delta.assemble(p, cap=11)
    monkeypatch.setenv(delta.CAP_ENV, "11")
    assert delta.size_cap() == 11
    with pytest.raises(TooLarge):
        delta.solve(p)
    monkeypatch.setenv(delta.CAP_ENV, "12")
    assert delta.solve(p)
    monkeypatch.setenv(delta.CAP_ENV, "twelve")
    with pytest.raises(ValueError):
        delta.size_cap()


def test_singular_problem_detected():
    # B2 = B3 = 0 makes delta0 identically zero: maximally singular
    rng = np.random.default_rng(2)
    n, m = 3, 2
    A = [rng.standard_normal((n, n)) for _ in range(3)]
    p = mepnl.TwoParProblem(A[0], A[1], A[2],
                            rng.standard_normal((m, m)),
                            np.zeros((m, m)), np.zeros((m, m)),
                            np.ones(m))
    with pytest.raises(SingularProblem):
        delta.solve(p)


def test_sparse_inputs_accepted():
    import scipy.sparse as sp

    p = random_problem(4, 2, seed=9)
    p2 = mepnl.TwoParProblem(sp.csr_matrix(p.A1), sp.csr_matrix(p.A2),
                             sp.csr_matrix(p.A3), p.B1, p.B2, p.B3, p.c)
    q1 = delta.solve(p)
    q2 = delta.solve(p2)
    assert len(q1) == len(q2)
    for a, b in zip(q1, q2):
        assert a.lam == pytest.approx(b.lam, abs=1e-10)
        assert a.mu == pytest.approx(b.mu, abs=1e-10)
