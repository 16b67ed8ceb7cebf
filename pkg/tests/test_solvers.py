"""Newton and residual inverse iteration against the dense oracle."""
import numpy as np
import pytest

import mepnl
from mepnl import delta, nep, problems, solvers
from mepnl.errors import ConvergenceFailure, DegenerateProjection


def make_problem(seed=0, n=8, m=3):
    return problems.gen_random(n, m, seed=seed, alphas=(1.0, 1.0, 1.0),
                               betas=(1.0, 1.0, 1.0))


def pick_isolated(quads):
    """The quadruplet whose lam is farthest from the rest of the spectrum."""
    lams = [q.lam for q in quads]

    def isolation(q):
        return min(abs(q.lam - z) for z in lams if z != q.lam)

    return max(quads, key=isolation)


def branch_view(problem, lam):
    """A NepView whose tracked branch passes through (lam, mu) of a quad."""
    pts = mepnl.pencil.eigenpairs_at(problem, lam)
    return nep.NepView(problem, branch_id=0, reference_lam=lam), pts


def view_through(problem, quad):
    """Bind the branch that carries quad's mu at quad's lam."""
    pts = mepnl.pencil.eigenpairs_at(problem, quad.lam)
    bid = min(range(len(pts)), key=lambda i: abs(pts[i].mu - quad.mu))
    state = mepnl.pencil.BranchState.at_reference(problem, quad.lam)
    return nep.NepView(problem, branch_id=bid, reference_lam=quad.lam, state=state)


def test_newton_converges_and_trace_is_consistent():
    p = make_problem(seed=1)
    quad = pick_isolated(delta.solve(p))
    view = view_through(p, quad)
    lam0 = quad.lam + 1e-3
    x0 = quad.x + 1e-3 * np.ones(p.n)
    got, trace = solvers.augmented_newton(view, lam0, x0)
    assert trace.converged
    assert trace.iterations <= 10
    assert abs(got.lam - quad.lam) <= 1e-8
    assert abs(got.mu - quad.mu) <= 1e-8
    assert got.residuals.res_a <= 1e-10
    # the eliminated equation is satisfied through the branch at every iterate
    assert max(trace.res_b) <= 1e-10
    # stored eigenvalue path and step sizes must agree exactly
    for k, alpha in enumerate(trace.alpha):
        assert trace.lam[k + 1] == trace.lam[k] - alpha


def test_newton_quadratic_tail():
    p = make_problem(seed=2)
    quad = pick_isolated(delta.solve(p))
    view = view_through(p, quad)
    _, trace = solvers.augmented_newton(view, quad.lam + 1e-2,
                                        quad.x + 1e-2 * np.ones(p.n))
    assert trace.converged
    res = trace.res_a
    checked = 0
    for rk, rk1 in zip(res, res[1:]):
        if rk <= 1e-3 and rk1 > 1e-13:
            assert rk1 <= 100 * rk ** 2, f"step {rk:.2e} -> {rk1:.2e} not quadratic"
            checked += 1
    assert checked >= 1


def test_newton_normalization_held():
    p = make_problem(seed=3)
    quad = pick_isolated(delta.solve(p))
    view = view_through(p, quad)
    rng = np.random.default_rng(5)
    d = rng.standard_normal(p.n) + 1j * rng.standard_normal(p.n)
    cfg = solvers.SolverConfig(d=d)
    got, trace = solvers.augmented_newton(view, quad.lam + 1e-3,
                                          quad.x + 1e-3, cfg)
    assert trace.converged
    assert d @ got.x == pytest.approx(1.0, abs=1e-10)


def test_newton_rejects_annihilating_functional():
    p = make_problem(seed=4)
    quad = pick_isolated(delta.solve(p))
    view = view_through(p, quad)
    x0 = np.ones(p.n)
    d = np.zeros(p.n)
    d[0], d[1] = 1.0, -1.0  # d^T x0 = 0
    with pytest.raises(ConvergenceFailure):
        solvers.augmented_newton(view, quad.lam + 1e-3, x0,
                                 solvers.SolverConfig(d=d))


def test_newton_maxit_reported_not_raised():
    p = make_problem(seed=5)
    quad = pick_isolated(delta.solve(p))
    view = view_through(p, quad)
    # unreachable tolerance: the run must stop at maxit without raising
    cfg = solvers.SolverConfig(tol=1e-30, maxit=2)
    _, trace = solvers.augmented_newton(view, quad.lam + 1e-2,
                                        quad.x + 1e-2, cfg)
    assert trace.termination == "maxit"
    assert not trace.converged
    assert trace.iterations == 3  # initial point plus two steps


def test_rayleigh_candidates_satisfy_small_equation_exactly():
    p = make_problem(seed=6)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(p.n) + 1j * rng.standard_normal(p.n)
    w = rng.standard_normal(p.n) + 1j * rng.standard_normal(p.n)
    cands = solvers.rayleigh_candidates(p, v, w)
    assert cands
    for lam, mu, y in cands:
        rb = np.linalg.norm(p.eval_b(lam, mu) @ y)
        rb /= p.scale_b(lam, mu) * np.linalg.norm(y)
        assert rb <= 1e-12
    mags = [abs(lam) for lam, _, _ in cands]
    assert mags == sorted(mags)


def test_rayleigh_degenerate_projection():
    rng = np.random.default_rng(1)
    n, m = 4, 2
    p = mepnl.TwoParProblem(
        rng.standard_normal((n, n)), rng.standard_normal((n, n)),
        np.zeros((n, n)),
        rng.standard_normal((m, m)), rng.standard_normal((m, m)), np.eye(m),
        np.ones(m))
    with pytest.raises(DegenerateProjection):
        solvers.rayleigh_candidates(p, np.ones(n), np.ones(n))


def test_rayleigh_gep_select_modes():
    p = make_problem(seed=7)
    rng = np.random.default_rng(2)
    v = rng.standard_normal(p.n)
    w = rng.standard_normal(p.n)
    cands = solvers.rayleigh_candidates(p, v, w)
    assert len(cands) >= 2
    target = cands[-1][0]
    lam, mu, y = solvers.rayleigh_gep(p, v, w, target + 1e-6)
    assert lam == target
    lam2, _, _ = solvers.rayleigh_gep(
        p, v, w, lambda lams: int(np.argmax([z.real for z in lams])))
    assert lam2 == max((c[0] for c in cands), key=lambda z: z.real)


def test_resinv_converges_with_single_factorization():
    p = make_problem(seed=8)
    quad = pick_isolated(delta.solve(p))
    view = view_through(p, quad)
    sigma = quad.lam + 0.02
    cfg = solvers.SolverConfig(sigma=sigma, tol=1e-10, maxit=60)
    x0 = quad.x + 0.05 * np.ones(p.n)
    got, trace = solvers.resinv(view, x0, cfg)
    assert trace.converged
    assert abs(got.lam - quad.lam) <= 1e-8
    assert view.cache_misses == 1, "shifted operator must be factorized once"
    # small equation holds exactly at every iterate by construction
    assert max(trace.res_b) <= 1e-10
    # linear convergence with a decent contraction factor
    res = trace.res_a
    ratios = [b / a for a, b in zip(res, res[1:]) if a > 1e-13 and b > 1e-14]
    assert ratios and max(ratios) < 0.9


def test_resinv_requires_sigma_and_flags_maxit():
    p = make_problem(seed=9)
    quad = pick_isolated(delta.solve(p))
    view = view_through(p, quad)
    with pytest.raises(ValueError):
        solvers.resinv(view, np.ones(p.n), solvers.SolverConfig())
    cfg = solvers.SolverConfig(sigma=quad.lam + 0.02, tol=0.0, maxit=4)
    _, trace = solvers.resinv(view, quad.x + 0.05, cfg)
    assert trace.termination == "maxit"
    assert not trace.converged
    assert trace.iterations == 5


def test_resinv_accepts_explicit_projection_vector():
    p = make_problem(seed=10)
    quad = pick_isolated(delta.solve(p))
    view = view_through(p, quad)
    sigma = quad.lam + 0.02
    x0 = quad.x + 0.05 * np.ones(p.n)
    # hand over the adjoint-solve vector explicitly instead of relying on
    # the in-solver default; the config path must be honored
    fact, _ = view.factorization(sigma)
    w = fact.solve(x0.astype(np.complex128), adjoint=True)
    cfg = solvers.SolverConfig(sigma=sigma, maxit=80,
                               w_proj=w / np.linalg.norm(w))
    got, trace = solvers.resinv(view, x0, cfg)
    assert trace.converged
    assert abs(got.lam - quad.lam) <= 1e-8


def test_projection_keeps_exact_eigenvalue():
    p = make_problem(seed=11)
    quad = pick_isolated(delta.solve(p))
    rng = np.random.default_rng(4)
    extra = rng.standard_normal((p.n, 2)) + 1j * rng.standard_normal((p.n, 2))
    V, _ = np.linalg.qr(np.column_stack([quad.x, extra]))
    small = solvers.project_2ep(p, V, V)
    assert small.n == 3 and small.m == p.m
    assert small.label.endswith(":projected")
    ritz = delta.solve(small)
    best = min(ritz, key=lambda q: abs(q.lam - quad.lam))
    assert abs(best.lam - quad.lam) <= 1e-7
    assert abs(best.mu - quad.mu) <= 1e-6


def test_projection_input_validation():
    p = make_problem(seed=12)
    with pytest.raises(ValueError):
        solvers.project_2ep(p, np.ones((p.n, 2)), np.ones((p.n, 2)))
    V, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((p.n, 2)))
    with pytest.raises(ValueError):
        solvers.project_2ep(p, V, np.ones((p.n, 3)))
