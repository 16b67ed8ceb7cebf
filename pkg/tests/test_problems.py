"""Generators: random, quadratic, square-root, Helmholtz; tabulation; flags."""
import numpy as np
import pytest
import scipy.sparse as sp

import mepnl
from mepnl import delta, nep, pencil, problems, solvers


def test_gen_random_reproducible_and_scaled():
    p1 = problems.gen_random(5, 3, seed=42)
    p2 = problems.gen_random(5, 3, seed=42)
    for name in ("A1", "A2", "A3", "B1", "B2", "B3", "c"):
        np.testing.assert_array_equal(getattr(p1, name), getattr(p2, name))
    assert p1.label == "random(n=5,m=3,seed=42)"
    # alphas scale the corresponding matrix linearly, nothing else moves
    p3 = problems.gen_random(5, 3, seed=42, alphas=(1.0, 10.0 / 500.0, 1.0 / 50.0))
    np.testing.assert_allclose(p3.A2, 10.0 * np.asarray(p1.A2), rtol=1e-13)
    np.testing.assert_array_equal(p3.A1, p1.A1)
    np.testing.assert_array_equal(p3.B3, p1.B3)


def test_gen_random_rejects_empty():
    with pytest.raises(ValueError):
        problems.gen_random(0, 3, seed=1)


def test_gen_qep_has_one_finite_branch():
    rng = np.random.default_rng(0)
    p = problems.gen_qep(*(rng.standard_normal((3, 3)) for _ in range(3)))
    pts, n_inf = pencil.eigenpairs_at(p, 0.8, include_infinite=True)
    assert len(pts) == 1
    assert n_inf == 1
    assert pts[0].mu == pytest.approx(0.64, abs=1e-12)
    np.testing.assert_allclose(pts[0].y, [1.0, 0.8], atol=1e-12)


def test_sqrt_branches_match_closed_form():
    rng = np.random.default_rng(1)
    p, bf = problems.gen_sqrt_nep(*(rng.standard_normal((3, 3)) for _ in range(3)))
    grid = np.linspace(-0.9, 0.9, 20)
    table = problems.tabulate_branches(p, grid)
    assert table.gaps == []
    # at the reference the +root has the smaller magnitude, so branch 0
    got0, got1 = table.column(0), table.column(1)
    want0 = np.array([bf(l, +1) for l in grid])
    want1 = np.array([bf(l, -1) for l in grid])
    np.testing.assert_allclose(got0, want0, atol=1e-10)
    np.testing.assert_allclose(got1, want1, atol=1e-10)


def test_pure_sqrt_eigenvector_closed_form():
    # with a = d = 0 the branches are mu = +-sqrt((b+lam*e)(c+lam*f)) and
    # y = (sqrt(b+lam*e), -sqrt(c+lam*f)) is an exact null vector at
    # mu = sqrt(b+lam*e)*sqrt(c+lam*f)
    rng = np.random.default_rng(2)
    b, c, e, f = 2.0, -1.0, 2.0, 1.0
    p, bf = problems.gen_sqrt_nep(
        *(rng.standard_normal((3, 3)) for _ in range(3)),
        a=0.0, b=b, c=c, d=0.0, e=e, f=f)
    for lam in np.linspace(-0.8, 0.8, 10):
        u, v = b + lam * e, c + lam * f
        su, sv = np.emath.sqrt(u), np.emath.sqrt(v)
        mu = su * sv
        y = np.array([su, -sv])
        B = p.eval_b(lam, mu)
        assert np.linalg.norm(B @ y) <= 1e-12 * np.linalg.norm(y)
        assert min(abs(mu - bf(lam, +1)), abs(mu - bf(lam, -1))) <= 1e-12


def test_helmholtz_config_validation():
    with pytest.raises(ValueError):
        problems.HelmholtzConfig(x0=2.0, x1=1.0).validate()
    with pytest.raises(ValueError):
        problems.HelmholtzConfig(n=2).validate()
    with pytest.raises(ValueError):
        problems.HelmholtzConfig(m=2).validate()
    cfg = problems.HelmholtzConfig(kappa_a=2.0)
    cfg.validate()
    np.testing.assert_array_equal(cfg.kappa_a_values([0.0, 1.0]), [2.0, 2.0])
    assert np.all(np.isfinite(cfg.kappa_b_values(np.linspace(4, 5, 50))))


def test_helmholtz_default_profiles():
    x = np.linspace(0.0, 4.0, 101)
    ka = problems.default_kappa_a(x)
    assert set(np.round(np.unique(ka), 10)) == {1.2, 2.8}
    kb = problems.default_kappa_b(np.linspace(4.0, 5.0, 101))
    assert np.all(np.isfinite(kb))
    assert kb[0] == pytest.approx(1.0)


def test_helmholtz_assembly_structure():
    cfg = problems.HelmholtzConfig(x0=0.0, x1=1.0, x2=1.5, n=41, m=8,
                                   kappa_a=2.0, kappa_b=2.0, scaling=False)
    disc = problems.gen_helmholtz(cfg)
    p = disc.problem
    A1, A2, A3 = (np.asarray(M) for M in (p.A1, p.A2, p.A3))
    n = cfg.n
    # boundary closure row: plain Dirichlet identity, no lam or mu coupling
    assert A1[0, 0] == 1.0 and np.count_nonzero(A1[0]) == 1
    assert np.count_nonzero(A2[0]) == 0 and np.count_nonzero(A3[0]) == 0
    # the lam term acts on interior samples only
    diag2 = np.diag(A2)
    assert diag2[0] == 0 and diag2[-1] == 0
    assert np.all(diag2[1:-1] == -1.0)
    # the mu coupling lives in the last row alone
    nz = np.nonzero(A3)
    assert nz[0].tolist() == [n - 1] and nz[1].tolist() == [n - 1]
    assert A3[n - 1, n - 1] == -1.0
    # small side: mu enters through the corner entry, lam on the interior
    B2, B3 = p.B2, p.B3
    assert np.count_nonzero(B3) == 1 and B3[0, 0] == -1.0
    assert np.all(np.diag(B2)[1:-1] == -1.0)
    np.testing.assert_array_equal(p.c, np.eye(cfg.m)[0])


def test_helmholtz_sparse_threshold():
    small = problems.gen_helmholtz(problems.HelmholtzConfig(n=41, m=6))
    assert not sp.issparse(small.problem.A1)
    big = problems.gen_helmholtz(problems.HelmholtzConfig(n=600, m=6))
    assert sp.issparse(big.problem.A1)


def helmholtz_eigen(cfg, lam0):
    disc = problems.gen_helmholtz(cfg)
    view = nep.NepView(disc.problem, branch_id=0, reference_lam=lam0)
    quad, trace = solvers.augmented_newton(view, lam0, np.ones(cfg.n))
    assert trace.converged
    return disc, quad


def test_helmholtz_matches_separated_solution():
    kappa0 = 2.0
    cfg = problems.HelmholtzConfig(x0=0.0, x1=1.0, x2=1.5, n=201, m=12,
                                   kappa_a=kappa0, kappa_b=kappa0)
    lam1 = problems.helmholtz_analytic_eigenvalues(kappa0, 1.5, 1)[0]
    disc, quad = helmholtz_eigen(cfg, lam1 + 0.01)
    assert abs(quad.lam - lam1) <= 1e-3
    mu1 = problems.helmholtz_analytic_mu(kappa0, quad.lam, 1.0)
    assert abs(quad.mu - mu1) / abs(mu1) <= 1e-3
    assert disc.interface_mismatch(quad) <= 1e-4
    xs, us = disc.reconstruct(quad)
    assert xs.shape == us.shape and xs.size == cfg.n + cfg.m - 1
    assert np.all(np.diff(xs) > 0)


def test_helmholtz_scaling_does_not_move_eigenvalues():
    kappa0 = 2.0
    lam1 = problems.helmholtz_analytic_eigenvalues(kappa0, 1.5, 1)[0]
    quads = []
    for scaling in (True, False):
        cfg = problems.HelmholtzConfig(x0=0.0, x1=1.0, x2=1.5, n=201, m=12,
                                       kappa_a=kappa0, kappa_b=kappa0,
                                       scaling=scaling)
        quads.append(helmholtz_eigen(cfg, lam1 + 0.01)[1])
    assert abs(quads[0].lam - quads[1].lam) <= 1e-8
    assert abs(quads[0].mu - quads[1].mu) <= 1e-8


def test_tabulate_qep_square_branch():
    rng = np.random.default_rng(3)
    p = problems.gen_qep(*(rng.standard_normal((3, 3)) for _ in range(3)))
    grid = np.linspace(-1.0, 1.0, 21)
    table = problems.tabulate_branches(p, grid)
    assert table.branch_ids == (0,)
    assert table.gaps == []
    np.testing.assert_allclose(table.column(0), grid.astype(complex) ** 2,
                               atol=1e-10)
    rows = table.rows()
    assert len(rows) == 21 and rows[0][0] == -1.0


def test_tabulate_unknown_branch():
    rng = np.random.default_rng(4)
    p = problems.gen_qep(*(rng.standard_normal((3, 3)) for _ in range(3)))
    with pytest.raises(KeyError):
        problems.tabulate_branches(p, np.linspace(-1, 1, 5), branch_ids=(3,))


def synthetic_table(values, gaps=()):
    values = np.asarray(values, dtype=np.complex128)[:, None]
    grid = np.linspace(0.0, values.size - 1.0, values.size).astype(complex)
    return problems.BranchTable(grid, (0,), values, list(gaps))


def test_flags_pole_signature():
    grid = np.linspace(0.0, 10.0, 101)
    vals = 1.0 / (grid - 5.05)
    table = problems.BranchTable(grid.astype(complex), (0,),
                                 vals.astype(complex)[:, None], [])
    found = problems.flag_singularities(table)
    assert len(found) == 1
    assert found[0].kind == "pole"
    assert found[0].contains(5.05)
    assert not found[0].contains(2.0)


def test_flags_gap_and_spike_signatures():
    vals = np.ones(11)
    vals[3] = np.nan
    vals[7] = 50.0
    table = synthetic_table(vals, gaps=[(3, 0, "NoFiniteEigenvalue: test")])
    found = problems.flag_singularities(table)
    kinds = sorted(f.kind for f in found)
    assert kinds == ["gap", "spike"]
    gap = next(f for f in found if f.kind == "gap")
    assert gap.contains(3.0)


def test_flags_adjacent_marks_merge_with_priority():
    # NaN next to a sign flip collapses to one interval reported as a pole
    vals = np.array([1.0, 1.0, np.nan, 6.0, -6.0, 1.0, 1.0])
    found = problems.flag_singularities(synthetic_table(vals))
    assert len(found) == 1
    assert found[0].kind == "pole"
    assert found[0].contains(2.0) and found[0].contains(4.0)


def test_flags_quiet_on_smooth_data():
    grid = np.linspace(0.0, 10.0, 51)
    vals = np.sin(grid) + 2.0
    table = problems.BranchTable(grid.astype(complex), (0,),
                                 vals.astype(complex)[:, None], [])
    assert problems.flag_singularities(table) == []
