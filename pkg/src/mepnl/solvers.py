"""Eigenvalue solvers for the branch-implicit nonlinear problem.

Two iterations on M(lam) x = 0 for one tracked branch mu = g(lam):

* augmented_newton: a Newton step on the bordered system, one linear solve
  with M(lam_k) per iteration, locally quadratic at simple eigenvalues;
* resinv: residual inverse iteration with a single factorization of
  M(sigma), the eigenvalue update coming from a scalar-projected small
  problem, locally linear with rate proportional to |sigma - lam*|.

Plus the scalar/subspace projections both of them lean on.
"""
from __future__ import annotations

import dataclasses
import time

import numpy as np

from . import _linalg, pencil
from .core import Quadruplet, ResidualRecord, TwoParProblem
from .errors import ConvergenceFailure, DegenerateProjection
from .nep import NepView

# |w^T A3 v| below this (times norm scale) makes the scalar projection useless.
TOL_PROJECTION = 1e-14


@dataclasses.dataclass
class SolverConfig:
    """Knobs shared by the iterative solvers.

    tol is the relative residual target in the large equation; d the Newton
    normalization functional (default conj(x0)/||x0||^2, so d^T x0 = 1);
    w_proj the fixed left projection vector of resinv (default
    M(sigma)^{-H} x0, normalized); sigma the resinv shift.
    """

    tol: float = 1e-10
    maxit: int = 100
    d: np.ndarray | None = None
    w_proj: np.ndarray | None = None
    sigma: complex | None = None


@dataclasses.dataclass
class SolveTrace:
    """Per-iteration record of a solver run."""

    lam: list = dataclasses.field(default_factory=list)
    mu: list = dataclasses.field(default_factory=list)
    res_a: list = dataclasses.field(default_factory=list)
    res_b: list = dataclasses.field(default_factory=list)
    alpha: list = dataclasses.field(default_factory=list)  # Newton steps
    seconds: list = dataclasses.field(default_factory=list)
    termination: str = ""

    @property
    def converged(self) -> bool:
        return self.termination == "converged"

    @property
    def iterations(self) -> int:
        return len(self.lam)

    def rows(self):
        """(iter, lam, mu, res_a, res_b, seconds) tuples for reporting."""
        return [
            (k, self.lam[k], self.mu[k], self.res_a[k], self.res_b[k], self.seconds[k])
            for k in range(len(self.lam))
        ]


def _res_a(problem, lam, mu, x):
    r = np.linalg.norm(problem.eval_a(lam, mu) @ x)
    return float(r / (problem.scale_a(lam, mu) * np.linalg.norm(x)))


def _res_b(problem, lam, mu, y):
    r = np.linalg.norm(problem.eval_b(lam, mu) @ y)
    return float(r / (problem.scale_b(lam, mu) * np.linalg.norm(y)))


def augmented_newton(nep: NepView, lam0, x0, config: SolverConfig | None = None):
    """Newton iteration on the bordered system (M(lam) x, d^T x - 1) = 0.

    Per iteration: with u = M(lam_k)^{-1} M'(lam_k) x_k and
    alpha_k = 1/(d^T u), update x_{k+1} = alpha_k * u and
    lam_{k+1} = lam_k - alpha_k. M'(lam) = A2 + g'(lam) A3 with g' from the
    bordered-Jacobian solve on the tracked branch; the single linear solve
    per iteration serves both updates.

    Returns (Quadruplet, SolveTrace); trace.termination is "converged" or
    "maxit" (non-convergence is reported, not raised).
    """
    if config is None:
        config = SolverConfig()
    problem = nep.problem
    x = np.asarray(x0, dtype=np.complex128).copy()
    if config.d is None:
        d = x.conj() / (np.linalg.norm(x) ** 2)
    else:
        d = np.asarray(config.d, dtype=np.complex128)
        dtx = d @ x
        if dtx == 0:
            raise ConvergenceFailure("d^T x0 = 0: starting vector not normalizable")
        x = x / dtx
    lam = complex(lam0)
    trace = SolveTrace()
    t0 = time.perf_counter()
    bp = nep.branch_point(lam)
    for k in range(config.maxit + 1):
        ra = _res_a(problem, lam, bp.mu, x)
        rb = _res_b(problem, lam, bp.mu, bp.y)
        trace.lam.append(lam)
        trace.mu.append(bp.mu)
        trace.res_a.append(ra)
        trace.res_b.append(rb)
        trace.seconds.append(time.perf_counter() - t0)
        if ra <= config.tol:
            trace.termination = "converged"
            break
        if k == config.maxit:
            trace.termination = "maxit"
            break
        gd, _ = pencil.derivatives(problem, bp, 1)
        mat = problem.eval_a(lam, bp.mu)
        fact = _linalg.Factorization(mat)
        mpx = problem.A2 @ x + gd[0] * (problem.A3 @ x)
        u = fact.solve(mpx)
        dtu = d @ u
        if dtu == 0:
            raise ConvergenceFailure(
                f"normalization functional annihilated the Newton direction "
                f"at iteration {k} (lam={lam})"
            )
        alpha = 1.0 / dtu
        trace.alpha.append(alpha)
        lam = lam - alpha
        x = alpha * u
        bp = nep.branch_point(lam)
    quad = Quadruplet(
        lam=lam, mu=bp.mu, x=x, y=bp.y,
        residuals=ResidualRecord(trace.res_a[-1], trace.res_b[-1]),
        c_normalized=not bp.c_degenerate,
    )
    return quad, trace


def rayleigh_candidates(problem: TwoParProblem, v, w):
    """All finite (lam, mu, y) of the scalar-projected problem.

    Projecting the large equation onto single vectors (w^T on the left, v on
    the right) and eliminating mu couples the scalars p_j = w^T A_j v with
    the small matrices:

        (p3 B1 - p1 B3) y = lam (p2 B3 - p3 B2) y,
        mu = -(p1 + lam p2)/p3.

    Every returned triple solves the small equation at (lam, mu) exactly.
    Raises DegenerateProjection when p3 = w^T A3 v is numerically zero.
    """
    v = np.asarray(v, dtype=np.complex128)
    w = np.asarray(w, dtype=np.complex128)
    p1 = w @ (problem.A1 @ v)
    p2 = w @ (problem.A2 @ v)
    p3 = w @ (problem.A3 @ v)
    scale = np.linalg.norm(w) * np.linalg.norm(v) * problem.norms_a[2]
    if abs(p3) <= TOL_PROJECTION * scale:
        raise DegenerateProjection(
            f"w^T A3 v = {p3:.2e} is numerically zero (scale {scale:.2e})"
        )
    P = p3 * problem.B1 - p1 * problem.B3
    Q = p2 * problem.B3 - p3 * problem.B2
    alpha, beta, vr = _linalg.geig(P, Q)
    finite = np.abs(beta) > pencil.TOL_INF * (np.abs(alpha) + np.abs(beta))
    out = []
    for idx in np.flatnonzero(finite):
        lam = complex(alpha[idx] / beta[idx])
        mu = complex(-(p1 + lam * p2) / p3)
        y, _ = pencil._normalize_y(vr[:, idx], problem.c)
        out.append((lam, mu, y))
    out.sort(key=lambda t: (abs(t[0]), t[0].real, t[0].imag))
    return out


def rayleigh_gep(problem: TwoParProblem, v, w, select):
    """One (lam, mu, y) from the scalar-projected problem.

    select is either a complex reference (the candidate nearest to it wins,
    ties broken by magnitude) or a callable mapping the candidate lam list
    to an index.
    """
    cands = rayleigh_candidates(problem, v, w)
    if not cands:
        raise DegenerateProjection("scalar-projected pencil has no finite eigenvalue")
    if callable(select):
        return cands[select([lam for lam, _, _ in cands])]
    ref = complex(select)
    return min(cands, key=lambda t: (abs(t[0] - ref), abs(t[0]), t[0].real, t[0].imag))


def resinv(nep: NepView, x0, config: SolverConfig):
    """Residual inverse iteration with a fixed shift sigma.

    M(sigma) is factorized once (through the NepView cache). Each iteration
    solves the scalar-projected small problem at the current iterate for
    (lam_{k+1}, mu_{k+1}), selecting the eigenvalue nearest the previous one
    (nearest sigma initially), then corrects
    x_{k+1} = normalize(x_k - M(sigma)^{-1} M(lam_{k+1}) x_k).

    Returns (Quadruplet, SolveTrace); non-convergence is a trace flag.
    """
    if config.sigma is None:
        raise ValueError("resinv requires config.sigma")
    problem = nep.problem
    sigma = complex(config.sigma)
    fact, _ = nep.factorization(sigma)
    x = np.asarray(x0, dtype=np.complex128).copy()
    x = x / np.linalg.norm(x)
    if config.w_proj is None:
        w = fact.solve(np.asarray(x0, dtype=np.complex128), adjoint=True)
        w = w / np.linalg.norm(w)
    else:
        w = np.asarray(config.w_proj, dtype=np.complex128)
    ref = sigma
    trace = SolveTrace()
    t0 = time.perf_counter()
    lam = sigma
    mu = 0j
    y = None
    for k in range(config.maxit + 1):
        try:
            lam, mu, y = rayleigh_gep(problem, x, w, ref)
        except DegenerateProjection as exc:
            raise DegenerateProjection(
                f"iteration {k} (lam_ref={ref}): {exc}"
            ) from exc
        ra = _res_a(problem, lam, mu, x)
        rb = _res_b(problem, lam, mu, y)
        trace.lam.append(lam)
        trace.mu.append(mu)
        trace.res_a.append(ra)
        trace.res_b.append(rb)
        trace.seconds.append(time.perf_counter() - t0)
        if ra <= config.tol:
            trace.termination = "converged"
            break
        if k == config.maxit:
            trace.termination = "maxit"
            break
        z = problem.eval_a(lam, mu) @ x
        u = x - fact.solve(z)
        nu = np.linalg.norm(u)
        if nu == 0:
            raise ConvergenceFailure(
                f"correction vanished at iteration {k} (lam={lam})"
            )
        x = u / nu
        ref = lam
    quad = Quadruplet(
        lam=lam, mu=mu, x=x, y=y,
        residuals=ResidualRecord(trace.res_a[-1], trace.res_b[-1]),
    )
    return quad, trace


def project_2ep(problem: TwoParProblem, V, W) -> TwoParProblem:
    """Petrov-Galerkin reduction of the large equation: A_j -> W^T A_j V.

    The small equation and c are untouched, so branches are shared with the
    original problem; eigenvalues of the projected problem are Ritz values.
    V and W must have orthonormal columns (p >= 1); the transpose (not the
    conjugate transpose) of W is applied, matching the scalar projection
    used inside resinv.
    """
    V = np.asarray(V, dtype=np.complex128)
    W = np.asarray(W, dtype=np.complex128)
    if V.ndim == 1:
        V = V[:, None]
    if W.ndim == 1:
        W = W[:, None]
    if V.shape != W.shape or V.shape[0] != problem.n or V.shape[1] < 1:
        raise ValueError(
            f"V and W must be n x p with p >= 1; got {V.shape} and {W.shape}"
        )
    for name, U in (("V", V), ("W", W)):
        gram = U.conj().T @ U
        if np.linalg.norm(gram - np.eye(U.shape[1])) > 1e-6:
            raise ValueError(f"columns of {name} are not orthonormal")
    proj = [W.T @ (problem.__getattribute__(f"A{j}") @ V) for j in (1, 2, 3)]
    return TwoParProblem(
        proj[0], proj[1], proj[2],
        problem.B1, problem.B2, problem.B3, problem.c,
        label=problem.label + ":projected",
    )
