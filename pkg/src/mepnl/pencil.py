"""The small lam-parametrized pencil and its eigenvalue branches.

For fixed lam the small equation is the generalized eigenvalue problem
``-(B1 + lam*B2) y = mu * B3 y``. Each finite eigenvalue, followed
continuously in lam, is a branch mu = g_i(lam): an implicitly defined,
locally analytic function wherever the eigenvalue stays simple. Branches,
their derivatives (through a bordered-Jacobian recursion), and estimates of
where they stop being analytic all live here.
"""
from __future__ import annotations

import dataclasses
from math import comb

import numpy as np
import scipy.linalg as sla
import scipy.optimize

from . import _linalg
from .core import TOL_C_DEGENERATE, TwoParProblem
from .errors import AmbiguousBranch, NoFiniteEigenvalue, SingularJacobian

# |beta| <= TOL_INF * (|alpha| + |beta|) classifies a pencil eigenvalue as infinite.
TOL_INF = 1e-10
# Two continuation candidates whose distances to the prediction differ by less
# than this (times scale) cannot be told apart.
TOL_AMBIGUOUS = 1e-12
# Eigenvalues closer than this (relative) are copies of one semisimple value.
TOL_DEDUPE = 1e-9
# sigma_min(J) / ||J|| at or below this means J is numerically singular.
TOL_SINGULAR_J = 1e-12


@dataclasses.dataclass
class BranchPoint:
    """One eigenpair of the small pencil at a fixed lam.

    y is scaled so c^T y = 1 when feasible (else unit norm, c_degenerate
    True); w is the unit left eigenvector of the same eigenvalue.
    """

    lam: complex
    mu: complex
    y: np.ndarray
    w: np.ndarray
    branch_id: int
    finite: bool = True
    c_degenerate: bool = False


def _raw_eigenpairs(B1, B2, B3, lam):
    """All finite (mu, y, w) of -(B1 + lam*B2) y = mu B3 y, plus infinite count."""
    P = -(B1 + lam * B2)
    alpha, beta, vr, vl = _linalg.geig(P, B3, left=True)
    finite = np.abs(beta) > TOL_INF * (np.abs(alpha) + np.abs(beta))
    mus = alpha[finite] / beta[finite]
    ys = vr[:, finite]
    ws = vl[:, finite]
    order = np.lexsort((mus.imag, mus.real, np.abs(mus)))
    return mus[order], ys[:, order], ws[:, order], int(np.sum(~finite))


def _normalize_y(y, c):
    cy = c @ y
    if abs(cy) > TOL_C_DEGENERATE * np.linalg.norm(c) * np.linalg.norm(y):
        return y / cy, False
    return y / np.linalg.norm(y), True


def eigenpairs_at(problem: TwoParProblem, lam, include_infinite: bool = False):
    """All finite eigenpairs of the small pencil at lam, sorted by |mu|.

    Returns a list of BranchPoint with branch_id set to the position in that
    ordering. With include_infinite=True returns (points, n_infinite) where
    n_infinite counts eigenvalues at infinity (these are never branches).
    """
    mus, ys, ws, n_inf = _raw_eigenpairs(problem.B1, problem.B2, problem.B3, lam)
    points = []
    for i, mu in enumerate(mus):
        y, degen = _normalize_y(ys[:, i], problem.c)
        w = ws[:, i]
        points.append(
            BranchPoint(
                lam=complex(lam), mu=complex(mu), y=y, w=w / np.linalg.norm(w),
                branch_id=i, c_degenerate=degen,
            )
        )
    if include_infinite:
        return points, n_inf
    return points


@dataclasses.dataclass
class JacobianJ:
    """Bordered Jacobian [[B(lam, mu), B3 y], [c^T, 0]] of the branch system.

    Nonsingular exactly when the branch is locally analytic with c^T y = 1
    enforceable; sigma_min/norm quantifies the margin.
    """

    matrix: np.ndarray
    lam: complex
    mu: complex
    sigma_min: float
    norm: float
    _lu: tuple

    def solve(self, rhs):
        if self._lu is None:
            raise SingularJacobian(
                f"bordered Jacobian singular at lam={self.lam}, mu={self.mu}"
            )
        return sla.lu_solve(self._lu, rhs)

    @property
    def singular(self) -> bool:
        return self.sigma_min <= TOL_SINGULAR_J * self.norm


def jacobian(problem: TwoParProblem, bp: BranchPoint) -> JacobianJ:
    """Assemble and factorize the bordered Jacobian at a branch point."""
    m = problem.m
    J = np.zeros((m + 1, m + 1), dtype=np.complex128)
    J[:m, :m] = problem.eval_b(bp.lam, bp.mu)
    J[:m, m] = problem.B3 @ bp.y
    J[m, :m] = problem.c
    svals = np.linalg.svd(J, compute_uv=False)
    norm = float(svals[0]) if svals.size else 0.0
    sigma_min = float(svals[-1]) if svals.size else 0.0
    lu = sla.lu_factor(J) if sigma_min > TOL_SINGULAR_J * norm else None
    return JacobianJ(J, bp.lam, bp.mu, sigma_min, norm, lu)


def derivatives(problem: TwoParProblem, bp: BranchPoint, order: int):
    """Branch derivatives g^(1..order) and y^(1..order) at a branch point.

    Solves, with the bordered Jacobian factorized once,
        J [y^(k); g^(k)] = [-b_k; 0],
        b_k = k*B2 y^(k-1) + sum_{j=1}^{k-1} C(k,j) g^(k-j) B3 y^(j),
    which is the k-th lam-derivative of the defining system (the k on the B2
    term is the Leibniz factor from d^k/dlam^k of lam*B2*y).

    Returns (g_derivs, y_derivs) with shapes (order,) and (order, m).
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    J = jacobian(problem, bp)
    if J.singular:
        raise SingularJacobian(
            f"bordered Jacobian singular at lam={bp.lam}, mu={bp.mu} "
            f"(sigma_min/norm = {J.sigma_min / max(J.norm, 1e-300):.2e})"
        )
    m = problem.m
    g = np.zeros(order + 1, dtype=np.complex128)
    y = np.zeros((order + 1, m), dtype=np.complex128)
    g[0] = bp.mu
    y[0] = bp.y
    rhs = np.zeros(m + 1, dtype=np.complex128)
    for k in range(1, order + 1):
        bk = k * (problem.B2 @ y[k - 1])
        for j in range(1, k):
            bk += comb(k, j) * g[k - j] * (problem.B3 @ y[j])
        rhs[:m] = -bk
        sol = J.solve(rhs)
        y[k] = sol[:m]
        g[k] = sol[m]
    return g[1:], y[1:]


def g_prime_closed_form(problem: TwoParProblem, bp: BranchPoint) -> complex:
    """g'(lam) = -(w^H B2 y)/(w^H B3 y), valid at simple eigenvalues."""
    w, y = bp.w, bp.y
    return complex(-(w.conj() @ (problem.B2 @ y)) / (w.conj() @ (problem.B3 @ y)))


@dataclasses.dataclass
class BranchState:
    """Branch bookkeeping: the ordering fixed at a reference lam, plus the
    most recent point of each tracked branch."""

    reference_lam: complex
    reference_points: list
    current: dict

    @classmethod
    def at_reference(cls, problem: TwoParProblem, lam) -> "BranchState":
        points = eigenpairs_at(problem, lam)
        if not points:
            raise NoFiniteEigenvalue(
                f"small pencil has no finite eigenvalue at reference lam={lam}"
            )
        return cls(complex(lam), points, {p.branch_id: p for p in points})

    @property
    def n_branches(self) -> int:
        return len(self.reference_points)


def _continue_step(problem: TwoParProblem, prev: BranchPoint, lam_new):
    """One continuation step: the candidate nearest the first-order
    prediction mu_prev + g'(lam_prev)*(lam_new - lam_prev) wins. Raises
    AmbiguousBranch when the two closest candidates are indistinguishable,
    NoFiniteEigenvalue when the pencil has no finite eigenvalue at lam_new.
    """
    try:
        gd, _ = derivatives(problem, prev, 1)
        pred = prev.mu + gd[0] * (lam_new - prev.lam)
    except SingularJacobian:
        pred = prev.mu
    cands = eigenpairs_at(problem, lam_new)
    if not cands:
        raise NoFiniteEigenvalue(
            f"no finite eigenvalue at lam={lam_new} while continuing a branch"
        )
    dists = np.array([abs(p.mu - pred) for p in cands])
    order = np.argsort(dists, kind="stable")
    scale = max(1.0, abs(pred))
    if len(cands) > 1:
        i0, i1 = order[0], order[1]
        if dists[i1] - dists[i0] <= TOL_AMBIGUOUS * scale:
            mu0, mu1 = cands[i0].mu, cands[i1].mu
            vscale = max(1.0, abs(mu0), abs(mu1))
            if abs(mu0 - mu1) <= TOL_DEDUPE * vscale:
                # numerically one semisimple eigenvalue reported twice;
                # break the tie deterministically by magnitude
                if (abs(mu1), mu1.real, mu1.imag) < (abs(mu0), mu0.real, mu0.imag):
                    i0 = i1
            else:
                raise AmbiguousBranch(lam_new, (mu0, mu1))
        return cands[i0]
    return cands[order[0]]


def continue_branch(problem: TwoParProblem, state: BranchState, branch_id: int,
                    lam_new, max_bisections: int = 12) -> BranchPoint:
    """Step the tracked branch to lam_new and return its point there.

    A step whose destination is ambiguous (two candidates about equally
    close, as happens when the step jumps over most of the gap between two
    nearby branches) is bisected and retried, up to max_bisections interval
    splits in total. Ambiguity that survives the smallest step is genuine
    (the branches meet on the way) and AmbiguousBranch propagates;
    NoFiniteEigenvalue is raised when the pencil degenerates at lam_new.
    """
    if branch_id not in state.current:
        raise KeyError(f"unknown branch id {branch_id}")
    point = state.current[branch_id]
    lam_new = complex(lam_new)
    if lam_new == point.lam:
        return point
    pending = [lam_new]
    splits = 0
    while pending:
        target = pending[-1]
        try:
            nxt = _continue_step(problem, point, target)
        except AmbiguousBranch:
            splits += 1
            mid = point.lam + 0.5 * (target - point.lam)
            if splits > max_bisections or mid == point.lam or mid == target:
                raise
            pending.append(mid)
            continue
        point = dataclasses.replace(nxt, branch_id=branch_id)
        pending.pop()
    state.current[branch_id] = point
    return point


def default_c(B1, B2, B3, reference_lam=0.0, max_draws: int = 16) -> np.ndarray:
    """Deterministic pseudo-random complex normalization vector.

    Drawn from a fixed seed and re-drawn (next seed) while some finite
    eigenvector at the reference lam is numerically orthogonal to it.
    """
    B1 = np.asarray(B1, dtype=np.complex128)
    B2 = np.asarray(B2, dtype=np.complex128)
    B3 = np.asarray(B3, dtype=np.complex128)
    m = B1.shape[0]
    mus, ys, _, _ = _raw_eigenpairs(B1, B2, B3, reference_lam)
    for attempt in range(max_draws):
        rng = np.random.default_rng(1000003 + attempt)
        c = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        c /= np.linalg.norm(c)
        ok = True
        for i in range(ys.shape[1]):
            y = ys[:, i]
            if abs(c @ y) <= TOL_C_DEGENERATE * np.linalg.norm(y):
                ok = False
                break
        if ok:
            return c
    raise ValueError(
        "no normalization vector found after re-draws; pencil may be degenerate"
    )


@dataclasses.dataclass
class ScanFlag:
    """A location where the tracked branch (numerically) stops being analytic."""

    lam: complex
    kind: str  # "collision" (two branches meet) or "divergence" (branch escapes)
    measure: float


@dataclasses.dataclass
class ScanResult:
    radius: float
    flags: list

    def flagged_lams(self) -> np.ndarray:
        return np.array([f.lam for f in self.flags], dtype=np.complex128)


def _sample_measures(problem, lam):
    """(collision measure, divergence measure) of the pencil spectrum at lam.

    Collision: squared smallest pairwise gap among distinct finite
    eigenvalues, relative to their magnitude scale (semisimple copies are
    deduplicated first, so constant multiple spectra do not register).
    Squaring matters: near a square-root branch point the gap shrinks like
    sqrt|lam - lam*|, too flat for the refinement to push below threshold,
    while its square shrinks linearly. Divergence: 1/(1+|mu|) of the largest
    finite eigenvalue, which is |beta|/(|alpha|+|beta|) of the eigenvalue
    closest to escaping to infinity. Both are ~0 at the singularity they
    detect.
    """
    mus, _, _, _ = _raw_eigenpairs(problem.B1, problem.B2, problem.B3, lam)
    if mus.size == 0:
        return np.inf, 0.0
    div = 1.0 / (1.0 + np.max(np.abs(mus)))
    # deduplicate semisimple copies
    distinct = []
    for mu in mus:
        vscale = max(1.0, abs(mu))
        if all(abs(mu - d) > TOL_DEDUPE * max(vscale, abs(d)) for d in distinct):
            distinct.append(mu)
    if len(distinct) < 2:
        return np.inf, float(div)
    gap = min(
        abs(a - b)
        for i, a in enumerate(distinct)
        for b in distinct[i + 1:]
    )
    scale = max(1.0, max(abs(d) for d in distinct))
    return float((gap / scale) ** 2), float(div)


def convergence_radius_scan(problem: TwoParProblem, branch_id: int, center,
                            grid, threshold: float = 1e-6) -> ScanResult:
    """Estimate how far from center the branch stays analytic.

    Walks the lam samples in grid, computing at each one a collision measure
    (squared smallest relative gap between distinct finite eigenvalues) and a
    divergence measure (proximity of the least-finite eigenvalue to
    infinity). Local minima along the grid are refined by bounded scalar
    minimization on the bracketing segment; refined measures below threshold
    are flagged, so a collision flag means the branches came within
    sqrt(threshold) of each other relative to their scale. The radius estimate is the distance from center to the
    nearest flag (inf when none). branch_id selects the branch the estimate
    is reported for; the flags themselves are properties of the whole pencil
    spectrum.
    """
    grid = np.asarray(grid, dtype=np.complex128).reshape(-1)
    if grid.size < 3:
        raise ValueError("grid must contain at least 3 samples")
    gaps = np.empty(grid.size)
    divs = np.empty(grid.size)
    for i, lam in enumerate(grid):
        gaps[i], divs[i] = _sample_measures(problem, lam)

    flags = []

    def refine(i, kind):
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]

        def phi(t):
            lam = lo + t * (hi - lo)
            g, d = _sample_measures(problem, lam)
            return g if kind == "collision" else d

        res = scipy.optimize.minimize_scalar(
            phi, bounds=(0.0, 1.0), method="bounded",
            options={"xatol": 1e-12},
        )
        best_t, best = res.x, res.fun
        if best < threshold:
            flags.append(ScanFlag(complex(lo + best_t * (hi - lo)), kind, float(best)))

    for kind, values in (("collision", gaps), ("divergence", divs)):
        for i in range(grid.size):
            left = values[i - 1] if i > 0 else np.inf
            right = values[i + 1] if i < grid.size - 1 else np.inf
            # strict dip against at least one neighbor; a flat plateau
            # (constant spectrum) never refines
            if (values[i] <= left and values[i] <= right
                    and (values[i] < left or values[i] < right)
                    and np.isfinite(values[i])):
                refine(i, kind)

    center = complex(center)
    radius = min((abs(f.lam - center) for f in flags), default=np.inf)
    return ScanResult(float(radius), flags)
