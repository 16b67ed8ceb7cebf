"""Problem container, residuals, and eigenvalue conditioning.

A two-parameter problem couples a large equation
``(A1 + lam*A2 + mu*A3) x = 0`` of order n with a small equation
``(B1 + lam*B2 + mu*B3) y = 0`` of order m, m << n. Solutions are
quadruplets (lam, x, mu, y). The small equation defines mu implicitly as a
function of lam (a branch), which turns the large equation into a nonlinear
eigenvalue problem in lam alone; see the pencil and nep modules.
"""
from __future__ import annotations

import dataclasses

import numpy as np
import scipy.sparse as sp

from . import _linalg
from .errors import (
    DimensionMismatch,
    MissingLeftVectors,
    NoFiniteEigenvalue,
    NonSimpleLambda,
    NonSimpleMu,
    ShiftIsEigenvalue,
)

# |c^T y| below this times ||c|| ||y|| means the normalization functional is
# useless for that eigenvector.
TOL_C_DEGENERATE = 1e-10
# Scaled thresholds below which an eigenvalue is treated as non-simple and
# conditioning is refused.
TOL_SIMPLE = 1e-12


def _check_square(mat, name, order=None):
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {mat.shape}")
    if order is not None and mat.shape[0] != order:
        raise DimensionMismatch(f"{name} has order {mat.shape[0]}, expected {order}")
    return mat


class TwoParProblem:
    """Immutable container for the six coefficient matrices and the normalization c.

    A1, A2, A3 are n x n (dense ndarray or scipy.sparse, stored as CSR);
    B1, B2, B3 are m x m dense; c is a complex m-vector fixing the eigenvector
    scaling of the small equation through c^T y = 1 (unconjugated transpose).
    """

    def __init__(self, A1, A2, A3, B1, B2, B3, c, label="2ep"):
        self.A1 = _linalg.to_complex(A1)
        self.A2 = _linalg.to_complex(A2)
        self.A3 = _linalg.to_complex(A3)
        _check_square(self.A1, "A1")
        n = self.A1.shape[0]
        _check_square(self.A2, "A2", n)
        _check_square(self.A3, "A3", n)
        B1, B2, B3 = (
            (M.toarray() if sp.issparse(M) else np.asarray(M)).astype(np.complex128)
            for M in (B1, B2, B3)
        )
        _check_square(B1, "B1")
        m = B1.shape[0]
        _check_square(B2, "B2", m)
        _check_square(B3, "B3", m)
        self.B1, self.B2, self.B3 = B1, B2, B3
        c = np.asarray(c, dtype=np.complex128).reshape(-1)
        if c.shape[0] != m:
            raise DimensionMismatch(f"c has length {c.shape[0]}, expected {m}")
        if not np.any(c):
            raise ValueError("normalization vector c must be nonzero")
        self.c = c
        self.label = str(label)
        for mat in (self.A1, self.A2, self.A3, self.B1, self.B2, self.B3, self.c):
            if not sp.issparse(mat):
                mat.flags.writeable = False
        self.norms_a = tuple(_linalg.fro_norm(M) for M in (self.A1, self.A2, self.A3))
        self.norms_b = tuple(_linalg.fro_norm(M) for M in (self.B1, self.B2, self.B3))

    @property
    def n(self) -> int:
        return self.A1.shape[0]

    @property
    def m(self) -> int:
        return self.B1.shape[0]

    @property
    def is_sparse(self) -> bool:
        return any(sp.issparse(M) for M in (self.A1, self.A2, self.A3))

    def eval_a(self, lam, mu):
        """A1 + lam*A2 + mu*A3, sparse if the inputs are sparse."""
        return self.A1 + lam * self.A2 + mu * self.A3

    def eval_b(self, lam, mu):
        return self.B1 + lam * self.B2 + mu * self.B3

    def scale_a(self, lam, mu) -> float:
        """Frobenius-norm scale of the large equation at (lam, mu)."""
        na = self.norms_a
        return na[0] + abs(lam) * na[1] + abs(mu) * na[2]

    def scale_b(self, lam, mu) -> float:
        nb = self.norms_b
        return nb[0] + abs(lam) * nb[1] + abs(mu) * nb[2]

    def __repr__(self):
        kind = "sparse" if self.is_sparse else "dense"
        return f"TwoParProblem(label={self.label!r}, n={self.n} [{kind}], m={self.m})"


@dataclasses.dataclass
class ResidualRecord:
    """Relative residual norms of the two equations at a quadruplet."""

    res_a: float
    res_b: float


@dataclasses.dataclass
class Quadruplet:
    """One solution (lam, x, mu, y), optionally with left vectors v, w.

    y carries c^T y = 1 when that normalization is feasible (c_normalized
    True); otherwise y is unit and c_normalized is False. v is a left null
    vector of A1 + lam*A2 + mu*A3, w one of B1 + lam*B2 + mu*B3.
    """

    lam: complex
    mu: complex
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray | None = None
    w: np.ndarray | None = None
    residuals: ResidualRecord | None = None
    c_normalized: bool = True


def residuals(problem: TwoParProblem, quad: Quadruplet) -> ResidualRecord:
    """Relative residuals of both equations at the quadruplet.

    res_a = ||(A1 + lam A2 + mu A3) x|| / (scale_a(lam, mu) ||x||) and
    analogously for the small equation; Frobenius norms in the scales.
    """
    lam, mu = quad.lam, quad.mu
    ra = np.linalg.norm(problem.eval_a(lam, mu) @ quad.x)
    ra /= problem.scale_a(lam, mu) * np.linalg.norm(quad.x)
    rb = np.linalg.norm(problem.eval_b(lam, mu) @ quad.y)
    rb /= problem.scale_b(lam, mu) * np.linalg.norm(quad.y)
    return ResidualRecord(float(ra), float(rb))


@dataclasses.dataclass
class Weights:
    """Perturbation weights: alphas for A1..A3, betas for B1..B3, gamma for lam."""

    alphas: tuple
    betas: tuple
    gamma: float = 1.0

    @classmethod
    def absolute(cls) -> "Weights":
        return cls((1.0, 1.0, 1.0), (1.0, 1.0, 1.0), 1.0)

    @classmethod
    def relative(cls, problem: TwoParProblem, lam=None) -> "Weights":
        """Norm-based weights; gamma = |lam| when lam is given, else 1."""
        gamma = abs(lam) if lam is not None else 1.0
        return cls(problem.norms_a, problem.norms_b, float(gamma))


@dataclasses.dataclass
class ConditionReport:
    """Condition numbers of a simple quadruplet under weighted perturbations."""

    kappa_a: float
    kappa_g_b: float
    kappa_g_lambda: float
    kappa_total: float
    det_c0: complex
    backward_lambda_bound: float
    weights: Weights
    theta2_absolute: float
    theta2_relative: float


def _require_left(quad: Quadruplet):
    if quad.v is None or quad.w is None:
        raise MissingLeftVectors(
            "quadruplet lacks left vectors; fill them with core.attach_left_vectors "
            "(v from NepView.left_vector, w from pencil.eigenpairs_at)"
        )


def _bilinears(problem, quad):
    """The six scalar pairings that drive conditioning, plus simplicity guards."""
    v, w, x, y = quad.v, quad.w, quad.x, quad.y
    va2x = v.conj() @ (problem.A2 @ x)
    va3x = v.conj() @ (problem.A3 @ x)
    wb2y = w.conj() @ (problem.B2 @ y)
    wb3y = w.conj() @ (problem.B3 @ y)
    nw, ny = np.linalg.norm(w), np.linalg.norm(y)
    if abs(wb3y) <= TOL_SIMPLE * nw * problem.norms_b[2] * ny:
        raise NonSimpleMu(
            f"|w^H B3 y| = {abs(wb3y):.2e} is below the simplicity threshold; "
            "mu is (numerically) not simple"
        )
    # v^H M'(lam) x with M'(lam) = A2 - (w^H B2 y / w^H B3 y) A3
    gprime = -wb2y / wb3y
    vmpx = va2x + gprime * va3x
    nv, nx = np.linalg.norm(v), np.linalg.norm(x)
    mp_scale = problem.norms_a[1] + abs(gprime) * problem.norms_a[2]
    if abs(vmpx) <= TOL_SIMPLE * nv * mp_scale * nx:
        raise NonSimpleLambda(
            f"|v^H M'(lam) x| = {abs(vmpx):.2e} is below the simplicity threshold; "
            "lam is (numerically) not simple"
        )
    return va2x, va3x, wb2y, wb3y, vmpx


def c0_matrix(problem: TwoParProblem, quad: Quadruplet) -> np.ndarray:
    """The 2x2 coupling matrix [[v^H A2 x, v^H A3 x], [w^H B2 y, w^H B3 y]].

    Its determinant equals (w^H B3 y)(v^H M'(lam) x); a zero determinant marks
    a critical point of the coupled problem.
    """
    _require_left(quad)
    v, w, x, y = quad.v, quad.w, quad.x, quad.y
    return np.array(
        [
            [v.conj() @ (problem.A2 @ x), v.conj() @ (problem.A3 @ x)],
            [w.conj() @ (problem.B2 @ y), w.conj() @ (problem.B3 @ y)],
        ],
        dtype=np.complex128,
    )


def condition_numbers(problem: TwoParProblem, quad: Quadruplet,
                      weights: Weights | None = None) -> ConditionReport:
    """Eigenvalue condition numbers of a simple quadruplet.

    kappa_a measures the sensitivity of lam to perturbations of A1..A3 alone,
    kappa_g_b the sensitivity of the branch value mu = g(lam) to perturbations
    of B1..B3, kappa_g_lambda the sensitivity of g to lam itself, and
    kappa_total combines the A- and B-channels into the full first-order
    bound |d lam| <= eps * kappa_total for perturbations of size eps in the
    given weights. Defaults to relative (norm-based) weights with gamma=|lam|.
    """
    _require_left(quad)
    if weights is None:
        weights = Weights.relative(problem, quad.lam)
    a1, a2, a3 = weights.alphas
    b1, b2, b3 = weights.betas
    lam, mu = quad.lam, quad.mu
    va2x, va3x, wb2y, wb3y, vmpx = _bilinears(problem, quad)
    nv, nx = np.linalg.norm(quad.v), np.linalg.norm(quad.x)
    nw, ny = np.linalg.norm(quad.w), np.linalg.norm(quad.y)

    kappa_a = nv * nx * (a1 + abs(lam) * a2 + abs(mu) * a3) / abs(vmpx)
    kappa_g_b = nw * ny * (b1 + abs(lam) * b2 + abs(mu) * b3) / abs(wb3y)
    kappa_g_lambda = weights.gamma * abs(wb2y) / abs(wb3y)
    kappa_total = kappa_a + kappa_g_b * abs(va3x) / abs(vmpx)
    det_c0 = va2x * wb3y - va3x * wb2y
    backward = nw * ny * (b1 + abs(mu) * b3) / abs(wb3y) * abs(va3x) / abs(vmpx)
    nb = problem.norms_b
    return ConditionReport(
        kappa_a=float(kappa_a),
        kappa_g_b=float(kappa_g_b),
        kappa_g_lambda=float(kappa_g_lambda),
        kappa_total=float(kappa_total),
        det_c0=complex(det_c0),
        backward_lambda_bound=float(backward),
        weights=weights,
        theta2_absolute=float(1.0 + abs(lam) + abs(mu)),
        theta2_relative=float(nb[0] + abs(lam) * nb[1] + abs(mu) * nb[2]),
    )


def _phase(z) -> complex:
    return z / abs(z) if z != 0 else 1.0 + 0j


def _dense(mat):
    return mat.toarray() if sp.issparse(mat) else np.asarray(mat)


def worst_case_perturbation(problem: TwoParProblem, quad: Quadruplet,
                            weights: Weights | None, eps: float):
    """Rank-one perturbation of all six matrices attaining eps * kappa_total.

    Directions are v x^H / (||v|| ||x||) on the A side and w y^H / (||w|| ||y||)
    on the B side, with per-matrix phases conj(lam)/|lam| and conj(mu)/|mu|
    and one extra phase aligning the B-channel shift with the A-channel one
    so the two first-order contributions to d lam add up instead of partially
    cancelling. Weights default as in condition_numbers. Returns
    (perturbed TwoParProblem, predicted |d lam|).
    """
    _require_left(quad)
    if weights is None:
        weights = Weights.relative(problem, quad.lam)
    a1, a2, a3 = weights.alphas
    b1, b2, b3 = weights.betas
    lam, mu = quad.lam, quad.mu
    v, w, x, y = quad.v, quad.w, quad.x, quad.y
    _, va3x, _, wb3y, vmpx = _bilinears(problem, quad)
    ahat = np.outer(v, x.conj()) / (np.linalg.norm(v) * np.linalg.norm(x))
    bhat = np.outer(w, y.conj()) / (np.linalg.norm(w) * np.linalg.norm(y))
    rho = va3x / wb3y
    psi = _phase(rho).conjugate()
    dA1 = -eps * a1 * ahat
    dA2 = -eps * a2 * _phase(lam).conjugate() * ahat
    dA3 = -eps * a3 * _phase(mu).conjugate() * ahat
    dB1 = eps * b1 * psi * bhat
    dB2 = eps * b2 * _phase(lam).conjugate() * psi * bhat
    dB3 = eps * b3 * _phase(mu).conjugate() * psi * bhat
    sa = a1 + abs(lam) * a2 + abs(mu) * a3
    sb = b1 + abs(lam) * b2 + abs(mu) * b3
    nv, nx = np.linalg.norm(v), np.linalg.norm(x)
    nw, ny = np.linalg.norm(w), np.linalg.norm(y)
    predicted = eps * (nv * nx * sa + nw * ny * sb * abs(rho)) / abs(vmpx)
    pert = TwoParProblem(
        _dense(problem.A1) + dA1,
        _dense(problem.A2) + dA2,
        _dense(problem.A3) + dA3,
        problem.B1 + dB1,
        problem.B2 + dB2,
        problem.B3 + dB3,
        problem.c,
        label=problem.label + ":perturbed",
    )
    return pert, float(predicted)


def backward_perturbation(problem: TwoParProblem, quad: Quadruplet,
                          weights: Weights, eps: float):
    """Worst-case perturbation of B1 and B3 only (beta2 = 0, A side untouched).

    Models a backward-stable small-equation solve. Returns
    (perturbed TwoParProblem, first-order bound on |d lam|), the bound being
    ||w|| ||y|| (beta1 + |mu| beta3)/|w^H B3 y| * |v^H A3 x|/|v^H M' x| * eps.
    """
    _require_left(quad)
    b1, _, b3 = weights.betas
    mu = quad.mu
    w, y = quad.w, quad.y
    _, va3x, _, wb3y, vmpx = _bilinears(problem, quad)
    bhat = np.outer(w, y.conj()) / (np.linalg.norm(w) * np.linalg.norm(y))
    psi = _phase(va3x / wb3y).conjugate()
    dB1 = eps * b1 * psi * bhat
    dB3 = eps * b3 * _phase(mu).conjugate() * psi * bhat
    nw, ny = np.linalg.norm(w), np.linalg.norm(y)
    bound = eps * nw * ny * (b1 + abs(mu) * b3) / abs(wb3y) * abs(va3x) / abs(vmpx)
    pert = TwoParProblem(
        problem.A1, problem.A2, problem.A3,
        problem.B1 + dB1, problem.B2, problem.B3 + dB3,
        problem.c,
        label=problem.label + ":b-perturbed",
    )
    return pert, float(bound)


def attach_left_vectors(problem: TwoParProblem, quad: Quadruplet,
                        seed: int = 0, tol: float = 1e-8) -> Quadruplet:
    """Return a copy of the quadruplet with left vectors v and w filled in.

    v comes from adjoint inverse iteration on A1 + lam*A2 + mu*A3 (mu taken
    from the quadruplet, no branch tracking needed); w from the left
    eigenvector of the small pencil at lam whose eigenvalue is nearest mu.
    """
    from . import pencil

    rng = np.random.default_rng(seed)
    norm = problem.scale_a(quad.lam, quad.mu)
    try:
        fact = _linalg.Factorization(problem.eval_a(quad.lam, quad.mu))
    except ShiftIsEigenvalue:
        # M is numerically singular at an exact solution; nudge the shift.
        delta = 1e-10 * (abs(quad.lam) + 1.0)
        fact = _linalg.Factorization(problem.eval_a(quad.lam + delta, quad.mu))
    v = _linalg.null_vector_adjoint(fact, norm, rng, tol=tol)
    points = pencil.eigenpairs_at(problem, quad.lam)
    if not points:
        raise NoFiniteEigenvalue(
            f"small pencil has no finite eigenvalue at lam={quad.lam}"
        )
    best = min(points, key=lambda bp: abs(bp.mu - quad.mu))
    return dataclasses.replace(quad, v=v, w=best.w)
