"""Internal dense/sparse linear algebra helpers.

Thin wrappers around LAPACK (via scipy.linalg) and SuperLU (via
scipy.sparse.linalg) so the rest of the package never branches on the
storage format of a matrix.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lapack

from .errors import ShiftIsEigenvalue

# Relative reciprocal-condition threshold below which a factorization is
# treated as singular.
RCOND_SINGULAR = 1e-14


def is_sparse(mat) -> bool:
    return sp.issparse(mat)


def to_complex(mat):
    """Return mat as complex128, dense ndarray or CSR, without copying if possible."""
    if sp.issparse(mat):
        return mat.tocsr().astype(np.complex128, copy=False)
    return np.asarray(mat, dtype=np.complex128)


def fro_norm(mat) -> float:
    if sp.issparse(mat):
        return float(np.sqrt(np.sum(np.abs(mat.data) ** 2)))
    return float(np.linalg.norm(mat, "fro"))


def rcond_1norm(mat) -> float:
    """Reciprocal 1-norm condition estimate of a dense square matrix."""
    a = np.asarray(mat, dtype=np.complex128, order="F")
    anorm = np.linalg.norm(a, 1) if a.size else 0.0
    if anorm == 0.0:
        return 0.0
    lu, _, info = lapack.zgetrf(a)
    if info > 0:
        return 0.0
    rc, _ = lapack.zgecon(lu, anorm, norm="1")
    return float(rc)


class Factorization:
    """LU factorization of a dense or sparse square matrix.

    Supports solves with the matrix and with its conjugate transpose from
    the single factorization. Raises ShiftIsEigenvalue when the matrix is
    numerically singular.
    """

    def __init__(self, mat):
        self.shape = mat.shape
        self.norm = fro_norm(mat)
        if sp.issparse(mat):
            self.sparse = True
            try:
                self._lu = spla.splu(mat.tocsc().astype(np.complex128, copy=False))
            except RuntimeError as exc:  # SuperLU signals exact singularity this way
                raise ShiftIsEigenvalue(f"singular sparse factorization: {exc}") from exc
            udiag = np.abs(self._lu.U.diagonal())
            if udiag.size and (udiag.min() == 0.0 or udiag.min() < RCOND_SINGULAR * udiag.max()):
                raise ShiftIsEigenvalue(
                    "sparse factorization is numerically singular "
                    f"(U-diagonal ratio {udiag.min():.2e}/{udiag.max():.2e})"
                )
        else:
            self.sparse = False
            a = np.asarray(mat, dtype=np.complex128, order="F")
            anorm = np.linalg.norm(a, 1) if a.size else 0.0
            lu, piv, info = lapack.zgetrf(a)
            if info > 0 or anorm == 0.0:
                raise ShiftIsEigenvalue("dense factorization hit an exactly zero pivot")
            rc, _ = lapack.zgecon(lu, anorm, norm="1")
            if rc < RCOND_SINGULAR:
                raise ShiftIsEigenvalue(
                    f"dense factorization is numerically singular (rcond={rc:.2e})"
                )
            self.rcond = float(rc)
            self._lu = (lu, piv)

    def solve(self, b, adjoint: bool = False):
        b = np.asarray(b, dtype=np.complex128)
        if self.sparse:
            return self._lu.solve(b, trans="H" if adjoint else "N")
        lu, piv = self._lu
        x, info = lapack.zgetrs(lu, piv, b.reshape(self.shape[0], -1), trans=2 if adjoint else 0)
        if info != 0:
            raise ShiftIsEigenvalue(f"triangular solve failed (info={info})")
        return x.reshape(b.shape)


def geig(P, Q, left: bool = False):
    """All eigenvalues of the pencil (P, Q) in homogeneous (alpha, beta) form.

    Returns (alpha, beta, vr) or (alpha, beta, vr, vl). Right vectors vr
    satisfy beta*P vr = alpha*Q vr; left vectors are conjugate-transposed
    null directions of the same pencil.
    """
    P = np.asarray(P, dtype=np.complex128)
    Q = np.asarray(Q, dtype=np.complex128)
    if left:
        w, vl, vr = sla.eig(P, Q, left=True, right=True, homogeneous_eigvals=True)
        return w[0], w[1], vr, vl
    w, vr = sla.eig(P, Q, right=True, homogeneous_eigvals=True)
    return w[0], w[1], vr


def null_vector_adjoint(fact: Factorization, norm: float, rng, tol: float = 1e-8,
                        maxit: int = 50):
    """Approximate null vector of M^H by inverse iteration on a factorization of M.

    Returns the unit vector v once ||M^H v|| <= tol * norm, where norm should
    be a norm of M. Raises ConvergenceFailure otherwise.
    """
    from .errors import ConvergenceFailure

    n = fact.shape[0]
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    res = np.inf
    for _ in range(maxit):
        w = fact.solve(v, adjoint=True)
        nw = np.linalg.norm(w)
        v = w / nw
        res = 1.0 / nw  # exactly ||M^H v|| because the previous v was unit
        if res <= tol * norm:
            return v
    raise ConvergenceFailure(
        f"adjoint inverse iteration did not reach {tol:.1e}*||M|| in {maxit} steps "
        f"(last residual {res:.2e} vs target {tol * norm:.2e})"
    )
