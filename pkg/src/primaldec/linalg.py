"""Dense factorization kernels for the KKT systems.

Three factorization kinds are supported: Cholesky for symmetric positive
definite matrices, Bunch-Kaufman LDL^T for symmetric indefinite matrices,
and LU with partial pivoting for general square matrices.  All kernels are
thin wrappers over LAPACK; this module owns the error contract (pivot
index on definiteness failure, relative singularity threshold) and the
multi-right-hand-side solve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import DefinitenessError, SingularMatrixError

__all__ = ["Factorization", "factorize", "solve", "PIVOT_TOL"]

PIVOT_TOL = 1e-14
_KINDS = ("cholesky", "ldl", "lu")


@dataclass(frozen=True, eq=False)
class Factorization:
    """Factors of a square matrix together with its kind and dimension."""

    kind: str
    factors: tuple
    dim: int

    def solve(self, b):
        return solve(self, b)

    def rebuild(self):
        """Multiply the factors back together."""
        n = self.dim
        if self.kind == "cholesky":
            (L,) = self.factors
            return L @ L.T
        if self.kind == "ldl":
            lu, d, perm = self.factors
            return lu @ d @ lu.T
        lu, piv = self.factors
        L = np.tril(lu, -1) + np.eye(n)
        U = np.triu(lu)
        A = L @ U
        # undo the row interchanges in reverse order
        for i in range(n - 1, -1, -1):
            j = piv[i]
            if j != i:
                A[[i, j]] = A[[j, i]]
        return A


def _check_square(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def factorize(A, kind="cholesky", pivot_tol=PIVOT_TOL):
    """Factorize the square matrix ``A``.

    Parameters
    ----------
    A : (n, n) array_like
    kind : {"cholesky", "ldl", "lu"}
    pivot_tol : float
        Pivots with magnitude below ``pivot_tol * ||A||_inf`` raise
        :class:`SingularMatrixError`.  Pass 0 to only reject exact breakdown.

    Raises
    ------
    DefinitenessError
        Cholesky met a non-positive pivot; ``err.pivot`` is its zero-based index.
    SingularMatrixError
        A pivot is below the singularity threshold.
    """
    if kind not in _KINDS:
        raise ValueError(f"unknown factorization kind {kind!r}")
    A = _check_square(A)
    n = A.shape[0]
    scale = np.abs(A).sum(axis=1).max() if n else 0.0
    threshold = pivot_tol * scale

    if kind == "cholesky":
        c, info = lapack.dpotrf(np.asfortranarray(A), lower=1, clean=1)
        if info > 0:
            raise DefinitenessError(info - 1)
        if info < 0:
            raise ValueError(f"dpotrf: illegal argument {-info}")
        piv = np.diag(c) ** 2
        if n and piv.min() <= threshold:
            k = int(np.argmin(piv))
            raise SingularMatrixError(k, float(piv[k]), threshold)
        return Factorization("cholesky", (c,), n)

    if kind == "lu":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(np.asfortranarray(A), check_finite=False)
        u = np.abs(np.diag(lu))
        if n and u.min() <= threshold:
            k = int(np.argmin(u))
            raise SingularMatrixError(k, float(u[k]), threshold)
        return Factorization("lu", (lu, piv), n)

    lu, d, perm = sla.ldl(A, lower=True, hermitian=True, check_finite=False)
    if n:
        eig = np.abs(sla.eigvalsh_tridiagonal(np.diag(d).copy(), np.diag(d, -1).copy()))
        if eig.min() <= threshold:
            # report the diagonal position of the weakest pivot block
            k = int(np.argmin(np.abs(np.diag(d))))
            raise SingularMatrixError(k, float(eig.min()), threshold)
    return Factorization("ldl", (lu, d, perm), n)


def solve(F, B):
    """Solve ``A X = B`` for one or many right-hand sides using factors ``F``."""
    B = np.asarray(B, dtype=float)
    vector = B.ndim == 1
    X = B.reshape(B.shape[0], -1) if vector else B
    if X.shape[0] != F.dim:
        raise ValueError(f"right-hand side has {X.shape[0]} rows, factorization has dimension {F.dim}")
    if F.dim == 0:
        return B.copy()

    if F.kind == "cholesky":
        (c,) = F.factors
        out = sla.cho_solve((c, True), X, check_finite=False)
    elif F.kind == "lu":
        out = sla.lu_solve(F.factors, X, check_finite=False)
    else:
        lu, d, perm = F.factors
        L = lu[perm]
        w = sla.solve_triangular(L, X[perm], lower=True, unit_diagonal=True, check_finite=False)
        ab = np.zeros((3, F.dim))
        ab[0, 1:] = np.diag(d, 1)
        ab[1] = np.diag(d)
        ab[2, :-1] = np.diag(d, -1)
        w = sla.solve_banded((1, 1), ab, w, check_finite=False)
        w = sla.solve_triangular(L.T, w, lower=False, unit_diagonal=True, check_finite=False)
        out = np.empty_like(w)
        out[perm] = w
    return out.ravel() if vector else out
