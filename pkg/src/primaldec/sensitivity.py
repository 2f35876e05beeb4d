"""Value, gradient and Hessian of the smoothed subsystem value functions.

At a converged subsystem point the KKT map ``T(q; y) = 0`` defines the
local solution ``q*(y)`` implicitly, so

    dq*/dy = -(dT/dq)^-1 dT/dy.

Only the y-blocks are needed.  For the AL relaxation the Hessian reduces to

    Hyy - Hxy' Hxx^-1 Hxy + R' (K P^-1 K' + W)^-1 R,
    R = Kz - Kx Hxx^-1 Hxy,

which is a sum of a Schur complement of the (positive definite) Hessian and
a positive semidefinite term, so no large-``rho`` cancellation occurs.  The
unreduced Jacobian solve is kept as an independent route.  For the L1
relaxation the gradient is the elastic multiplier ``chi`` and the Hessian is
its derivative.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DefinitenessError, NumericalError, StalePointError
from .linalg import factorize
from .subproblem import (
    ALMode,
    L1Mode,
    LocalSolver,
    PrecomputedBlocks,
    al_residuals,
    l1_residuals,
)

__all__ = [
    "Sensitivity",
    "PrecomputedBlocks",
    "PenaltyWarning",
    "gradient_al",
    "hessian_al",
    "hessian_al_direct",
    "gradient_l1",
    "hessian_l1",
    "value_al",
    "value_l1",
    "evaluate",
]

STALE_TOL = 1e-8


class PenaltyWarning(UserWarning):
    """The L1 penalty does not dominate the elastic multipliers."""


@dataclass
class Sensitivity:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray | None
    flags: dict = field(default_factory=dict)


def _sym(H):
    return 0.5 * (H + H.T)


def _check_fresh(rows, tol):
    res = max((np.abs(r).max(initial=0.0) for r in rows), default=0.0)
    if not res <= tol:
        raise StalePointError(f"point residual {res:.3e} above threshold {tol:.1e}")


def _al_check(block, point, y, rho, lam, delta, tol):
    if tol is None:
        return
    d = float(np.mean(point.s * point.mu)) if delta is None and point.s.size else (delta or 0.0)
    _check_fresh(al_residuals(block, point, y, d, rho, lam), tol)


def _l1_check(block, point, y, lambda_bar, delta, tol):
    if tol is None:
        return
    if delta is None:
        comp = np.concatenate([point.s * point.mu, point.v * (lambda_bar - point.chi),
                               point.w * (lambda_bar + point.chi)])
        delta = float(np.mean(comp))
    rows = l1_residuals(block, point, point.z + point.v - point.w if y is None else y,
                        delta, lambda_bar)
    _check_fresh(rows, tol)


# --------------------------------------------------------------------------
# AL relaxation


def gradient_al(block, point, y, rho, lam, *, delta=None, form="penalty", tol=STALE_TOL):
    """Gradient of the AL-relaxed value function.

    ``form="penalty"`` evaluates ``(Hyy + rho I) y + Hxy' x + hy + lam - rho z``.
    ``form="multiplier"`` evaluates ``Hyy y + Hxy' x + hy + Ay' gamma + By' mu``,
    which agrees at KKT points and avoids the ``rho * (y - z)`` cancellation
    when ``rho`` is large.

    Raises
    ------
    StalePointError
        The point's KKT residual exceeds ``tol`` (``delta`` defaults to the
        mean complementarity product).  Pass ``tol=None`` to skip the check.
    """
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lam, dtype=float)
    _al_check(block, point, y, rho, lam, delta, tol)
    base = block.Hyy @ y + block.Hxy.T @ point.x + block.hy
    if form == "penalty":
        return base + rho * y + lam - rho * point.z
    if form == "multiplier":
        return base + block.Ay.T @ point.gamma + block.By.T @ point.mu
    raise ValueError(f"unknown gradient form {form!r}")


def hessian_al(block, point, y, rho, *, pre=None, delta=None, lam=None, tol=STALE_TOL):
    """Hessian of the AL-relaxed value function through the Schur complement.

    Falls back to :func:`hessian_al_direct` when ``Hxx`` is not factorizable.

    Raises
    ------
    NumericalError
        ``K P^-1 K' + W`` is not positive definite.
    """
    if tol is not None and lam is not None:
        _al_check(block, point, np.asarray(y, dtype=float), rho, np.asarray(lam, dtype=float), delta, tol)
    pre = pre or PrecomputedBlocks.from_block(block)
    if pre.hxx is None:
        return hessian_al_direct(block, point, y, rho)
    ne = block.n_eq
    H = pre.Hyy_reduced.copy()
    if pre.R.shape[0]:
        W = np.concatenate([np.zeros(ne), point.s / point.mu])
        M = pre.KxHKx + pre.Kz @ pre.Kz.T / rho + np.diag(W)
        try:
            F = factorize(M, "cholesky", pivot_tol=0.0)
        except DefinitenessError as exc:
            raise NumericalError("schur complement", "not positive definite; "
                                 "full-row-rank hypothesis on the equality rows may fail") from exc
        H += pre.R.T @ F.solve(pre.R)
    return _sym(H)


def hessian_al_direct(block, point, y, rho):
    """AL Hessian from an LU solve of the full KKT Jacobian (reference route)."""
    nx, ny, ne, ni = block.n_x, block.n_y, block.n_eq, block.n_ineq
    ix = slice(0, nx)
    iz = slice(nx, nx + ny)
    is_ = slice(nx + ny, nx + ny + ni)
    ig = slice(nx + ny + ni, nx + ny + ni + ne)
    im = slice(nx + ny + ni + ne, nx + ny + 2 * ni + ne)
    n = nx + ny + 2 * ni + ne
    J = np.zeros((n, n))
    J[ix, ix] = block.Hxx
    J[ix, ig] = block.Ax.T
    J[ix, im] = block.Bx.T
    J[iz, iz] = rho * np.eye(ny)
    J[iz, ig] = block.Ay.T
    J[iz, im] = block.By.T
    J[is_, is_] = np.diag(point.mu)
    J[is_, im] = np.diag(point.s)
    J[ig, ix] = block.Ax
    J[ig, iz] = block.Ay
    J[im, ix] = block.Bx
    J[im, iz] = block.By
    J[im, is_] = np.eye(ni)
    rhs = np.zeros((n, ny))
    rhs[ix] = -block.Hxy
    rhs[iz] = rho * np.eye(ny)
    dq = factorize(J, "lu", pivot_tol=0.0).solve(rhs)
    H = block.Hyy + rho * np.eye(ny) + block.Hxy.T @ dq[ix] - rho * dq[iz]
    return _sym(H)


def value_al(block, point, y, rho, lam, delta):
    """Objective of the AL-relaxed subproblem at ``point``, barrier included."""
    if np.any(point.s <= 0):
        raise ValueError("slack variables must be positive")
    y = np.asarray(y, dtype=float)
    x, z = point.x, point.z
    gap = y - z
    return float(
        0.5 * x @ block.Hxx @ x + x @ block.Hxy @ y + 0.5 * y @ block.Hyy @ y
        + block.hx @ x + block.hy @ y + np.asarray(lam) @ gap + 0.5 * rho * gap @ gap
        - delta * np.log(point.s).sum()
    )


# --------------------------------------------------------------------------
# L1 relaxation


def gradient_l1(block, point, y=None, *, lambda_bar=None, delta=None, tol=STALE_TOL):
    """Gradient of the L1-relaxed value function, i.e. a copy of ``chi``.

    The freshness check needs ``lambda_bar``; it is skipped when that is
    not supplied.
    """
    if lambda_bar is not None:
        _l1_check(block, point, y, lambda_bar, delta, tol)
    return point.chi.copy()


def hessian_l1(block, point, lambda_bar, delta=None, *, solver=None, y=None, tol=STALE_TOL):
    """Derivative of ``chi`` with respect to ``y`` at a converged L1 point.

    Emits :class:`PenaltyWarning` when ``lambda_bar`` does not exceed every
    ``|chi_j|``; the Hessian is still returned.
    """
    if y is not None:
        _l1_check(block, point, y, lambda_bar, delta, tol)
    if not lambda_bar > np.abs(point.chi).max(initial=0.0):
        warnings.warn(
            f"lambda_bar={lambda_bar:g} does not exceed max|chi|="
            f"{np.abs(point.chi).max():g}; Hessian may be indefinite",
            PenaltyWarning, stacklevel=2,
        )
    solver = solver or LocalSolver(block)
    M = solver.l1_matrix(point, lambda_bar)
    ny = block.n_y
    rhs = np.zeros((M.shape[0], ny))
    rhs[-ny:] = -np.eye(ny)
    sol = factorize(M, "ldl", pivot_tol=0.0).solve(rhs)
    return _sym(sol[-ny:])


def value_l1(block, point, y, lambda_bar, delta):
    """Objective of the L1-relaxed subproblem at ``point``, barrier included."""
    for name in ("s", "v", "w"):
        if np.any(getattr(point, name) <= 0):
            raise ValueError(f"{name} must be positive")
    x, z = point.x, point.z
    return float(
        0.5 * x @ block.Hxx @ x + x @ block.Hxy @ z + 0.5 * z @ block.Hyy @ z
        + block.hx @ x + block.hy @ z + lambda_bar * (point.v.sum() + point.w.sum())
        - delta * (np.log(point.s).sum() + np.log(point.v).sum() + np.log(point.w).sum())
    )


# --------------------------------------------------------------------------


def evaluate(solver, request, point, *, hessian=True, tol=None, gradient_form="multiplier"):
    """Value, gradient and (optionally) Hessian for a solved request.

    ``tol`` is the stale-point threshold and defaults to the request tolerance.
    """
    blk, y, mode, delta = solver.block, request.y, request.mode, request.delta
    tol = request.tol if tol is None else tol
    if isinstance(mode, ALMode):
        lam = np.asarray(mode.lam, dtype=float)
        _al_check(blk, point, y, mode.rho, lam, delta, tol)
        val = value_al(blk, point, y, mode.rho, lam, delta)
        g = gradient_al(blk, point, y, mode.rho, lam, form=gradient_form, tol=None)
        H = hessian_al(blk, point, y, mode.rho, pre=solver.pre, tol=None) if hessian else None
        return Sensitivity(val, g, H)
    lb = mode.lambda_bar
    _l1_check(blk, point, y, lb, delta, tol)
    val = value_l1(blk, point, y, lb, delta)
    g = gradient_l1(blk, point)
    flags = {"penalty_dominates": bool(lb > np.abs(point.chi).max(initial=0.0))}
    H = None
    if hessian:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PenaltyWarning)
            H = hessian_l1(blk, point, lb, delta, solver=solver)
    return Sensitivity(val, g, H, flags)
