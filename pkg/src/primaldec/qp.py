"""Small dense convex QP solver (Mehrotra predictor-corrector).

Solves

    min 1/2 x'Hx + c'x   s.t.  A x = b,  G x <= h

for the coordination problem of the master, the ADMM steps, and the
monolithic reference solve.  Problem sizes are a few hundred variables, so
everything is dense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LinAlgError, NonConvergenceError
from .linalg import factorize

__all__ = ["QPSolution", "solve_qp", "polish", "kkt_residual"]

TAU = 0.995


@dataclass
class QPSolution:
    x: np.ndarray
    y: np.ndarray  # equality multipliers
    z: np.ndarray  # inequality multipliers, >= 0
    s: np.ndarray  # inequality slacks, >= 0
    objective: float
    iterations: int
    residual: float


def _empty(m, n):
    return np.zeros((m, n))


def kkt_residual(H, c, A, b, G, h, x, y, z):
    """Max-norm of stationarity, primal feasibility and complementarity at (x, y, z)."""
    rd = H @ x + c + A.T @ y + G.T @ z
    rp = A @ x - b
    slack = h - G @ x
    pieces = [np.abs(rd).max(initial=0.0), np.abs(rp).max(initial=0.0)]
    pieces.append(np.maximum(-slack, 0.0).max(initial=0.0))
    pieces.append(np.maximum(-z, 0.0).max(initial=0.0))
    pieces.append(np.abs(z * slack).max(initial=0.0))
    return float(max(pieces))


def _step_to_boundary(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, TAU * np.min(-v[neg] / dv[neg])))


def _factor_kkt(M, A, reg):
    n, m = M.shape[0], A.shape[0]
    if m == 0:
        try:
            return factorize(M + reg * np.eye(n), "cholesky", pivot_tol=0.0)
        except LinAlgError:
            pass
    K = np.zeros((n + m, n + m))
    K[:n, :n] = M + reg * np.eye(n)
    K[:n, n:] = A.T
    K[n:, :n] = A
    K[n:, n:] = -reg * np.eye(m)
    return factorize(K, "ldl", pivot_tol=0.0)


def solve_qp(H, c, A=None, b=None, G=None, h=None, *, tol=1e-10, max_iter=200, accept=None):
    """Solve a convex QP with a primal-dual interior-point method.

    Convergence is declared when the scaled stationarity, feasibility and
    average complementarity are all below ``tol``.  If that never happens
    but the best iterate reached ``accept``, the best iterate is returned
    (its ``residual`` field tells how far it got); this matters for badly
    conditioned ``H`` where the residual stalls at rounding level.

    Raises
    ------
    NonConvergenceError
        ``max_iter`` iterations without meeting ``tol`` (or ``accept``).
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    A = _empty(0, n) if A is None else np.asarray(A, dtype=float).reshape(-1, n)
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float).ravel()
    G = _empty(0, n) if G is None else np.asarray(G, dtype=float).reshape(-1, n)
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float).ravel()
    m, p = A.shape[0], G.shape[0]

    scale_d = 1.0 + max(np.abs(c).max(initial=0.0), np.abs(H).max(initial=0.0))
    scale_p = 1.0 + np.abs(b).max(initial=0.0)
    scale_g = 1.0 + np.abs(h).max(initial=0.0)
    reg = 1e-13 * scale_d

    # starting point: equality-constrained minimizer with unit barrier weights
    M0 = H + G.T @ G
    F = _factor_kkt(M0, A, max(reg, 1e-10 * scale_d))
    rhs = np.concatenate([-c + G.T @ h, b])
    sol = F.solve(rhs)
    x = sol[:n]
    y = np.zeros(m)
    s = h - G @ x
    s = np.maximum(np.abs(s), 1.0)
    z = np.ones(p)

    best = np.inf
    # blow-up on infeasible data shows up as non-finite residuals, checked below
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        for it in range(max_iter + 1):
            rd = H @ x + c + A.T @ y + G.T @ z
            rp = A @ x - b
            rg = G @ x + s - h
            mu = s @ z / p if p else 0.0
            err = max(
                np.abs(rd).max(initial=0.0) / scale_d,
                np.abs(rp).max(initial=0.0) / scale_p,
                np.abs(rg).max(initial=0.0) / scale_g,
                mu,
            )
            if not np.isfinite(err):
                break
            if err < best:
                best, best_iter = err, (x, y, z, s, it)
            if err <= tol:
                return QPSolution(x, y, z, s, float(0.5 * x @ H @ x + c @ x), it, float(err))
            if it == max_iter:
                break

            D = z / s
            M = H + (G.T * D) @ G
            if not np.all(np.isfinite(M)):
                break
            try:
                F = _factor_kkt(M, A, reg)
            except LinAlgError:
                try:
                    F = _factor_kkt(M, A, max(1e3 * reg, 1e-10))
                except LinAlgError:
                    break

            def newton(rc):
                r1 = -rd - G.T @ (D * rg - rc / s)
                sol = F.solve(np.concatenate([r1, -rp]))
                dx, dy = sol[:n], sol[n:]
                ds = -rg - G @ dx
                dz = -(rc + z * ds) / s
                return dx, dy, ds, dz

            dx, dy, ds, dz = newton(s * z)
            if p:
                ap = _step_to_boundary(s, ds)
                ad = _step_to_boundary(z, dz)
                mu_aff = (s + ap * ds) @ (z + ad * dz) / p
                sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
                dx, dy, ds, dz = newton(s * z + ds * dz - sigma * mu)
                ap = _step_to_boundary(s, ds)
                ad = _step_to_boundary(z, dz)
            else:
                ap = ad = 1.0
            x = x + ap * dx
            s = s + ap * ds
            y = y + ad * dy
            z = z + ad * dz

    if accept is not None and best <= accept:
        x, y, z, s, it = best_iter
        return QPSolution(x, y, z, s, float(0.5 * x @ H @ x + c @ x), it, float(best))
    raise NonConvergenceError("QP interior point did not converge", best, max_iter)


def polish(H, c, A, b, G, h, sol, tol=1e-12):
    """Re-solve on the active set identified by an interior-point solution.

    Rows with ``s < z`` are treated as equalities and the resulting
    equality-constrained KKT system is solved directly.  This removes the
    ``O(mu / z)`` slack an interior point leaves on active rows.  The
    polished point is returned only if it is primal feasible with
    nonnegative multipliers (to ``tol`` relative) and does not raise the KKT
    residual; otherwise ``sol`` is returned unchanged.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    A = _empty(0, n) if A is None else np.asarray(A, dtype=float).reshape(-1, n)
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float).ravel()
    G = _empty(0, n) if G is None else np.asarray(G, dtype=float).reshape(-1, n)
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float).ravel()
    act = np.flatnonzero(sol.s < sol.z)
    C = np.vstack([A, G[act]])
    m = C.shape[0]
    K = np.block([[H, C.T], [C, np.zeros((m, m))]])
    try:
        out = factorize(K, "lu").solve(np.concatenate([-c, b, h[act]]))
    except (LinAlgError, ValueError):
        return sol
    x, lam = out[:n], out[n:]
    y = lam[:A.shape[0]]
    z = np.zeros(G.shape[0])
    z[act] = lam[A.shape[0]:]
    slack = h - G @ x
    scale = 1.0 + np.abs(h).max(initial=0.0) + np.abs(z).max(initial=0.0)
    if np.any(slack < -tol * scale) or np.any(z < -tol * scale):
        return sol
    before = kkt_residual(H, c, A, b, G, h, sol.x, sol.y, sol.z)
    after = kkt_residual(H, c, A, b, G, h, x, y, z)
    if not after <= before:
        return sol
    return QPSolution(x, y, z, np.maximum(slack, 0.0), float(0.5 * x @ H @ x + c @ x),
                      sol.iterations, sol.residual)
