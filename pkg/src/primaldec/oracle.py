"""Centralized reference solves of the assembled problem.

Every decomposed run is judged against these: the full QP is solved by the
dense interior-point solver and, when there are few enough inequality rows,
cross-checked by brute-force enumeration of active sets.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import InfeasibleError, LinAlgError, NonConvergenceError
from .linalg import factorize
from .model import BlockQP, _assemble, assemble_monolithic
from .qp import kkt_residual, solve_qp

__all__ = ["OracleSolution", "FeasibilityResult", "solve_monolithic", "enumerate_active_sets",
           "feasibility_check", "ENUMERATION_CAP"]

ENUMERATION_CAP = 12
ACTIVE_TOL = 1e-7


@dataclass
class OracleSolution:
    x_full: np.ndarray
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    objective: float
    active_set: np.ndarray
    status: str
    kkt_residual: float
    x_list: list
    y: np.ndarray
    enumeration_agrees: bool | None = None


@dataclass
class FeasibilityResult:
    feasible: bool
    violation: float
    witness: np.ndarray


def _dense(qp):
    return (qp.H.toarray(), qp.h, qp.Aeq.toarray(), qp.beq, qp.Aineq.toarray(), qp.dineq)


def enumerate_active_sets(H, c, A, b, G, h, tol=1e-9):
    """Exact QP solution by trying every subset of inequality rows as active.

    Returns ``(x, objective, active)`` of the best subset whose equality-
    constrained solution is primal feasible with nonnegative multipliers, or
    ``None`` if no subset qualifies.
    """
    n, m, p = H.shape[0], A.shape[0], G.shape[0]
    best = None
    scale = 1.0 + np.abs(h).max(initial=0.0)
    for k in range(p + 1):
        for active in itertools.combinations(range(p), k):
            act = list(active)
            C = np.vstack([A, G[act]])
            rhs_c = np.concatenate([b, h[act]])
            r = C.shape[0]
            K = np.zeros((n + r, n + r))
            K[:n, :n] = H
            K[:n, n:] = C.T
            K[n:, :n] = C
            try:
                sol = factorize(K, "lu").solve(np.concatenate([-c, rhs_c]))
            except LinAlgError:
                continue
            x, lam = sol[:n], sol[n:]
            if np.any(lam[m:] < -tol * scale):
                continue
            if np.any(G @ x - h > tol * scale):
                continue
            f = 0.5 * x @ H @ x + c @ x
            if best is None or f < best[1] - 1e-12 * (1 + abs(f)):
                best = (x, f, np.array(act, dtype=int))
    return best


def solve_monolithic(qp, *, tol=1e-10, cross_check=True):
    """Solve the assembled QP centrally.

    Parameters
    ----------
    qp : MonolithicQP or BlockQP
    cross_check : bool
        Run active-set enumeration when there are at most
        ``ENUMERATION_CAP`` inequality rows.

    Raises
    ------
    InfeasibleError
        The constraint set is empty.
    NonConvergenceError
        The interior-point solve failed on a feasible problem (unbounded or
        numerically hard).
    """
    if isinstance(qp, BlockQP):
        qp = assemble_monolithic(qp)
    H, c, A, b, G, h = _dense(qp)
    try:
        sol = solve_qp(H, c, A, b, G, h, tol=tol)
    except NonConvergenceError:
        feas = feasibility_check(qp)
        if not feas.feasible:
            raise InfeasibleError(f"constraints are infeasible (violation {feas.violation:.3e})")
        raise
    x = sol.x
    res = kkt_residual(H, c, A, b, G, h, x, sol.y, sol.z)
    slack = h - G @ x
    active = np.flatnonzero(slack <= ACTIVE_TOL * (1.0 + np.abs(h)))
    agrees = None
    if cross_check and G.shape[0] <= ENUMERATION_CAP:
        found = enumerate_active_sets(H, c, A, b, G, h)
        if found is not None:
            xe, fe, _ = found
            agrees = bool(np.abs(xe - x).max(initial=0.0) <= 1e-8 * (1 + np.abs(x).max(initial=0.0))
                          and abs(fe - sol.objective) <= 1e-9 * max(1.0, abs(fe)))
        else:
            agrees = False
    x_list, y = qp.split(x)
    return OracleSolution(
        x_full=x, eq_duals=sol.y, ineq_duals=sol.z, objective=float(qp.objective(x)),
        active_set=active, status="optimal", kkt_residual=res,
        x_list=[xi.copy() for xi in x_list], y=y.copy(), enumeration_agrees=agrees,
    )


def feasibility_check(qp, tol=1e-9):
    """Minimize the total constraint violation with an LP.

    The witness is the minimal-violation point; the problem is declared
    feasible iff the optimal total violation is at most ``tol``.
    """
    if isinstance(qp, BlockQP):
        qp = _assemble(qp)
    A, b = qp.Aeq.toarray(), qp.beq
    G, h = qp.Aineq.toarray(), qp.dineq
    n, m, p = qp.n, A.shape[0], G.shape[0]
    # variables: [x, e_plus, e_minus, t]
    cost = np.concatenate([np.zeros(n), np.ones(2 * m + p)])
    A_eq = np.hstack([A, np.eye(m), -np.eye(m), np.zeros((m, p))]) if m else None
    A_ub = np.hstack([G, np.zeros((p, 2 * m)), -np.eye(p)]) if p else None
    bounds = [(None, None)] * n + [(0, None)] * (2 * m + p)
    res = linprog(cost, A_ub=A_ub, b_ub=h if p else None, A_eq=A_eq, b_eq=b if m else None,
                  bounds=bounds, method="highs")
    if res.status != 0:
        return FeasibilityResult(False, np.inf, np.zeros(n))
    x = res.x[:n]
    viol = max(np.abs(A @ x - b).max(initial=0.0), np.maximum(G @ x - h, 0.0).max(initial=0.0))
    return FeasibilityResult(bool(viol <= tol), float(viol), x)
