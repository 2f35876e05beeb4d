"""Distributed ADMM baseline on the same block structure.

Each subsystem keeps a local copy ``z_i`` of the coupling variables.  One
iteration minimizes the augmented Lagrangian over every ``(x_i, z_i)`` in
parallel, then over ``y`` subject to the global constraints, then takes a
dual ascent step on the copy constraints ``y = z_i``.  No over-relaxation and
no penalty adaptation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .master import SubsystemPool, initial_point
from .outer import IterationRecord, SolveReport, relative_gap, termination_check
from .qp import solve_qp

__all__ = ["AdmmState", "admm_local_step", "admm_global_step", "admm_multiplier_step", "run_admm"]

LOCAL_TOL = 1e-10
GLOBAL_TOL = 1e-10


@dataclass
class AdmmState:
    x_list: list
    z_list: list
    y: np.ndarray
    lam_list: list
    rho: float
    iter: int = 0

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")


def admm_local_step(block, y, lam, rho, tol=LOCAL_TOL):
    """Minimize the subsystem's share of the augmented Lagrangian over ``(x, z)``.

    Returns ``(x, z, solution)`` with the full QP solution for inspection.
    """
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    nx, ny = block.n_x, block.n_y
    H = np.block([[block.Hxx, block.Hxy], [block.Hxy.T, block.Hyy + rho * np.eye(ny)]])
    c = np.concatenate([block.hx, block.hy - lam - rho * np.asarray(y, dtype=float)])
    sol = solve_qp(H, c, np.hstack([block.Ax, block.Ay]), block.b,
                   np.hstack([block.Bx, block.By]), block.d, tol=tol)
    return sol.x[:nx], sol.x[nx:], sol


def admm_global_step(z_list, lam_list, rho, glob, tol=GLOBAL_TOL):
    """Minimize ``sum_i lam_i'y + rho/2 |y - z_i|^2`` over the global constraints."""
    S, n = len(z_list), glob.n_y
    c = sum(l - rho * z for l, z in zip(lam_list, z_list))
    sol = solve_qp(S * rho * np.eye(n), c, glob.Aeq, glob.beq, glob.Bineq, glob.dineq, tol=tol)
    return sol.x


def admm_multiplier_step(state):
    """``lam_i <- lam_i + rho (y - z_i)``."""
    state.lam_list = [l + state.rho * (state.y - z) for l, z in zip(state.lam_list, state.z_list)]
    return state


def run_admm(problem, rho=100.0, max_iter=100, *, threads=None, oracle_objective=None):
    """Run a fixed number of ADMM iterations and log the original-problem metrics.

    Communication per iteration is ``2 S n_y`` floats: every ``z_i`` up and
    ``y`` down to every subsystem.
    """
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    S, n_y, glob = problem.S, problem.n_y, problem.global_constraints
    y = initial_point(glob)
    state = AdmmState([np.zeros(b.n_x) for b in problem.subsystems],
                      [y.copy() for _ in range(S)], y, [np.zeros(n_y) for _ in range(S)], rho)
    records, comm = [], 0
    t0 = time.perf_counter()
    with SubsystemPool(problem, threads) as pool:
        for k in range(max_iter):
            local = pool.map(lambda blk, lam: admm_local_step(blk, state.y, lam, rho),
                             problem.subsystems, state.lam_list)
            state.x_list = [x for x, _, _ in local]
            state.z_list = [z for _, z, _ in local]
            state.y = admm_global_step(state.z_list, state.lam_list, rho, glob)
            admm_multiplier_step(state)
            state.iter = k + 1
            comm += 2 * S * n_y
            m = termination_check(problem, state.y, state.x_list)
            step = max(np.abs(state.y - z).max(initial=0.0) for z in state.z_list)
            records.append(IterationRecord(
                k + 1, m.cost, m.eq_infeas, m.ineq_infeas, relative_gap(m.cost, oracle_objective),
                1.0, step, comm, 1e3 * (time.perf_counter() - t0)))
    return SolveReport("admm", state.y.copy(), [x.copy() for x in state.x_list], records,
                       "iteration-cap", flags={"multipliers": state.lam_list})
