"""Outer loop: smoothing/penalty schedule, multiplier updates, termination.

Phase 1 shrinks the barrier weight and grows the penalty geometrically while
running a few inexact master iterations per update.  After a fixed number of
updates the parameters freeze (phase 2); the AL variant then alternates full
master solves with first-order multiplier updates, the L1 variant simply
keeps solving at the frozen penalty.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import PrimalDecError
from .master import (
    LineSearchConfig,
    MasterState,
    SubsystemPool,
    consensus_point,
    Timer,
    initial_point,
    solve_master,
)
from .model import block_objective
from .subproblem import ALMode, L1Mode

__all__ = [
    "PenaltyState",
    "RunConfig",
    "IterationRecord",
    "SolveReport",
    "Metrics",
    "schedule_update",
    "al_multiplier_update",
    "termination_check",
    "run_al",
    "run_l1",
    "report_internal_timing",
    "relative_gap",
]

log = logging.getLogger(__name__)

TIGHT_TOL = 1e-8
START_RULES = ("zero", "consensus", "al-warmup")


@dataclass(frozen=True)
class PenaltyState:
    delta: float
    rho: float
    lambda_bar: float
    lam: tuple
    phase: int = 1
    outer_iter: int = 0
    origin: tuple | None = None  # (delta, rho, lambda_bar) at outer iteration 0

    def __post_init__(self):
        if self.origin is None:
            object.__setattr__(self, "origin", (self.delta, self.rho, self.lambda_bar))

    @classmethod
    def initial(cls, S, n_y, delta=0.1, rho=1e3, lambda_bar=100.0):
        if min(delta, rho, lambda_bar) <= 0:
            raise ValueError("penalty parameters must be positive")
        return cls(delta, rho, lambda_bar, tuple(np.zeros(n_y) for _ in range(S)))


@dataclass(frozen=True)
class RunConfig:
    delta0: float = 0.1
    rho0: float = 1e3
    lambda_bar0: float = 100.0
    delta_factor: float = 0.2
    rho_factor: float = 3.0
    lambda_bar_factor: float = 2.0
    freeze_at: int = 8
    max_outer: int = 60
    phase1_master_iters: int = 5
    phase2_master_iters: int = 50
    step_tol: float = 1e-8
    coupling_tol: float = 1e-6
    threads: int | None = None
    line_search: LineSearchConfig = field(default_factory=LineSearchConfig)
    oracle_objective: float | None = None
    initial_y: np.ndarray | None = None
    start: str | None = None  # "zero", "consensus" or "al-warmup"; None picks per method


@dataclass
class IterationRecord:
    iter: int
    cost: float
    eq_infeas: float
    ineq_infeas: float
    rel_gap: float | None
    alpha: float
    step_norm: float
    comm_floats: int
    wall_ms: float

    def row(self):
        return [self.iter, self.cost, self.eq_infeas, self.ineq_infeas,
                "" if self.rel_gap is None else self.rel_gap,
                self.alpha, self.step_norm, self.comm_floats, self.wall_ms]


@dataclass
class SolveReport:
    method: str
    y: np.ndarray
    x_list: list
    iterations: list
    status: str
    flags: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def final(self):
        return self.iterations[-1] if self.iterations else None


@dataclass
class Metrics:
    cost: float
    eq_infeas: float
    ineq_infeas: float


def schedule_update(state, *, delta_factor=0.2, rho_factor=3.0, lambda_bar_factor=2.0, freeze_at=8):
    """Advance the outer counter; scale the parameters while in phase 1.

    The parameters are scaled on each of the first ``freeze_at`` updates,
    after which the phase switches to 2 and they stay fixed.  Values are
    formed as ``origin * factor**k`` rather than by repeated multiplication
    so the sequence is reproducible to the last bit.
    """
    k = state.outer_iter + 1
    if state.phase == 1:
        d0, r0, l0 = state.origin
        state = replace(state, delta=d0 * delta_factor ** k, rho=r0 * rho_factor ** k,
                        lambda_bar=l0 * lambda_bar_factor ** k)
    return replace(state, outer_iter=k, phase=2 if k >= freeze_at else 1)


def al_multiplier_update(state, y, z_list):
    """``lam_i <- lam_i + rho (y - z_i)`` for every subsystem."""
    lam = tuple(l + state.rho * (np.asarray(y) - z) for l, z in zip(state.lam, z_list))
    return replace(state, lam=lam)


def termination_check(problem, y, x_list):
    """Cost and constraint violations of ``(x_i, y)`` in the original problem."""
    y = np.asarray(y, dtype=float)
    eq, ineq = 0.0, 0.0
    for blk, x in zip(problem.subsystems, x_list):
        eq = max(eq, np.abs(blk.Ax @ x + blk.Ay @ y - blk.b).max(initial=0.0))
        ineq = max(ineq, (blk.Bx @ x + blk.By @ y - blk.d).max(initial=0.0))
    g = problem.global_constraints
    eq = max(eq, np.abs(g.Aeq @ y - g.beq).max(initial=0.0))
    ineq = max(ineq, (g.Bineq @ y - g.dineq).max(initial=0.0))
    return Metrics(block_objective(problem, x_list, y), float(eq), float(ineq))


def relative_gap(cost, reference):
    if reference is None:
        return None
    return abs(cost - reference) / max(abs(reference), 1e-300)


def _subsolve_tol(pen, mode, tight=TIGHT_TOL):
    """Inexact tolerance while the schedule moves, tight once it is frozen."""
    tol = min(pen.delta, 1.0 / (pen.rho if mode == "al" else pen.lambda_bar))
    return min(tol, tight) if pen.phase == 2 else tol


def _run(problem, config, mode):
    S, n_y, glob = problem.S, problem.n_y, problem.global_constraints
    pen = PenaltyState.initial(S, n_y, config.delta0, config.rho0, config.lambda_bar0)
    timer = Timer()
    t0 = time.perf_counter()
    records, comm = [], 0
    report = SolveReport(mode, None, [], records, "iteration-cap")
    start = config.start or ("zero" if mode == "al" else "al-warmup")
    if start not in START_RULES:
        raise ValueError(f"unknown start rule {start!r}")
    with SubsystemPool(problem, config.threads) as pool:
        def current_modes():
            if mode == "al":
                return [ALMode(pen.rho, lam) for lam in pen.lam]
            return [L1Mode(pen.lambda_bar)] * S

        try:
            y0 = initial_point(glob) if config.initial_y is None else np.asarray(config.initial_y, float)
            if config.initial_y is None and start == "consensus":
                with timer.section("local solves"):
                    y0 = consensus_point(pool, glob, y0, pen.delta, current_modes(),
                                         _subsolve_tol(pen, mode))
                comm += S * n_y
            elif config.initial_y is None and start == "al-warmup" and mode != "al":
                # the exact penalty is nearly linear away from local
                # feasibility, where Newton crawls; a few augmented-Lagrangian
                # steps at the initial parameters land close to it first
                warm_modes = [ALMode(pen.rho, np.zeros(n_y))] * S
                ws, steps, _ = solve_master(
                    MasterState(y0), pool, warm_modes, pen.delta, 1.0 / pen.rho, glob,
                    max_iter=config.phase1_master_iters, config=config.line_search,
                    timer=timer, step_tol=config.step_tol)
                y0 = ws.y
                comm += sum(st.comm_floats for st in steps)
                report.flags["warmup_master_iters"] = len(steps)
        except PrimalDecError as exc:
            report.status, report.error = "failed", f"initial point: {exc}"
            return report
        state = MasterState(y0)
        for k in range(config.max_outer):
            modes = current_modes()
            tol = _subsolve_tol(pen, mode)
            budget = config.phase1_master_iters if pen.phase == 1 else config.phase2_master_iters
            state.invalidate()
            try:
                state, steps, converged = solve_master(
                    state, pool, modes, pen.delta, tol, glob, max_iter=budget,
                    config=config.line_search, timer=timer, step_tol=config.step_tol)
            except PrimalDecError as exc:
                report.status = "failed"
                report.error = f"outer iteration {k + 1}: {type(exc).__name__}: {exc}"
                log.error(report.error)
                break
            comm += sum(s.comm_floats for s in steps)
            x_list = [pt.x.copy() for pt in state.points]
            z_list = [pt.z for pt in state.points]
            m = termination_check(problem, state.y, x_list)
            gap = max(np.abs(state.y - z).max(initial=0.0) for z in z_list)
            last = steps[-1]
            records.append(IterationRecord(
                k + 1, m.cost, m.eq_infeas, m.ineq_infeas,
                relative_gap(m.cost, config.oracle_objective),
                last.alpha, last.step_norm, comm, 1e3 * (time.perf_counter() - t0)))
            report.y, report.x_list = state.y.copy(), x_list
            log.info("%s outer %d phase %d: cost %.8g eq %.2e ineq %.2e gap %.2e master %d%s",
                     mode, k + 1, pen.phase, m.cost, m.eq_infeas, m.ineq_infeas, gap,
                     len(steps), "" if converged else " (budget)")
            if pen.phase == 2 and converged and gap <= config.coupling_tol:
                report.status = "converged"
                break
            if mode == "al" and pen.phase == 2:
                pen = al_multiplier_update(pen, state.y, z_list)
            pen = schedule_update(pen, delta_factor=config.delta_factor,
                                  rho_factor=config.rho_factor,
                                  lambda_bar_factor=config.lambda_bar_factor,
                                  freeze_at=config.freeze_at)
    report.flags["coupling_gap"] = float(gap) if records else np.inf
    if mode == "l1" and records and gap > config.coupling_tol:
        report.flags["penalty-too-small"] = True
    report.flags["final_penalty"] = {"delta": pen.delta, "rho": pen.rho, "lambda_bar": pen.lambda_bar}
    report.flags["multipliers"] = [l.copy() for l in pen.lam]
    report.timing = timer.breakdown()
    return report


def run_al(problem, config=RunConfig()):
    """Augmented-Lagrangian primal decomposition."""
    return _run(problem, config, "al")


def run_l1(problem, config=RunConfig()):
    """Exact-penalty (L1) primal decomposition."""
    return _run(problem, config, "l1")


def report_internal_timing(report):
    """Percent of wall time per timing category; sums to 100."""
    from .master import TIMING_CATEGORIES

    if not report.iterations or not report.timing:
        return {k: (100.0 if k == "other" else 0.0) for k in TIMING_CATEGORIES}
    return dict(report.timing)
