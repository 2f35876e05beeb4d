"""Master problem: SQP on the sum of smoothed value functions.

Each iteration fans out one subproblem solve and sensitivity evaluation per
subsystem, solves the small coordination QP in the coupling step, and
backtracks along it until the Armijo condition on the merit
``psi(y) = sum_i Phi_i(y)`` holds.  Trial points are evaluated with fresh,
warm-started subsolves; the accepted trial's solutions are reused for the
next iteration's sensitivities.
"""

from __future__ import annotations

import logging
import os
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError, LineSearchError, NonConvergenceError
from .linalg import factorize
from .qp import polish, solve_qp
from .sensitivity import evaluate, value_al, value_l1
from .subproblem import ALMode, LocalSolver, SubsolveRequest

__all__ = [
    "LineSearchConfig",
    "MasterState",
    "MasterStep",
    "Timer",
    "SubsystemPool",
    "TIMING_CATEGORIES",
    "coordination_step",
    "armijo_search",
    "master_iteration",
    "solve_master",
    "initial_point",
    "consensus_point",
]

log = logging.getLogger(__name__)

TIMING_CATEGORIES = ("sensitivity eval", "local solves", "coordination", "line search", "other")
STEP_TOL = 1e-8
ROUNDOFF_ULPS = 64
COORDINATION_ACCEPT = 1e-7


@dataclass(frozen=True)
class LineSearchConfig:
    """Armijo constant ``sigma``, backtracking factor ``zeta``, step floor and
    backtrack budget.  ``slack`` is an absolute allowance in the sufficient
    decrease test for merit values computed by inexact subsolves."""

    sigma: float = 1e-4
    zeta: float = 0.5
    alpha_min: float = 1e-10
    max_backtracks: int = 40
    slack: float = 0.0

    def __post_init__(self):
        if not 0 < self.sigma <= 0.5:
            raise ValueError("sigma must lie in (0, 0.5]")
        if not 0 < self.zeta < 1:
            raise ValueError("zeta must lie in (0, 1)")
        if not 0 < self.alpha_min <= 1:
            raise ValueError("alpha_min must lie in (0, 1]")
        if self.max_backtracks < 0 or self.slack < 0:
            raise ValueError("max_backtracks and slack must be nonnegative")


@dataclass
class MasterState:
    """Coupling iterate with its merit and the subsystem points solved at it."""

    y: np.ndarray
    merit: float = np.nan
    last_step_norm: float = np.inf
    last_alpha: float = np.nan
    points: list | None = None
    warm: list | None = None

    def invalidate(self):
        """Forget the solved points (parameters changed) but keep them as warm starts."""
        if self.points is not None:
            self.warm = self.points
        self.points = None


@dataclass
class MasterStep:
    merit_before: float
    merit_after: float
    step_norm: float
    alpha: float
    backtracks: int
    comm_floats: int
    converged: bool
    slope: float


class Timer:
    """Wall-clock accumulator over the fixed timing categories."""

    def __init__(self):
        self.totals = defaultdict(float)
        self._start = time.perf_counter()

    @contextmanager
    def section(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.totals[name] += time.perf_counter() - t0

    def elapsed(self):
        return time.perf_counter() - self._start

    def breakdown(self):
        """Percentages per category; time outside any section counts as other."""
        total = self.elapsed()
        out = {k: 0.0 for k in TIMING_CATEGORIES}
        if total <= 0:
            out["other"] = 100.0
            return out
        named = 0.0
        for k in TIMING_CATEGORIES[:-1]:
            out[k] = 100.0 * self.totals[k] / total
            named += out[k]
        out["other"] = 100.0 - named
        return out


class SubsystemPool:
    """Per-subsystem solvers plus the fan-out executor."""

    def __init__(self, problem, threads=None):
        self.problem = problem
        self.solvers = [LocalSolver(blk) for blk in problem.subsystems]
        self.threads = max(1, threads or os.cpu_count() or 1)
        self._executor = ThreadPoolExecutor(self.threads) if self.threads > 1 else None

    def map(self, fn, *iterables):
        if self._executor is None:
            return list(map(fn, *iterables))
        return list(self._executor.map(fn, *iterables))

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def solve(self, y, delta, modes, tol, warm=None):
        """Solve every subproblem at ``y``; returns the converged points."""
        warm = warm or [None] * len(self.solvers)

        def one(i):
            req = SubsolveRequest(self.problem.subsystems[i], y, delta, modes[i], warm[i], tol)
            try:
                return self.solvers[i].solve(req).point
            except NonConvergenceError as exc:
                if warm[i] is None:
                    raise
                log.debug("subsystem %d: warm start failed (%s); retrying cold", i, exc)
                return self.solvers[i].solve(SubsolveRequest(
                    self.problem.subsystems[i], y, delta, modes[i], None, tol)).point

        return self.map(one, range(len(self.solvers)))

    def values(self, y, delta, modes, points):
        out = []
        for blk, mode, pt in zip(self.problem.subsystems, modes, points):
            if isinstance(mode, ALMode):
                out.append(value_al(blk, pt, y, mode.rho, mode.lam, delta))
            else:
                out.append(value_l1(blk, pt, y, mode.lambda_bar, delta))
        return out

    def sensitivities(self, y, delta, modes, points, tol):
        def one(i):
            req = SubsolveRequest(self.problem.subsystems[i], y, delta, modes[i], None, tol)
            return evaluate(self.solvers[i], req, points[i])

        return self.map(one, range(len(self.solvers)))


def initial_point(glob):
    """Zero if it satisfies the global constraints, else their least-norm point."""
    n = glob.n_y
    if glob.is_feasible(np.zeros(n)):
        return np.zeros(n)
    try:
        sol = solve_qp(np.eye(n), np.zeros(n), glob.Aeq, glob.beq, glob.Bineq, glob.dineq, tol=1e-12)
    except NonConvergenceError as exc:
        raise InfeasibleError("global constraints admit no point") from exc
    return sol.x


def consensus_point(pool, glob, y, delta, modes, tol):
    """Starting coupling iterate assembled from the subsystems' own preferences.

    Every subsystem is solved once at ``y``; each coupling coordinate takes
    the mean of the local copies ``z_i`` over the subsystems whose
    constraints involve it (others keep ``y``), and the result is projected
    onto the global constraints.
    """
    points = pool.solve(y, delta, modes, tol)
    acc = np.zeros_like(y)
    cnt = np.zeros_like(y)
    for solver, pt in zip(pool.solvers, points):
        owned = np.abs(solver.Kz).sum(axis=0) > 0
        acc[owned] += pt.z[owned]
        cnt[owned] += 1
    target = np.where(cnt > 0, acc / np.maximum(cnt, 1), y)
    if glob.is_feasible(target):
        return target
    n = target.size
    sol = solve_qp(np.eye(n), -target, glob.Aeq, glob.beq, glob.Bineq, glob.dineq, tol=1e-12)
    return sol.x


def coordination_step(sensitivities, glob, y, tol=1e-10):
    """Step ``dy`` minimizing the local quadratic model of the merit under the
    global constraints written at ``y + dy``.

    Raises
    ------
    DefinitenessError
        The summed Hessian is not positive definite.
    """
    H = sum(s.hessian for s in sensitivities)
    g = sum(s.gradient for s in sensitivities)
    factorize(H, "cholesky")
    y = np.asarray(y, dtype=float)
    # symmetric diagonal scaling; L1 Hessians span many orders of magnitude
    d = 1.0 / np.sqrt(np.diag(H))
    Hs = d[:, None] * H * d[None, :]
    args = (Hs, d * g, glob.Aeq * d, glob.beq - glob.Aeq @ y, glob.Bineq * d, glob.dineq - glob.Bineq @ y)
    try:
        sol = solve_qp(*args, tol=tol, accept=COORDINATION_ACCEPT)
    except NonConvergenceError as exc:
        if not glob.is_feasible(y):
            raise InfeasibleError("coupling iterate violates the global constraints") from exc
        raise
    # the interior point leaves active rows a slack of about mu/z; near the
    # master solution that slack dominates the step
    return d * polish(*args, sol).x


def armijo_search(y, dy, merit, psi0, slope, config=LineSearchConfig()):
    """Backtrack until ``psi0 - merit(y + a dy) >= -sigma a slope - slack``.

    A floor of a few units in the last place of ``psi0`` is added to
    ``slack`` so that predicted decreases below rounding level do not stall.

    ``merit`` maps a trial point to its merit value.  Returns
    ``(alpha, y_next, psi_next, backtracks)``.

    Raises
    ------
    LineSearchError
        The budget or the step floor was exhausted; carries ``(alpha, psi)``
        pairs of every trial.
    """
    y = np.asarray(y, dtype=float)
    if not np.any(dy):
        return 1.0, y.copy(), psi0, 0
    alpha = 1.0
    history = []
    floor = config.slack + ROUNDOFF_ULPS * np.finfo(float).eps * abs(psi0)
    for k in range(config.max_backtracks + 1):
        trial = y + alpha * dy
        psi = merit(trial)
        history.append((alpha, psi))
        if psi0 - psi >= -config.sigma * alpha * slope - floor:
            return alpha, trial, psi, k
        alpha *= config.zeta
        if alpha < config.alpha_min:
            break
    raise LineSearchError(history)


def master_iteration(state, pool, modes, delta, tol, glob, config=LineSearchConfig(),
                     timer=None, step_tol=STEP_TOL):
    """One SQP iteration at fixed smoothing parameters.

    Returns the new state and a :class:`MasterStep`.  Communication counts a
    gradient and a Hessian per subsystem plus one scalar per subsystem for
    every backtrack.
    """
    timer = timer or Timer()
    S, n_y = len(pool.solvers), glob.n_y
    y = state.y
    if state.points is None:
        with timer.section("local solves"):
            state.points = pool.solve(y, delta, modes, tol, warm=state.warm)
    with timer.section("sensitivity eval"):
        sens = pool.sensitivities(y, delta, modes, state.points, tol)
    psi0 = float(sum(s.value for s in sens))
    comm = S * (n_y + n_y * n_y)
    with timer.section("coordination"):
        dy = coordination_step(sens, glob, y)
    g = sum(s.gradient for s in sens)
    slope = float(g @ dy)
    step_norm = float(np.abs(dy).max(initial=0.0))
    done = step_norm <= step_tol
    negligible = -slope <= ROUNDOFF_ULPS * np.finfo(float).eps * max(1.0, abs(psi0))
    if not done and negligible and step_norm > 0.5 * state.last_step_norm:
        # no predicted decrease above rounding level and the steps stopped
        # shrinking: stationary to working precision given the subsolve
        # accuracy.  While steps still contract, the tiny step is taken.
        log.debug("negligible predicted decrease (slope %.3e, |dy| %.3e); stopping", slope, step_norm)
        done = True
    if done:
        state.merit, state.last_step_norm, state.last_alpha = psi0, step_norm, 1.0
        return state, MasterStep(psi0, psi0, step_norm, 1.0, 0, comm, True, slope)

    trial_points = {}

    def merit(trial):
        pts = pool.solve(trial, delta, modes, tol, warm=state.points)
        trial_points["last"] = pts
        return float(sum(pool.values(trial, delta, modes, pts)))

    with timer.section("line search"):
        alpha, y_new, psi, backtracks = armijo_search(y, dy, merit, psi0, slope, config)
    comm += S * backtracks
    new = MasterState(y_new, psi, step_norm, alpha, trial_points["last"])
    return new, MasterStep(psi0, psi, step_norm, alpha, backtracks, comm, False, slope)


def solve_master(state, pool, modes, delta, tol, glob, *, max_iter=50, config=LineSearchConfig(),
                 timer=None, step_tol=STEP_TOL):
    """Run SQP iterations until the step vanishes or ``max_iter`` is reached.

    Returns ``(state, steps, converged)``.
    """
    steps = []
    for _ in range(max_iter):
        state, step = master_iteration(state, pool, modes, delta, tol, glob, config, timer, step_tol)
        steps.append(step)
        if step.converged:
            return state, steps, True
    return state, steps, False
