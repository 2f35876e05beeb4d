"""Interior-point solver for the relaxed subsystem problems.

For a fixed coupling iterate ``y`` and barrier weight ``delta`` each
subsystem solves one of two smoothed problems in its local variables and a
private copy ``z`` of the coupling variables.

AL mode (penalty ``rho``, multiplier estimate ``lam``)::

    min  1/2 x'Hxx x + x'Hxy y + 1/2 y'Hyy y + hx'x + hy'y
         + lam'(y - z) + rho/2 |y - z|^2 - delta * sum(log s)
    s.t. Ax x + Ay z = b        | gamma
         Bx x + By z + s = d    | mu

L1 mode (penalty ``lambda_bar``)::

    min  1/2 [x;z]'H[x;z] + h'[x;z] + lambda_bar * 1'(v + w)
         - delta * (sum(log s) + sum(log v) + sum(log w))
    s.t. Ax x + Ay z = b        | gamma
         Bx x + By z + s = d    | mu
         y - z - v + w = 0      | chi

Both are solved by primal-dual damped Newton at fixed ``delta``; the outer
loop owns the barrier schedule.  Complementarity rows are kept in the
primal-dual form ``s*mu - delta`` (and ``v*(lambda_bar - chi) - delta``,
``w*(lambda_bar + chi) - delta``), which has the same Newton directions as
the ``-delta/s + mu`` form after row scaling.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from .errors import DefinitenessError, LinAlgError, NonConvergenceError, NumericalError
from .linalg import factorize

__all__ = [
    "SubsystemPoint",
    "ALMode",
    "L1Mode",
    "SubsolveRequest",
    "SubsolveResult",
    "LocalSolver",
    "PrecomputedBlocks",
    "solve_al",
    "solve_l1",
    "newton_step_schur",
    "newton_step_direct",
    "al_residuals",
    "l1_residuals",
    "kkt_residual",
    "cold_start",
    "TAU",
]

TAU = 0.995
MAX_ITER = 200


@dataclass
class SubsystemPoint:
    """Primal-dual state of one subsystem.  ``v``, ``w``, ``chi`` are L1-only."""

    x: np.ndarray
    z: np.ndarray
    s: np.ndarray
    gamma: np.ndarray
    mu: np.ndarray
    v: np.ndarray | None = None
    w: np.ndarray | None = None
    chi: np.ndarray | None = None

    def copy(self):
        return SubsystemPoint(*(None if a is None else a.copy() for a in (
            self.x, self.z, self.s, self.gamma, self.mu, self.v, self.w, self.chi)))


@dataclass(frozen=True)
class ALMode:
    rho: float
    lam: np.ndarray


@dataclass(frozen=True)
class L1Mode:
    lambda_bar: float


@dataclass
class SubsolveRequest:
    subsystem: object
    y: np.ndarray
    delta: float
    mode: ALMode | L1Mode
    warm_start: SubsystemPoint | None = None
    tol: float = 1e-8
    max_iter: int = MAX_ITER

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        if not self.delta > 0:
            raise ValueError(f"barrier parameter must be positive, got {self.delta}")
        if isinstance(self.mode, ALMode):
            if not self.mode.rho > 0:
                raise ValueError(f"rho must be positive, got {self.mode.rho}")
        elif isinstance(self.mode, L1Mode):
            if not self.mode.lambda_bar > 0:
                raise ValueError(f"lambda_bar must be positive, got {self.mode.lambda_bar}")
        else:
            raise TypeError(f"unknown mode {self.mode!r}")


@dataclass
class SubsolveResult:
    point: SubsystemPoint
    kkt_residual: float
    newton_iters: int
    reused_warm_start: bool
    used_fallback: bool = False


class ALStep(NamedTuple):
    x: np.ndarray
    z: np.ndarray
    s: np.ndarray
    gamma: np.ndarray
    mu: np.ndarray


# --------------------------------------------------------------------------
# residuals


def al_residuals(blk, pt, y, delta, rho, lam):
    """Rows of the AL KKT map: stationarity in x and z, complementarity, equalities, inequalities."""
    r_x = blk.Hxx @ pt.x + blk.Hxy @ y + blk.hx + blk.Ax.T @ pt.gamma + blk.Bx.T @ pt.mu
    r_z = rho * (pt.z - y) - lam + blk.Ay.T @ pt.gamma + blk.By.T @ pt.mu
    r_s = pt.s * pt.mu - delta
    r_e = blk.Ax @ pt.x + blk.Ay @ pt.z - blk.b
    r_i = blk.Bx @ pt.x + blk.By @ pt.z + pt.s - blk.d
    return r_x, r_z, r_s, r_e, r_i


def l1_residuals(blk, pt, y, delta, lambda_bar):
    """Rows of the L1 KKT map in the order x, z, s, v, w, equalities, inequalities, elastic."""
    r_x = blk.Hxx @ pt.x + blk.Hxy @ pt.z + blk.hx + blk.Ax.T @ pt.gamma + blk.Bx.T @ pt.mu
    r_z = (blk.Hxy.T @ pt.x + blk.Hyy @ pt.z + blk.hy - pt.chi
           + blk.Ay.T @ pt.gamma + blk.By.T @ pt.mu)
    r_s = pt.s * pt.mu - delta
    r_v = pt.v * (lambda_bar - pt.chi) - delta
    r_w = pt.w * (lambda_bar + pt.chi) - delta
    r_e = blk.Ax @ pt.x + blk.Ay @ pt.z - blk.b
    r_i = blk.Bx @ pt.x + blk.By @ pt.z + pt.s - blk.d
    r_c = y - pt.z - pt.v + pt.w
    return r_x, r_z, r_s, r_v, r_w, r_e, r_i, r_c


def _maxabs(parts):
    return float(max((np.abs(p).max(initial=0.0) for p in parts), default=0.0))


def kkt_residual(point, request):
    """Independent evaluation of ``||T||_inf`` for ``point`` under ``request``."""
    blk, mode = request.subsystem, request.mode
    if isinstance(mode, ALMode):
        return _maxabs(al_residuals(blk, point, request.y, request.delta, mode.rho, mode.lam))
    return _maxabs(l1_residuals(blk, point, request.y, request.delta, mode.lambda_bar))


# --------------------------------------------------------------------------
# starting points


def cold_start(blk, y, delta, l1=False):
    y = np.asarray(y, dtype=float)
    s = np.maximum(blk.d - blk.By @ y, 1.0)
    pt = SubsystemPoint(
        x=np.zeros(blk.n_x), z=y.copy(), s=s,
        gamma=np.zeros(blk.n_eq), mu=delta / s,
    )
    if l1:
        pt.v = np.ones(blk.n_y)
        pt.w = np.ones(blk.n_y)
        pt.chi = np.zeros(blk.n_y)
    return pt


def _usable_warm(pt, blk, mode):
    if pt is None:
        return False
    try:
        if pt.x.shape != (blk.n_x,) or pt.z.shape != (blk.n_y,) or pt.s.shape != (blk.n_ineq,):
            return False
        if pt.gamma.shape != (blk.n_eq,) or pt.mu.shape != (blk.n_ineq,):
            return False
        if not (np.all(pt.s > 0) and np.all(pt.mu > 0)):
            return False
        if isinstance(mode, L1Mode):
            if pt.v is None or pt.w is None or pt.chi is None:
                return False
            lb = mode.lambda_bar
            return bool(np.all(pt.v > 0) and np.all(pt.w > 0) and np.all(np.abs(pt.chi) < lb))
    except AttributeError:
        return False
    return True


def _to_boundary(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    with np.errstate(over="ignore"):  # tiny negative dv: ratio overflows to inf, step stays 1
        return float(min(1.0, TAU * np.min(-v[neg] / dv[neg])))


# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PrecomputedBlocks:
    """Constant pieces of the reduced Newton and sensitivity systems.

    ``hxx`` is ``None`` (and the Schur-path fields with it) when ``Hxx`` is
    not positive definite.
    """

    K: np.ndarray
    Kx: np.ndarray
    Kz: np.ndarray
    hxx: object = None
    HinvKxT: np.ndarray | None = None
    HinvHxy: np.ndarray | None = None
    KxHKx: np.ndarray | None = None
    R: np.ndarray | None = None
    Hyy_reduced: np.ndarray | None = None

    @classmethod
    def from_block(cls, blk):
        Kx = np.vstack([blk.Ax, blk.Bx])
        Kz = np.vstack([blk.Ay, blk.By])
        K = np.hstack([Kx, Kz])
        try:
            hxx = factorize(blk.Hxx, "cholesky")
        except LinAlgError:
            return cls(K, Kx, Kz)
        HinvKxT = hxx.solve(Kx.T) if Kx.shape[0] else np.zeros((blk.n_x, 0))
        HinvHxy = hxx.solve(blk.Hxy)
        return cls(
            K, Kx, Kz, hxx, HinvKxT, HinvHxy, Kx @ HinvKxT,
            R=Kz - Kx @ HinvHxy,
            Hyy_reduced=blk.Hyy - blk.Hxy.T @ HinvHxy,
        )


class LocalSolver:
    """Per-subsystem solver holding the constant precomputed blocks.

    When ``Hxx`` admits a Cholesky factorization the AL Newton system is
    reduced to the Schur complement ``K P^-1 K' + W`` over the constraint
    multipliers, with ``P = blkdiag(Hxx, rho I)`` and ``K = [Ax Ay; Bx By]``;
    ``Kx Hxx^-1 Kx'`` and ``Kz Kz'`` are formed once.  Otherwise every AL step
    uses the full symmetric-indefinite KKT solve and ``fallback`` is set.
    """

    def __init__(self, blk):
        self.block = blk
        self.pre = PrecomputedBlocks.from_block(blk)
        self.Kx, self.Kz, self.n_eq = self.pre.Kx, self.pre.Kz, blk.n_eq
        self.hxx = self.pre.hxx
        self.fallback = self.hxx is None
        if not self.fallback:
            self.HinvKxT = self.pre.HinvKxT
            self.KxHKx = self.pre.KxHKx
            self.KzKz = self.Kz @ self.Kz.T

    # ---- AL ----------------------------------------------------------------

    def schur_factor(self, pt, rho):
        """Cholesky factor of ``K P^-1 K' + W`` at ``pt``."""
        W = np.concatenate([np.zeros(self.n_eq), pt.s / pt.mu])
        M = self.KxHKx + self.KzKz / rho + np.diag(W)
        try:
            return factorize(M, "cholesky", pivot_tol=0.0)
        except DefinitenessError as exc:
            raise NumericalError(
                "schur complement", f"K P^-1 K' + W not positive definite at pivot {exc.pivot}"
            ) from exc

    def al_step_schur(self, pt, y, delta, rho, lam):
        if self.fallback:
            raise NumericalError("Hxx", "not factorizable; Schur path unavailable")
        r_x, r_z, r_s, r_e, r_i = al_residuals(self.block, pt, y, delta, rho, lam)
        hvec = np.concatenate([r_e, r_i - r_s / pt.mu])
        Hr = self.hxx.solve(r_x)
        KPg = self.Kx @ Hr + self.Kz @ r_z / rho
        if hvec.size:
            F = self.schur_factor(pt, rho)
            dnu = F.solve(hvec - KPg)
        else:
            dnu = np.zeros(0)
        dx = -(Hr + self.HinvKxT @ dnu)
        dz = -(r_z + self.Kz.T @ dnu) / rho
        dgamma, dmu = dnu[:self.n_eq], dnu[self.n_eq:]
        ds = -(r_s + pt.s * dmu) / pt.mu
        return ALStep(dx, dz, ds, dgamma, dmu)

    def al_step_direct(self, pt, y, delta, rho, lam):
        blk = self.block
        r_x, r_z, r_s, r_e, r_i = al_residuals(blk, pt, y, delta, rho, lam)
        nx, ny, ne, ni = blk.n_x, blk.n_y, blk.n_eq, blk.n_ineq
        n = nx + ny
        Kfull = np.zeros((n + ne + ni, n + ne + ni))
        Kfull[:nx, :nx] = blk.Hxx
        Kfull[nx:n, nx:n] = rho * np.eye(ny)
        KK = np.hstack([self.Kx, self.Kz])
        Kfull[n:, :n] = KK
        Kfull[:n, n:] = KK.T
        Kfull[n + ne:, n + ne:] = -np.diag(pt.s / pt.mu)
        rhs = -np.concatenate([r_x, r_z, r_e, r_i - r_s / pt.mu])
        sol = factorize(Kfull, "ldl", pivot_tol=0.0).solve(rhs)
        dx, dz = sol[:nx], sol[nx:n]
        dgamma, dmu = sol[n:n + ne], sol[n + ne:]
        ds = -(r_s + pt.s * dmu) / pt.mu
        return ALStep(dx, dz, ds, dgamma, dmu)

    def solve_al(self, request):
        mode = request.mode
        y, delta, rho, lam = request.y, request.delta, mode.rho, np.asarray(mode.lam, dtype=float)
        blk = self.block
        warm = _usable_warm(request.warm_start, blk, mode)
        pt = request.warm_start.copy() if warm else cold_start(blk, y, delta)
        step = self.al_step_direct if self.fallback else self.al_step_schur
        best = np.inf
        for it in range(request.max_iter + 1):
            res = _maxabs(al_residuals(blk, pt, y, delta, rho, lam))
            if not np.isfinite(res):
                break
            best = min(best, res)
            if res <= request.tol:
                return SubsolveResult(pt, res, it, warm, self.fallback)
            if it == request.max_iter:
                break
            try:
                d = step(pt, y, delta, rho, lam)
            except (ValueError, LinAlgError):
                break
            ap = min(_to_boundary(pt.s, d.s), 1.0)
            ad = min(_to_boundary(pt.mu, d.mu), 1.0)
            pt = SubsystemPoint(
                x=pt.x + ap * d.x, z=pt.z + ap * d.z, s=pt.s + ap * d.s,
                gamma=pt.gamma + ad * d.gamma, mu=pt.mu + ad * d.mu,
            )
        raise NonConvergenceError("AL subproblem did not converge", best, request.max_iter)

    # ---- L1 ----------------------------------------------------------------

    def l1_matrix(self, pt, lambda_bar):
        """Reduced symmetric KKT matrix over (x, z, gamma, mu, chi)."""
        blk = self.block
        nx, ny, ne, ni = blk.n_x, blk.n_y, blk.n_eq, blk.n_ineq
        n = nx + ny
        N = n + ne + ni + ny
        M = np.zeros((N, N))
        M[:nx, :nx] = blk.Hxx
        M[:nx, nx:n] = blk.Hxy
        M[nx:n, :nx] = blk.Hxy.T
        M[nx:n, nx:n] = blk.Hyy
        KK = np.hstack([self.Kx, self.Kz])
        M[n:n + ne + ni, :n] = KK
        M[:n, n:n + ne + ni] = KK.T
        c0 = n + ne + ni
        M[n + ne:c0, n + ne:c0] = -np.diag(pt.s / pt.mu)
        M[nx:n, c0:] = -np.eye(ny)
        M[c0:, nx:n] = -np.eye(ny)
        Dvw = pt.v / (lambda_bar - pt.chi) + pt.w / (lambda_bar + pt.chi)
        M[c0:, c0:] = -np.diag(Dvw)
        return M

    def l1_step(self, pt, y, delta, lambda_bar):
        blk = self.block
        r_x, r_z, r_s, r_v, r_w, r_e, r_i, r_c = l1_residuals(blk, pt, y, delta, lambda_bar)
        lm, lp = lambda_bar - pt.chi, lambda_bar + pt.chi
        rhs = -np.concatenate([r_x, r_z, r_e, r_i - r_s / pt.mu, r_c + r_v / lm - r_w / lp])
        sol = factorize(self.l1_matrix(pt, lambda_bar), "ldl", pivot_tol=0.0).solve(rhs)
        nx, ny, ne, ni = blk.n_x, blk.n_y, blk.n_eq, blk.n_ineq
        n = nx + ny
        dx, dz = sol[:nx], sol[nx:n]
        dgamma, dmu, dchi = sol[n:n + ne], sol[n + ne:n + ne + ni], sol[n + ne + ni:]
        ds = -(r_s + pt.s * dmu) / pt.mu
        dv = (-r_v + pt.v * dchi) / lm
        dw = (-r_w - pt.w * dchi) / lp
        return dx, dz, ds, dv, dw, dgamma, dmu, dchi

    def solve_l1(self, request):
        y, delta, lb = request.y, request.delta, request.mode.lambda_bar
        blk = self.block
        warm = _usable_warm(request.warm_start, blk, request.mode)
        pt = request.warm_start.copy() if warm else cold_start(blk, y, delta, l1=True)
        best = np.inf
        for it in range(request.max_iter + 1):
            res = _maxabs(l1_residuals(blk, pt, y, delta, lb))
            if not np.isfinite(res):
                break
            best = min(best, res)
            if res <= request.tol:
                return SubsolveResult(pt, res, it, warm, False)
            if it == request.max_iter:
                break
            try:
                dx, dz, ds, dv, dw, dg, dm, dc = self.l1_step(pt, y, delta, lb)
            except (ValueError, LinAlgError):
                break
            ap = min(_to_boundary(pt.s, ds), _to_boundary(pt.v, dv), _to_boundary(pt.w, dw))
            ad = min(_to_boundary(pt.mu, dm), _to_boundary(lb - pt.chi, -dc),
                     _to_boundary(lb + pt.chi, dc))
            pt = SubsystemPoint(
                x=pt.x + ap * dx, z=pt.z + ap * dz, s=pt.s + ap * ds,
                gamma=pt.gamma + ad * dg, mu=pt.mu + ad * dm,
                v=pt.v + ap * dv, w=pt.w + ap * dw, chi=pt.chi + ad * dc,
            )
        raise NonConvergenceError("L1 subproblem did not converge", best, request.max_iter)

    def solve(self, request):
        if isinstance(request.mode, ALMode):
            return self.solve_al(request)
        return self.solve_l1(request)


def solve_al(request):
    """Solve the AL-relaxed subproblem to ``request.tol`` in the KKT max-norm."""
    if not isinstance(request.mode, ALMode):
        raise TypeError("solve_al needs an ALMode request")
    return LocalSolver(request.subsystem).solve_al(request)


def solve_l1(request):
    """Solve the L1-relaxed subproblem to ``request.tol`` in the KKT max-norm."""
    if not isinstance(request.mode, L1Mode):
        raise TypeError("solve_l1 needs an L1Mode request")
    return LocalSolver(request.subsystem).solve_l1(request)


def newton_step_schur(point, request, solver=None):
    """AL Newton direction through the Schur complement.

    Falls back to the full KKT solve when ``Hxx`` cannot be factorized; the
    second return value reports whether that happened.
    """
    solver = solver or LocalSolver(request.subsystem)
    args = (point, request.y, request.delta, request.mode.rho, np.asarray(request.mode.lam, dtype=float))
    if solver.fallback:
        return solver.al_step_direct(*args), True
    return solver.al_step_schur(*args), False


def newton_step_direct(point, request, solver=None):
    """AL Newton direction from an LDL^T solve of the reduced four-block KKT system."""
    solver = solver or LocalSolver(request.subsystem)
    return solver.al_step_direct(point, request.y, request.delta, request.mode.rho,
                                 np.asarray(request.mode.lam, dtype=float))


def with_warm_start(request, point):
    return replace(request, warm_start=point)
