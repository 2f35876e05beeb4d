"""Random instances shared by the test modules."""

import numpy as np

from primaldec.model import BlockQP, GlobalConstraints, SubsystemBlock


def random_block(rng, nx=5, ny=3, ne=2, ni=4, cond=0.1, z0=None):
    """Strongly convex block with full-row-rank constraints and a strictly
    feasible point, so every relaxation has positive definite sensitivities."""
    M = rng.standard_normal((nx + ny, nx + ny))
    H = M @ M.T + cond * np.eye(nx + ny)
    x0 = rng.standard_normal(nx)
    z0 = rng.standard_normal(ny) if z0 is None else np.asarray(z0, dtype=float)
    Ax, Ay = rng.standard_normal((ne, nx)), rng.standard_normal((ne, ny))
    Bx, By = rng.standard_normal((ni, nx)), rng.standard_normal((ni, ny))
    return SubsystemBlock(
        Hxx=H[:nx, :nx], Hxy=H[:nx, nx:], Hyy=H[nx:, nx:],
        hx=rng.standard_normal(nx), hy=rng.standard_normal(ny),
        Ax=Ax, Ay=Ay, b=Ax @ x0 + Ay @ z0,
        Bx=Bx, By=By, d=Bx @ x0 + By @ z0 + rng.uniform(0.1, 1.0, ni),
    )


def random_dims(rng, max_nx=8, max_ny=4):
    nx = int(rng.integers(2, max_nx + 1))
    ny = int(rng.integers(1, max_ny + 1))
    ne = int(rng.integers(0, min(nx, 3)))
    ni = int(rng.integers(0, min(5, nx + ny - ne + 1)))
    return nx, ny, ne, ni


def random_problem(rng, S=3, ny=3, box=2.0):
    """Block QP whose coupling variables carry a box as global constraints.

    Every subsystem is strictly feasible at ``y = 0``, hence so is the whole
    problem."""
    blocks = []
    for _ in range(S):
        nx = int(rng.integers(2, 6))
        ne = int(rng.integers(0, 2))
        ni = int(rng.integers(1, min(4, nx + ny - ne + 1)))
        blocks.append(random_block(rng, nx, ny, ne, ni, z0=np.zeros(ny)))
    glob = GlobalConstraints(np.zeros((0, ny)), [], np.vstack([np.eye(ny), -np.eye(ny)]),
                             np.full(2 * ny, box), ny)
    return BlockQP(tuple(blocks), glob, ny)


AL_FIELDS = ("x", "z", "s", "gamma", "mu")
L1_FIELDS = ("x", "z", "s", "v", "w", "gamma", "mu", "chi")


def pack(point, fields):
    return np.concatenate([getattr(point, f) for f in fields])


def unpack(vec, template, fields):
    out, k = template.copy(), 0
    for f in fields:
        n = getattr(template, f).size
        setattr(out, f, vec[k:k + n].copy())
        k += n
    return out


def residual_jacobian(residual, point, fields, h=1e-3):
    """Jacobian of a residual map by central differences.

    The KKT maps are at most bilinear in the unknowns, so central differences
    are exact up to rounding regardless of ``h``.
    """
    q0 = pack(point, fields)
    F0 = np.concatenate(residual(point))
    J = np.zeros((F0.size, q0.size))
    for j in range(q0.size):
        e = np.zeros_like(q0)
        e[j] = h
        Fp = np.concatenate(residual(unpack(q0 + e, point, fields)))
        Fm = np.concatenate(residual(unpack(q0 - e, point, fields)))
        J[:, j] = (Fp - Fm) / (2 * h)
    return F0, J


def interior_point(rng, blk, y, l1=False, lambda_bar=10.0):
    """Random strictly interior primal-dual point (not a solution)."""
    from primaldec.subproblem import SubsystemPoint

    pt = SubsystemPoint(
        x=rng.standard_normal(blk.n_x), z=y + 0.1 * rng.standard_normal(blk.n_y),
        s=rng.uniform(0.1, 2.0, blk.n_ineq), gamma=rng.standard_normal(blk.n_eq),
        mu=rng.uniform(0.1, 2.0, blk.n_ineq),
    )
    if l1:
        pt.v = rng.uniform(0.1, 2.0, blk.n_y)
        pt.w = rng.uniform(0.1, 2.0, blk.n_y)
        pt.chi = rng.uniform(-0.5, 0.5, blk.n_y) * lambda_bar
    return pt
