"""
Derivatives of a subsystem's value function
===========================================

The master only sees each subsystem through the value of its smoothed
subproblem as a function of the coupling variables, plus the gradient and
Hessian of that value.  Here we compare those against finite differences on
a random strongly convex block.
"""

import numpy as np

from primaldec.model import SubsystemBlock
from primaldec.sensitivity import evaluate
from primaldec.subproblem import ALMode, L1Mode, LocalSolver, SubsolveRequest

rng = np.random.default_rng(0)
nx, ny, ne, ni = 6, 3, 2, 4
M = rng.standard_normal((nx + ny, nx + ny))
H = M @ M.T + 0.1 * np.eye(nx + ny)
x0, z0 = rng.standard_normal(nx), np.zeros(ny)
Ax, Ay = rng.standard_normal((ne, nx)), rng.standard_normal((ne, ny))
Bx, By = rng.standard_normal((ni, nx)), rng.standard_normal((ni, ny))
# constraints built around a strictly feasible point
blk = SubsystemBlock(Hxx=H[:nx, :nx], Hxy=H[:nx, nx:], Hyy=H[nx:, nx:],
                     hx=rng.standard_normal(nx), hy=rng.standard_normal(ny),
                     Ax=Ax, Ay=Ay, b=Ax @ x0 + Ay @ z0,
                     Bx=Bx, By=By, d=Bx @ x0 + By @ z0 + 0.5)
solver = LocalSolver(blk)
y = 0.3 * rng.standard_normal(ny)
delta, h = 1e-8, 1e-5


def sens(yy, mode):
    req = SubsolveRequest(blk, yy, delta, mode, tol=1e-10)
    return evaluate(solver, req, solver.solve(req).point)


for mode in (ALMode(10.0, np.zeros(ny)), L1Mode(100.0)):
    base = sens(y, mode)
    g_fd = np.zeros(ny)
    H_fd = np.zeros((ny, ny))
    for j in range(ny):
        e = np.zeros(ny)
        e[j] = h
        p, m = sens(y + e, mode), sens(y - e, mode)
        g_fd[j] = (p.value - m.value) / (2 * h)
        H_fd[:, j] = (p.gradient - m.gradient) / (2 * h)
    print(type(mode).__name__)
    print("  gradient     ", np.array2string(base.gradient, precision=6))
    print("  FD gradient  ", np.array2string(g_fd, precision=6))
    print("  Hessian eigs ", np.array2string(np.linalg.eigvalsh(base.hessian), precision=4))
    print(f"  max Hessian error vs FD {np.abs(H_fd - base.hessian).max():.1e}")
