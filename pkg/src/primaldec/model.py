"""Block-structured QP data model, validation, assembly, and file I/O.

The problem is

    min  sum_i 1/2 [x_i; y]' [Hxx Hxy; Hxy' Hyy]_i [x_i; y] + [hx; hy]_i' [x_i; y]
    s.t. Ax_i x_i + Ay_i y = b_i,   Bx_i x_i + By_i y <= d_i,   i = 0..S-1
         Aeq y = beq,   Bineq y <= dineq

with local variables ``x_i`` and coupling variables ``y`` shared by all
subsystems.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import InvalidProblemError, ProblemFileError

__all__ = [
    "SubsystemBlock",
    "GlobalConstraints",
    "BlockQP",
    "MonolithicQP",
    "Violation",
    "validate",
    "assemble_monolithic",
    "load",
    "save",
    "tiny_instance",
]

SYM_TOL = 1e-12
RANK_TOL = 1e-10
EIG_TOL = 1e-10

_BLOCK_KEYS = ("Hxx", "Hxy", "Hyy", "hx", "hy", "Ax", "Ay", "b", "Bx", "By", "d")
_GLOBAL_KEYS = ("Aeq", "beq", "Bineq", "dineq")


def _matrix(a, ncols):
    a = np.array(a, dtype=float)
    if a.size == 0:
        return np.zeros((0, ncols))
    if a.ndim == 1:
        a = a.reshape(1, -1)
    return a


def _vector(a):
    return np.array(a, dtype=float).reshape(-1)


@dataclass(frozen=True, eq=False)
class SubsystemBlock:
    """Coefficient blocks owned by one subsystem.

    Empty constraint groups may be given as ``[]``; they are stored as
    zero-row matrices of the right width.
    """

    Hxx: np.ndarray
    Hxy: np.ndarray
    Hyy: np.ndarray
    hx: np.ndarray
    hy: np.ndarray
    Ax: np.ndarray
    Ay: np.ndarray
    b: np.ndarray
    Bx: np.ndarray
    By: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        Hxx = np.atleast_2d(np.array(self.Hxx, dtype=float))
        Hyy = np.atleast_2d(np.array(self.Hyy, dtype=float))
        nx, ny = Hxx.shape[1], Hyy.shape[1]
        object.__setattr__(self, "Hxx", Hxx)
        object.__setattr__(self, "Hyy", Hyy)
        hxy = np.array(self.Hxy, dtype=float)
        object.__setattr__(self, "Hxy", hxy.reshape(nx, ny) if hxy.size == nx * ny else np.atleast_2d(hxy))
        object.__setattr__(self, "hx", _vector(self.hx))
        object.__setattr__(self, "hy", _vector(self.hy))
        object.__setattr__(self, "Ax", _matrix(self.Ax, nx))
        object.__setattr__(self, "Ay", _matrix(self.Ay, ny))
        object.__setattr__(self, "b", _vector(self.b))
        object.__setattr__(self, "Bx", _matrix(self.Bx, nx))
        object.__setattr__(self, "By", _matrix(self.By, ny))
        object.__setattr__(self, "d", _vector(self.d))

    @property
    def n_x(self):
        return self.Hxx.shape[0]

    @property
    def n_y(self):
        return self.Hyy.shape[0]

    @property
    def n_eq(self):
        return self.Ax.shape[0]

    @property
    def n_ineq(self):
        return self.Bx.shape[0]

    def replace(self, **changes):
        data = {k: getattr(self, k) for k in _BLOCK_KEYS}
        data.update(changes)
        return SubsystemBlock(**data)

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in _BLOCK_KEYS}


@dataclass(frozen=True, eq=False)
class GlobalConstraints:
    """Constraints acting on the coupling variables alone."""

    Aeq: np.ndarray
    beq: np.ndarray
    Bineq: np.ndarray
    dineq: np.ndarray
    n_y: int = field(default=-1)

    def __post_init__(self):
        n_y = self.n_y
        if n_y < 0:
            for m in (self.Aeq, self.Bineq):
                m = np.asarray(m, dtype=float)
                if m.size:
                    n_y = np.atleast_2d(m).shape[1]
                    break
            else:
                n_y = 0
        object.__setattr__(self, "n_y", int(n_y))
        object.__setattr__(self, "Aeq", _matrix(self.Aeq, n_y))
        object.__setattr__(self, "beq", _vector(self.beq))
        object.__setattr__(self, "Bineq", _matrix(self.Bineq, n_y))
        object.__setattr__(self, "dineq", _vector(self.dineq))

    @classmethod
    def empty(cls, n_y):
        return cls(np.zeros((0, n_y)), np.zeros(0), np.zeros((0, n_y)), np.zeros(0), n_y)

    def is_feasible(self, y, tol=1e-9):
        y = np.asarray(y, dtype=float)
        eq = np.abs(self.Aeq @ y - self.beq).max(initial=0.0)
        ineq = (self.Bineq @ y - self.dineq).max(initial=-np.inf)
        return eq <= tol and ineq <= tol

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in _GLOBAL_KEYS}


@dataclass(frozen=True, eq=False)
class BlockQP:
    """The full structured problem: S subsystem blocks plus global constraints."""

    subsystems: tuple
    global_constraints: GlobalConstraints
    n_y: int

    def __post_init__(self):
        object.__setattr__(self, "subsystems", tuple(self.subsystems))
        object.__setattr__(self, "n_y", int(self.n_y))

    @property
    def S(self):
        return len(self.subsystems)

    def with_subsystems(self, subsystems):
        return BlockQP(tuple(subsystems), self.global_constraints, self.n_y)

    def to_dict(self):
        return {
            "n_y": self.n_y,
            "subsystems": [blk.to_dict() for blk in self.subsystems],
            "global": self.global_constraints.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        for key in ("n_y", "subsystems", "global"):
            if key not in data:
                raise ProblemFileError(f"missing key {key!r}")
        n_y = int(data["n_y"])
        blocks = []
        for i, raw in enumerate(data["subsystems"]):
            missing = [k for k in _BLOCK_KEYS if k not in raw]
            if missing:
                raise ProblemFileError(f"subsystems[{i}]: missing key {missing[0]!r}")
            try:
                blocks.append(SubsystemBlock(**{k: raw[k] for k in _BLOCK_KEYS}))
            except (TypeError, ValueError) as exc:
                raise ProblemFileError(f"subsystems[{i}]: {exc}") from exc
        g = data["global"]
        missing = [k for k in _GLOBAL_KEYS if k not in g]
        if missing:
            raise ProblemFileError(f"global: missing key {missing[0]!r}")
        try:
            glob = GlobalConstraints(g["Aeq"], g["beq"], g["Bineq"], g["dineq"], n_y)
        except (TypeError, ValueError) as exc:
            raise ProblemFileError(f"global: {exc}") from exc
        return cls(tuple(blocks), glob, n_y)


@dataclass(frozen=True)
class Violation:
    """One failed invariant.  ``subsystem`` is None for problem-wide checks."""

    subsystem: int | None
    invariant: str
    value: object = None

    def __str__(self):
        where = "problem" if self.subsystem is None else f"subsystem {self.subsystem}"
        return f"{where}: {self.invariant} ({self.value})"


def _check_shapes(i, blk, n_y):
    out = []
    nx = blk.n_x

    def expect(name, shape):
        actual = getattr(blk, name).shape
        if actual != shape:
            out.append(Violation(i, f"dimension mismatch in {name}", f"expected {shape}, got {actual}"))

    expect("Hxx", (nx, nx))
    expect("Hxy", (nx, n_y))
    expect("Hyy", (n_y, n_y))
    expect("hx", (nx,))
    expect("hy", (n_y,))
    ne = blk.Ax.shape[0]
    expect("Ax", (ne, nx))
    expect("Ay", (ne, n_y))
    expect("b", (ne,))
    ni = blk.Bx.shape[0]
    expect("Bx", (ni, nx))
    expect("By", (ni, n_y))
    expect("d", (ni,))
    return out


def _row_rank(M):
    if M.shape[0] == 0:
        return 0
    s = sla.svdvals(M)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > RANK_TOL * s[0]))


def _licq_rows(blk):
    """Stack equality rows with the inequality rows that can ever be active together.

    Inequality rows lying in the row space of the equality rows are constant
    on the feasible set and are dropped; of a group of rows that are parallel
    up to sign (two-sided bounds) only one is kept.
    """
    E = np.hstack([blk.Ax, blk.Ay])
    I = np.hstack([blk.Bx, blk.By])
    if E.shape[0]:
        Q, _ = np.linalg.qr(E.T)
        r = _row_rank(E)
        Q = Q[:, :r]
    else:
        Q = np.zeros((E.shape[1], 0))
    kept = []
    for row in I:
        norm = np.linalg.norm(row)
        if norm == 0.0:
            continue
        u = row / norm
        if np.linalg.norm(u - Q @ (Q.T @ u)) <= RANK_TOL:
            continue
        if any(abs(abs(u @ k) - 1.0) <= RANK_TOL for k in kept):
            continue
        kept.append(u)
    if kept:
        return np.vstack([E, np.array(kept)])
    return E


def validate(problem):
    """Return the list of violated invariants (empty when the problem is valid)."""
    out = []
    n_y = problem.n_y
    if problem.S < 1:
        out.append(Violation(None, "no subsystems", 0))
    shape_ok = True
    for i, blk in enumerate(problem.subsystems):
        v = _check_shapes(i, blk, n_y)
        out.extend(v)
        shape_ok &= not v
        for name in _BLOCK_KEYS:
            arr = getattr(blk, name)
            if not np.all(np.isfinite(arr)):
                out.append(Violation(i, "non-finite entry", name))
                shape_ok = False
    g = problem.global_constraints
    for name, arr, shape in (
        ("Aeq", g.Aeq, (g.Aeq.shape[0], n_y)),
        ("beq", g.beq, (g.Aeq.shape[0],)),
        ("Bineq", g.Bineq, (g.Bineq.shape[0], n_y)),
        ("dineq", g.dineq, (g.Bineq.shape[0],)),
    ):
        if arr.shape != shape:
            out.append(Violation(None, f"dimension mismatch in global {name}", f"expected {shape}, got {arr.shape}"))
            shape_ok = False
        elif not np.all(np.isfinite(arr)):
            out.append(Violation(None, "non-finite entry", f"global {name}"))
            shape_ok = False
    if not shape_ok:
        return out

    for i, blk in enumerate(problem.subsystems):
        for name in ("Hxx", "Hyy"):
            M = getattr(blk, name)
            asym = float(np.abs(M - M.T).max(initial=0.0))
            if asym > SYM_TOL:
                out.append(Violation(i, f"{name} not symmetric", asym))
        E = np.hstack([blk.Ax, blk.Ay])
        if _row_rank(E) < E.shape[0]:
            out.append(Violation(i, "equality rows rank deficient", f"rank {_row_rank(E)} < {E.shape[0]}"))
        else:
            K = _licq_rows(blk)
            if _row_rank(K) < K.shape[0]:
                out.append(Violation(i, "constraint rows rank deficient", f"rank {_row_rank(K)} < {K.shape[0]}"))
    if g.Aeq.shape[0] and _row_rank(g.Aeq) < g.Aeq.shape[0]:
        out.append(Violation(None, "global equality rows rank deficient", _row_rank(g.Aeq)))
    if out:
        return out

    mono = _assemble(problem)
    H = mono.H.toarray()
    A = mono.Aeq.toarray()
    Z = sla.null_space(A) if A.shape[0] else np.eye(H.shape[0])
    if Z.shape[1]:
        lam = float(np.linalg.eigvalsh(Z.T @ H @ Z).min())
        if lam <= EIG_TOL:
            out.append(Violation(None, "reduced Hessian not PD", lam))
    return out


@dataclass(frozen=True, eq=False)
class MonolithicQP:
    """All blocks stacked over ``[x_0, ..., x_{S-1}, y]`` in sparse form."""

    H: sp.csr_matrix
    h: np.ndarray
    Aeq: sp.csr_matrix
    beq: np.ndarray
    Aineq: sp.csr_matrix
    dineq: np.ndarray
    x_slices: tuple
    y_slice: slice

    @property
    def n(self):
        return self.h.size

    def objective(self, v):
        v = np.asarray(v, dtype=float)
        return 0.5 * v @ (self.H @ v) + self.h @ v

    def stack(self, x_list, y):
        return np.concatenate([*map(np.ravel, x_list), np.ravel(y)])

    def split(self, v):
        return [v[s] for s in self.x_slices], v[self.y_slice]


def _assemble(problem):
    S, n_y = problem.S, problem.n_y
    offsets = np.cumsum([0] + [blk.n_x for blk in problem.subsystems])
    n = offsets[-1] + n_y
    yo = offsets[-1]
    Hr, Hc, Hv = [], [], []
    h = np.zeros(n)
    Er, Ec, Ev, beq = [], [], [], []
    Ir, Ic, Iv, dineq = [], [], [], []
    erow = irow = 0

    def put(rows, cols, vals, M, r0, c0):
        M = sp.coo_matrix(M)
        rows.append(M.row + r0)
        cols.append(M.col + c0)
        vals.append(M.data)

    for i, blk in enumerate(problem.subsystems):
        xo = offsets[i]
        put(Hr, Hc, Hv, blk.Hxx, xo, xo)
        put(Hr, Hc, Hv, blk.Hxy, xo, yo)
        put(Hr, Hc, Hv, blk.Hxy.T, yo, xo)
        put(Hr, Hc, Hv, blk.Hyy, yo, yo)
        h[xo:xo + blk.n_x] += blk.hx
        h[yo:] += blk.hy
        put(Er, Ec, Ev, blk.Ax, erow, xo)
        put(Er, Ec, Ev, blk.Ay, erow, yo)
        beq.append(blk.b)
        erow += blk.n_eq
        put(Ir, Ic, Iv, blk.Bx, irow, xo)
        put(Ir, Ic, Iv, blk.By, irow, yo)
        dineq.append(blk.d)
        irow += blk.n_ineq
    g = problem.global_constraints
    put(Er, Ec, Ev, g.Aeq, erow, yo)
    beq.append(g.beq)
    erow += g.Aeq.shape[0]
    put(Ir, Ic, Iv, g.Bineq, irow, yo)
    dineq.append(g.dineq)
    irow += g.Bineq.shape[0]

    def build(r, c, v, m):
        if r:
            r, c, v = np.concatenate(r), np.concatenate(c), np.concatenate(v)
        return sp.coo_matrix((v, (r, c)), shape=(m, n)).tocsr()

    x_slices = tuple(slice(offsets[i], offsets[i + 1]) for i in range(S))
    return MonolithicQP(
        H=build(Hr, Hc, Hv, n),
        h=h,
        Aeq=build(Er, Ec, Ev, erow),
        beq=np.concatenate(beq) if beq else np.zeros(0),
        Aineq=build(Ir, Ic, Iv, irow),
        dineq=np.concatenate(dineq) if dineq else np.zeros(0),
        x_slices=x_slices,
        y_slice=slice(yo, n),
    )


def assemble_monolithic(problem):
    """Stack every block into one sparse QP; raises on invalid problems."""
    violations = validate(problem)
    if violations:
        raise InvalidProblemError(violations)
    return _assemble(problem)


def block_objective(problem, x_list, y):
    """Sum of the per-subsystem objective terms evaluated at ``(x_i, y)``."""
    y = np.asarray(y, dtype=float)
    total = 0.0
    for blk, x in zip(problem.subsystems, x_list):
        total += 0.5 * x @ blk.Hxx @ x + x @ blk.Hxy @ y + 0.5 * y @ blk.Hyy @ y
        total += blk.hx @ x + blk.hy @ y
    return float(total)


def save(path, problem):
    """Write ``problem`` as a JSON document."""
    Path(path).write_text(json.dumps(problem.to_dict()))


def load(path):
    """Read a JSON problem file, raising on malformed or invalid content."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ProblemFileError("top level must be an object")
    problem = BlockQP.from_dict(data)
    violations = validate(problem)
    if violations:
        raise InvalidProblemError(violations)
    return problem


def tiny_instance():
    """The one-subsystem, two-variable test problem.

    ``min x^2 - 2x + y^2  s.t. x <= 10, y <= 10`` with optimum
    ``x = 1, y = 0, f = -1`` and value function ``phi(y) = y^2 - 1``.
    """
    blk = SubsystemBlock(
        Hxx=[[2.0]], Hxy=[[0.0]], Hyy=[[2.0]], hx=[-2.0], hy=[0.0],
        Ax=np.zeros((0, 1)), Ay=np.zeros((0, 1)), b=[],
        Bx=[[1.0]], By=[[0.0]], d=[10.0],
    )
    glob = GlobalConstraints(np.zeros((0, 1)), [], [[1.0]], [10.0], 1)
    return BlockQP((blk,), glob, 1)
