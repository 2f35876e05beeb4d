"""Grid-coupled building climate control instances.

Each building has ``n_z`` thermal zones with first-order dynamics

    C (T+ - T) = -H (T - T_a) - L T - u + q,

where ``L`` is the Laplacian of the inter-zone conductances, ``u`` the heat
removed by the heat pump and ``q`` an uncontrolled gain.  Over a horizon of
``N`` hourly steps the building minimizes ``sum_k 0.5 c |u_k|^2 + g_k 1'u_k``
under comfort bounds on every state.  The coupling variables are the
per-step electricity totals of each building, and the grid limits the sum of
those totals at every step.

Index convention: states ``z^0 .. z^N``, inputs ``u^0 .. u^{N-1}``, totals
``v^0 .. v^{N-1}``; ``z^{k+1}`` depends on ``u^k`` and ``d^k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .model import BlockQP, GlobalConstraints, SubsystemBlock, validate

__all__ = [
    "BuildingModel",
    "ScenarioConfig",
    "state_space",
    "stack_horizon",
    "build_instance",
    "synthesize_parameters",
    "make_scenario",
    "uncoupled_totals",
    "dimensions",
    "REGULARIZATION",
]

REGULARIZATION = 1e-6


@dataclass(frozen=True, eq=False)
class BuildingModel:
    """Zone capacities ``C`` (kWh/K), ambient conductances ``H`` and the
    symmetric inter-zone conductance matrix ``G`` (kW/K, zero diagonal)."""

    C: np.ndarray
    H: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float).ravel()
        H = np.asarray(self.H, dtype=float).ravel()
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        if np.any(C <= 0):
            raise ValueError("thermal capacities must be positive")
        if np.any(H < 0):
            raise ValueError("ambient conductances must be nonnegative")
        if G.shape != (C.size, C.size) or H.size != C.size:
            raise ValueError("inconsistent zone counts")
        if not np.allclose(G, G.T, atol=0) or np.any(np.diag(G) != 0) or np.any(G < 0):
            raise ValueError("G must be symmetric, nonnegative, with zero diagonal")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "G", G)

    @property
    def n_z(self):
        return self.C.size


@dataclass
class ScenarioConfig:
    buildings: list
    N: int
    T_ambient: np.ndarray
    Q_disturbance: list  # one (N, n_z) array per building
    T_min: float
    T_max: float
    v_bar: float
    g: np.ndarray
    T_init: list  # one (n_z,) array per building
    c: float = 1e-2
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.T_ambient = np.asarray(self.T_ambient, dtype=float).ravel()
        self.g = np.asarray(self.g, dtype=float).ravel()
        self.Q_disturbance = [np.atleast_2d(np.asarray(q, dtype=float)) for q in self.Q_disturbance]
        self.T_init = [np.asarray(t, dtype=float).ravel() for t in self.T_init]
        if not self.T_min < self.T_max:
            raise ValueError("T_min must be below T_max")
        if not self.v_bar > 0:
            raise ValueError("grid capacity must be positive")
        if not self.c > 0:
            raise ValueError("quadratic price must be positive")
        if self.N < 1:
            raise ValueError("horizon must be at least one step")
        if self.T_ambient.size != self.N or self.g.size != self.N:
            raise ValueError("ambient and price profiles need N entries")
        S = len(self.buildings)
        if len(self.Q_disturbance) != S or len(self.T_init) != S:
            raise ValueError("need one disturbance table and initial state per building")
        for b, q, t in zip(self.buildings, self.Q_disturbance, self.T_init):
            if q.shape != (self.N, b.n_z) or t.size != b.n_z:
                raise ValueError("disturbance/initial state shape does not match building")

    @property
    def S(self):
        return len(self.buildings)


def state_space(model, dt=1.0):
    """Discrete-time matrices ``(A, B, E)`` with disturbance ``d = [T_a; q]``."""
    Cinv = 1.0 / model.C
    lap = np.diag(model.G.sum(axis=1)) - model.G
    A = np.eye(model.n_z) - dt * Cinv[:, None] * (np.diag(model.H) + lap)
    B = -dt * np.diag(Cinv)
    E = dt * Cinv[:, None] * np.hstack([model.H[:, None], np.eye(model.n_z)])
    return A, B, E


def stack_horizon(A, B, E, N):
    """Lifted dynamics over ``N`` steps.

    Returns ``(Abar, Bbar, Ebar)`` such that the stacked state ``zbar``
    satisfies ``zbar = Abar zbar + Bbar ubar + Ebar dbar + zf`` where ``zf``
    carries the initial state in its first block.  ``Abar`` is square with
    ``N + 1`` blocks and ``A`` on the first block subdiagonal.
    """
    n, m, p = A.shape[0], B.shape[1], E.shape[1]
    shift = np.eye(N + 1, N, k=-1)
    Abar = np.kron(np.eye(N + 1, k=-1), A)
    Bbar = np.kron(shift, B)
    Ebar = np.kron(shift, E)
    assert Abar.shape == ((N + 1) * n, (N + 1) * n) and Bbar.shape == ((N + 1) * n, N * m)
    assert Ebar.shape == ((N + 1) * n, N * p)
    return Abar, Bbar, Ebar


def dimensions(N, n_z, S):
    """Declared sizes: per-building variables, equalities, inequalities; n_y; global rows."""
    return {
        "n_x": (N + 1) * n_z + N * n_z + N,
        "n_eq": (N + 1) * n_z + N,
        "n_ineq": 2 * (N + 1) * n_z,
        "n_y": S * N,
        "n_global_ineq": N,
    }


def _building_block(cfg, i, eps=REGULARIZATION):
    model = cfg.buildings[i]
    N, n_z, S = cfg.N, model.n_z, cfg.S
    A, B, E = state_space(model)
    Abar, Bbar, Ebar = stack_horizon(A, B, E, N)
    nzs, nu = (N + 1) * n_z, N * n_z
    dim = dimensions(N, n_z, S)

    dbar = np.hstack([cfg.T_ambient[:, None], cfg.Q_disturbance[i]]).ravel()
    zf = np.zeros(nzs)
    zf[:n_z] = cfg.T_init[i]

    dyn = np.hstack([np.eye(nzs) - Abar, -Bbar, np.zeros((nzs, N))])
    agg = np.hstack([np.zeros((N, nzs)), np.kron(np.eye(N), np.ones((1, n_z))), np.zeros((N, N))])
    Ax = np.vstack([dyn, agg])
    sel = np.zeros((1, S))
    sel[0, i] = 1.0
    Ay = np.vstack([np.zeros((nzs, S * N)), -np.kron(sel, np.eye(N))])
    b = np.concatenate([Ebar @ dbar + zf, np.zeros(N)])

    Bx = np.vstack([np.hstack([np.eye(nzs), np.zeros((nzs, nu + N))]),
                    np.hstack([-np.eye(nzs), np.zeros((nzs, nu + N))])])
    d = np.concatenate([np.full(nzs, cfg.T_max), np.full(nzs, -cfg.T_min)])

    Hxx = np.diag(np.concatenate([np.full(nzs, eps), np.full(nu, cfg.c), np.full(N, eps)]))
    hx = np.concatenate([np.zeros(nzs), np.kron(cfg.g, np.ones(n_z)), np.zeros(N)])
    n_y = S * N
    blk = SubsystemBlock(
        Hxx=Hxx, Hxy=np.zeros((dim["n_x"], n_y)), Hyy=np.zeros((n_y, n_y)),
        hx=hx, hy=np.zeros(n_y), Ax=Ax, Ay=Ay, b=b,
        Bx=Bx, By=np.zeros((Bx.shape[0], n_y)), d=d,
    )
    assert (blk.n_x, blk.n_eq, blk.n_ineq) == (dim["n_x"], dim["n_eq"], dim["n_ineq"])
    return blk


def build_instance(cfg, *, check=True):
    """Map a scenario to the block-structured standard form."""
    S, N = cfg.S, cfg.N
    blocks = tuple(_building_block(cfg, i) for i in range(S))
    glob = GlobalConstraints(
        np.zeros((0, S * N)), np.zeros(0),
        np.kron(np.ones((1, S)), np.eye(N)), np.full(N, cfg.v_bar), S * N,
    )
    problem = BlockQP(blocks, glob, S * N)
    if check:
        bad = validate(problem)
        if bad:
            raise ValueError("generated instance is invalid: " + "; ".join(map(str, bad)))
    return problem


def synthesize_parameters(seed, S, n_z, N=8):
    """Deterministic random buildings and disturbance profiles.

    Returns ``(buildings, Q_disturbance, T_init)``.  Inter-zone couplings sit
    on a random spanning tree.
    """
    rng = np.random.default_rng(seed)
    buildings, Q, T0 = [], [], []
    for _ in range(S):
        C = rng.uniform(0.5, 2.0, n_z)
        H = rng.uniform(0.05, 0.3, n_z)
        G = np.zeros((n_z, n_z))
        for m in range(1, n_z):
            j = rng.integers(0, m)
            G[m, j] = G[j, m] = rng.uniform(0.0, 0.2)
        buildings.append(BuildingModel(C, H, G))
        Q.append(rng.uniform(0.1, 0.6, (N, n_z)))
        T0.append(rng.uniform(21.0, 23.0, n_z))
    return buildings, Q, T0


def _profiles(N, start_hour=8):
    hours = start_hour + np.arange(N)
    T_a = 29.0 + 4.0 * np.sin(2 * np.pi * (hours - 9) / 24)
    g = 0.1 + 0.15 * np.exp(-0.5 * ((hours - 16) / 3.0) ** 2)
    return T_a, g


def uncoupled_totals(cfg):
    """Per-step grid load ``sum_i v_i^k`` when the grid limit is ignored."""
    from .oracle import solve_monolithic
    from .model import assemble_monolithic

    loose = ScenarioConfig(**{**cfg.__dict__, "v_bar": 1e6})
    problem = build_instance(loose)
    sol = solve_monolithic(assemble_monolithic(problem), cross_check=False)
    return sol.y.reshape(cfg.S, cfg.N).sum(axis=0)


def make_scenario(S=3, N=8, n_z=2, seed=0, grid_cap=None, cap_fraction=0.9):
    """Synthetic scenario with a binding grid limit.

    When ``grid_cap`` is None the limit is ``cap_fraction`` times the peak
    uncoupled load; the fraction is relaxed toward 1 if that is infeasible.
    """
    from .oracle import feasibility_check

    buildings, Q, T0 = synthesize_parameters(seed, S, n_z, N)
    T_a, g = _profiles(N)
    base = dict(buildings=buildings, N=N, T_ambient=T_a, Q_disturbance=Q, T_min=20.0,
                T_max=24.0, g=g, T_init=T0, c=1e-2, seed=seed)
    if grid_cap is not None:
        return ScenarioConfig(v_bar=float(grid_cap), **base)
    peak = float(uncoupled_totals(ScenarioConfig(v_bar=1e6, **base)).max())
    if peak <= 0:
        return ScenarioConfig(v_bar=1e6, **base)
    for frac in (cap_fraction, 0.95, 0.99, 1.0):
        cfg = ScenarioConfig(v_bar=frac * peak, **base)
        if feasibility_check(build_instance(cfg, check=False)).feasible:
            cfg.extra["cap_fraction"] = frac
            return cfg
    raise RuntimeError("could not find a feasible grid capacity")
