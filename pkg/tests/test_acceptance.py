"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured numbers
before asserting, so ``pytest -s -k acceptance`` (or the full run with
``-v``) doubles as a report.
"""

import time
import warnings
from functools import lru_cache

import numpy as np
import pytest

from primaldec.admm import run_admm
from primaldec.hvac import build_instance, make_scenario
from primaldec.master import MasterState, SubsystemPool, initial_point, solve_master
from primaldec.model import assemble_monolithic, tiny_instance
from primaldec.oracle import solve_monolithic
from primaldec.outer import PenaltyState, RunConfig, run_al, run_l1, schedule_update
from primaldec.sensitivity import (PenaltyWarning, evaluate, hessian_al, hessian_al_direct,
                                   hessian_l1)
from primaldec.subproblem import (ALMode, L1Mode, LocalSolver, SubsolveRequest,
                                  newton_step_direct, newton_step_schur)

from helpers import interior_point, random_block, random_dims

SEEDS = (1, 2, 3, 4, 5)
GAP, INFEAS, MAX_OUTER, WALL = 1e-4, 1e-5, 20, 60.0


def report(name, ok, detail):
    print(f"\n{'PASS' if ok else 'FAIL'} criterion {name}: {detail}")


@pytest.fixture
def emit(capsys):
    def _emit(name, ok, detail):
        with capsys.disabled():
            report(name, ok, detail)
    return _emit


@lru_cache(maxsize=None)
def instance(S, seed):
    problem = build_instance(make_scenario(S, 8, 2, seed))
    return problem, solve_monolithic(assemble_monolithic(problem)).objective


@lru_cache(maxsize=None)
def run(method, S, seed):
    problem, ref = instance(S, seed)
    t0 = time.perf_counter()
    fn = run_al if method == "al" else run_l1
    r = fn(problem, RunConfig(oracle_objective=ref, threads=1))
    return r, time.perf_counter() - t0


def first_hit(r):
    """Outer iteration at which both thresholds first hold, else None."""
    for rec in r.iterations:
        if rec.rel_gap <= GAP and max(rec.eq_infeas, rec.ineq_infeas) <= INFEAS:
            return rec.iter
    return None


def threshold_rows(method, sizes):
    rows = []
    for S in sizes:
        for seed in SEEDS:
            r, wall = run(method, S, seed)
            hit = first_hit(r)
            ok = r.status != "failed" and hit is not None and hit <= MAX_OUTER and wall <= WALL
            rows.append((S, seed, ok, hit, r.final.rel_gap, max(r.final.eq_infeas, r.final.ineq_infeas), wall))
    return rows


def describe(rows):
    return "; ".join(f"S={S} seed={seed} hit={hit} gap={gap:.1e} inf={inf:.1e} {wall:.1f}s"
                     for S, seed, _, hit, gap, inf, wall in rows)


def test_criterion_1_al_matches_oracle(emit):
    rows = threshold_rows("al", (3, 10))
    ok = all(r[2] for r in rows)
    emit("1 (AL vs oracle, S in {3,10})", ok, describe(rows))
    assert ok


def test_criterion_2_l1_matches_oracle(emit):
    rows = threshold_rows("l1", (3,))
    ok = all(r[2] for r in rows)
    emit("2 (L1 vs oracle, S=3)", ok, describe(rows))
    assert ok


def test_criterion_3_al_iteration_count(emit):
    hits = {(S, seed): first_hit(run("al", S, seed)[0]) for S in (3, 10) for seed in SEEDS}
    ok = all(h is not None and h <= MAX_OUTER for h in hits.values())
    emit("3 (AL outer iterations <= 20)", ok, ", ".join(f"S={S}/{seed}:{h}" for (S, seed), h in hits.items()))
    assert ok


def test_criterion_4_admm_contrast(emit):
    parts, ok_all = [], True
    for rho in (10.0, 100.0):
        wins = 0
        for seed in SEEDS:
            problem, ref = instance(3, seed)
            admm = run_admm(problem, rho=rho, max_iter=100, threads=1, oracle_objective=ref)
            al_eq = run("al", 3, seed)[0].final.eq_infeas
            admm_eq = admm.final.eq_infeas
            wins += admm_eq >= 10.0 * al_eq
            parts.append(f"rho={rho:g} seed={seed} admm={admm_eq:.1e} al={al_eq:.1e}")
        ok_all &= wins >= 4
        parts.append(f"rho={rho:g}: {wins}/5")
    emit("4 (ADMM infeasibility >= 10x AL)", ok_all, "; ".join(parts))
    assert ok_all


def fd_errors(blk, y, mode, delta=1e-8, h=1e-5):
    solver = LocalSolver(blk)

    def sens(yy):
        req = SubsolveRequest(blk, yy, delta, mode, tol=1e-10)
        return evaluate(solver, req, solver.solve(req).point)

    base = sens(y)
    g_fd, H_fd = np.zeros(y.size), np.zeros((y.size, y.size))
    for j in range(y.size):
        e = np.zeros(y.size)
        e[j] = h
        sp, sm = sens(y + e), sens(y - e)
        g_fd[j] = (sp.value - sm.value) / (2 * h)
        H_fd[:, j] = (sp.gradient - sm.gradient) / (2 * h)
    g_err = np.abs(g_fd - base.gradient).max() / max(np.abs(g_fd).max(), 1e-12)
    H_err = np.abs(H_fd - base.hessian).max() / max(np.abs(H_fd).max(), 1e-12)
    return g_err, H_err


def test_criterion_5_finite_differences(emit):
    rng = np.random.default_rng(2024)
    worst = {"al": [0.0, 0.0], "l1": [0.0, 0.0]}
    for _ in range(50):
        nx, ny, ne, ni = random_dims(rng)
        blk = random_block(rng, nx, ny, ne, ni)
        y = 0.3 * rng.standard_normal(ny)
        for name, mode in (("al", ALMode(10.0, rng.standard_normal(ny))), ("l1", L1Mode(100.0))):
            g_err, H_err = fd_errors(blk, y, mode)
            worst[name] = [max(worst[name][0], g_err), max(worst[name][1], H_err)]
    ok = all(g <= 1e-4 and H <= 1e-3 for g, H in worst.values())
    emit("5 (sensitivities vs finite differences)", ok,
         ", ".join(f"{k}: grad {g:.1e} hess {H:.1e}" for k, (g, H) in worst.items()))
    assert ok


def test_criterion_6_positive_definite(emit):
    rng = np.random.default_rng(6)
    mins = {}
    for label in ("rho=1", "rho=1e3", "rho=1e6", "l1"):
        lo = np.inf
        for _ in range(50):
            nx, ny, ne, ni = random_dims(rng)
            blk = random_block(rng, nx, ny, ne, ni)
            y = 0.3 * rng.standard_normal(ny)
            solver = LocalSolver(blk)
            if label == "l1":
                lb = 100.0
                p = solver.solve(SubsolveRequest(blk, y, 1e-8, L1Mode(lb), tol=1e-10)).point
                assert lb > np.abs(p.chi).max()
                with warnings.catch_warnings():
                    warnings.simplefilter("error", PenaltyWarning)
                    H = hessian_l1(blk, p, lb, 1e-8, solver=solver)
            else:
                rho = float(label.split("=")[1])
                p = solver.solve(SubsolveRequest(blk, y, 1e-8, ALMode(rho, np.zeros(ny)), tol=1e-10)).point
                H = hessian_al(blk, p, y, rho, tol=None)
            lo = min(lo, np.linalg.eigvalsh(H).min())
        mins[label] = lo
    ok = all(v > 0 for v in mins.values())
    emit("6 (Hessians positive definite)", ok, ", ".join(f"{k}: min eig {v:.2e}" for k, v in mins.items()))
    assert ok


def _step_vec(step):
    return np.concatenate([step.x, step.z, step.s, step.gamma, step.mu])


def test_criterion_7_schur_equals_direct(emit):
    rng = np.random.default_rng(7)
    worst_h = worst_s = 0.0
    fallbacks = 0
    for _ in range(100):
        nx, ny, ne, ni = random_dims(rng)
        blk = random_block(rng, nx, ny, ne, ni)
        y = 0.3 * rng.standard_normal(ny)
        rho, lam = 10.0 ** rng.uniform(0, 4), rng.standard_normal(ny)
        delta = 10.0 ** rng.uniform(-8, -1)
        req = SubsolveRequest(blk, y, delta, ALMode(rho, lam), tol=1e-10)
        p = LocalSolver(blk).solve(req).point
        Hs, Hd = hessian_al(blk, p, y, rho, tol=None), hessian_al_direct(blk, p, y, rho)
        worst_h = max(worst_h, np.abs(Hs - Hd).max() / np.abs(Hd).max())
        pt = interior_point(rng, blk, y)
        schur, fb = newton_step_schur(pt, SubsolveRequest(blk, y, delta, ALMode(rho, lam)))
        fallbacks += fb
        direct = _step_vec(newton_step_direct(pt, SubsolveRequest(blk, y, delta, ALMode(rho, lam))))
        worst_s = max(worst_s, np.abs(_step_vec(schur) - direct).max() / max(1.0, np.abs(direct).max()))
    ok = worst_h <= 1e-8 and worst_s <= 1e-8 and fallbacks == 0
    emit("7 (Schur path equals direct KKT)", ok,
         f"hessian {worst_h:.1e}, newton step {worst_s:.1e}, fallbacks {fallbacks}")
    assert ok


def test_criterion_8_frozen_parameter_master(emit):
    parts, ok_all = [], True
    for seed in SEEDS:
        problem, _ = instance(3, seed)
        r, _ = run("al", 3, seed)
        glob = problem.global_constraints
        modes = [ALMode(1e4, lam) for lam in r.flags["multipliers"]]
        with SubsystemPool(problem, 1) as pool:
            _, steps, converged = solve_master(MasterState(initial_point(glob)), pool, modes, 1e-4,
                                               1e-10, glob, max_iter=100)
        merits = [steps[0].merit_before] + [s.merit_after for s in steps]
        monotone = all(b <= a for a, b in zip(merits, merits[1:]))
        last_moving = [s for s in steps if not s.converged]
        final = steps[-1]
        ok = (converged and monotone and final.step_norm <= 1e-8
              and (not last_moving or last_moving[-1].alpha == 1.0))
        ok_all &= ok
        parts.append(f"seed={seed} iters={len(steps)} |dy|={final.step_norm:.1e} "
                     f"alpha={last_moving[-1].alpha if last_moving else 1.0} monotone={monotone}")
    emit("8 (frozen-parameter SQP)", ok_all, "; ".join(parts))
    assert ok_all


def test_criterion_9_schedule(emit):
    st = PenaltyState.initial(1, 1)
    seen = [(st.delta, st.rho, st.lambda_bar, st.phase)]
    for _ in range(12):
        st = schedule_update(st)
        seen.append((st.delta, st.rho, st.lambda_bar, st.phase))
    expect = [(0.1 * 0.2 ** min(k, 8), 1e3 * 3.0 ** min(k, 8), 100.0 * 2.0 ** min(k, 8), 2 if k >= 8 else 1)
              for k in range(13)]
    ok = seen == expect
    emit("9 (penalty schedule)", ok, f"frozen at delta={seen[-1][0]:.6g} rho={seen[-1][1]:.6g} "
                                     f"lambda_bar={seen[-1][2]:.6g}")
    assert ok


def test_criterion_10_tiny_instance_all_paths(emit):
    problem = tiny_instance()
    out = {}
    for name in ("al", "l1", "admm", "oracle"):
        t0 = time.perf_counter()
        if name == "oracle":
            sol = solve_monolithic(assemble_monolithic(problem))
            x, y, f = sol.x_list[0][0], sol.y[0], sol.objective
        else:
            r = {"al": lambda: run_al(problem, RunConfig(threads=1)),
                 "l1": lambda: run_l1(problem, RunConfig(threads=1)),
                 "admm": lambda: run_admm(problem, threads=1)}[name]()
            x, y, f = r.x_list[0][0], r.y[0], r.final.cost
        out[name] = (x, y, f, time.perf_counter() - t0)
    ok = all(abs(x - 1) <= 1e-4 and abs(y) <= 1e-4 and abs(f + 1) <= 1e-4 and t < 1.0
             for x, y, f, t in out.values())
    emit("10 (tiny instance, every path)", ok,
         "; ".join(f"{k}: x={x:.6f} y={y:.1e} f={f:.6f} {t * 1e3:.0f}ms" for k, (x, y, f, t) in out.items()))
    assert ok
