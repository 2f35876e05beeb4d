"""
Buildings sharing a grid connection
===================================

Three buildings with two thermal zones each plan their heating over eight
steps.  The coupling variables are the per-step grid powers, capped by the
shared connection.  We compare both decomposition variants and ADMM against
the centralized solution.
"""

from primaldec import assemble_monolithic, build_instance, make_scenario, run_admm, run_al, run_l1
from primaldec import solve_monolithic
from primaldec.outer import RunConfig, report_internal_timing

cfg = make_scenario(3, 8, 2, seed=1)
problem = build_instance(cfg)
print(f"S={problem.S}  n_y={problem.n_y}  grid cap per step={cfg.v_bar:.3f}")

ref = solve_monolithic(assemble_monolithic(problem)).objective
print(f"centralized objective {ref:.8f}\n")

runs = {
    "al": run_al(problem, RunConfig(oracle_objective=ref, threads=1)),
    "l1": run_l1(problem, RunConfig(oracle_objective=ref, threads=1)),
    "admm rho=10": run_admm(problem, rho=10.0, max_iter=100, threads=1, oracle_objective=ref),
    "admm rho=100": run_admm(problem, rho=100.0, max_iter=100, threads=1, oracle_objective=ref),
}

print(f"{'method':<13s} {'iters':>5s} {'rel gap':>9s} {'eq infeas':>9s} {'floats sent':>11s}")
for name, r in runs.items():
    f = r.final
    print(f"{name:<13s} {len(r.iterations):5d} {f.rel_gap:9.1e} {f.eq_infeas:9.1e} {f.comm_floats:11d}")

# decomposition reaches the centralized cost in a handful of outer iterations;
# ADMM after a hundred iterations is still percent-level away from it

# where the time goes in the AL run
print()
for k, v in report_internal_timing(runs["al"]).items():
    print(f"  {k:<17s} {v:5.1f}%")
