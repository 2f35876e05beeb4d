"""
One subsystem, one coupling variable
====================================

The smallest block QP: minimize x^2 - 2x + y^2 with loose upper bounds on
both variables.  Its value function is y^2 - 1, so every solver should land
on x = 1, y = 0 with objective -1.
"""

import numpy as np

from primaldec import assemble_monolithic, run_admm, run_al, run_l1, solve_monolithic
from primaldec.model import tiny_instance

problem = tiny_instance()
blk = problem.subsystems[0]
print("n_x =", blk.n_x, " n_y =", problem.n_y)

# centralized reference
ref = solve_monolithic(assemble_monolithic(problem))
print(f"oracle      x={ref.x_list[0][0]:.6f}  y={ref.y[0]:+.1e}  f={ref.objective:.6f}")

# the two decomposition variants and the ADMM baseline
for name, r in [("al", run_al(problem)), ("l1", run_l1(problem)), ("admm", run_admm(problem, max_iter=50))]:
    f = r.final
    print(f"{name:<11s} x={r.x_list[0][0]:.6f}  y={r.y[0]:+.1e}  f={f.cost:.6f}  "
          f"iterations={len(r.iterations)}")

# the outer log keeps one record per outer iteration
r = run_al(problem)
print("\niter  cost        eq_infeas  step_norm")
for rec in r.iterations:
    print(f"{rec.iter:4d}  {rec.cost:+.8f}  {rec.eq_infeas:.1e}    {rec.step_norm:.1e}")
assert np.isclose(r.final.cost, -1.0, atol=1e-4)
