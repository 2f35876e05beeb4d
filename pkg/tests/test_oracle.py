import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from primaldec.errors import InfeasibleError
from primaldec.model import BlockQP, GlobalConstraints, SubsystemBlock, assemble_monolithic, tiny_instance
from primaldec.oracle import ENUMERATION_CAP, enumerate_active_sets, feasibility_check, solve_monolithic

from helpers import random_problem


def test_t1():
    sol = solve_monolithic(tiny_instance())
    assert np.allclose(sol.x_full, [1.0, 0.0], atol=1e-8)
    assert sol.objective == pytest.approx(-1.0, abs=1e-10)
    assert sol.active_set.size == 0 and sol.enumeration_agrees
    assert sol.kkt_residual <= 1e-10


def test_equality_only_projection():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((2, 4))
    b = rng.standard_normal(2)
    blk = SubsystemBlock(Hxx=np.eye(3), Hxy=np.zeros((3, 1)), Hyy=[[1.0]], hx=np.zeros(3), hy=[0.0],
                         Ax=A[:, :3], Ay=A[:, 3:], b=b, Bx=np.zeros((0, 3)), By=np.zeros((0, 1)), d=[])
    sol = solve_monolithic(BlockQP((blk,), GlobalConstraints.empty(1), 1))
    expected = A.T @ np.linalg.solve(A @ A.T, b)
    assert np.allclose(sol.x_full, expected, atol=1e-10)


def test_tight_box_enumeration_agrees():
    blk = tiny_instance().subsystems[0].replace(d=[0.25])  # x <= 0.25 active
    sol = solve_monolithic(BlockQP((blk,), tiny_instance().global_constraints, 1))
    assert sol.enumeration_agrees
    assert sol.x_full[0] == pytest.approx(0.25, abs=1e-8) and list(sol.active_set) == [0]


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_interior_point_agrees_with_enumeration(seed):
    rng = np.random.default_rng(seed)
    problem = random_problem(rng, S=int(rng.integers(1, 3)), ny=int(rng.integers(1, 3)), box=0.5)
    mono = assemble_monolithic(problem)
    if mono.Aineq.shape[0] > ENUMERATION_CAP:
        return
    sol = solve_monolithic(mono)
    ref = enumerate_active_sets(mono.H.toarray(), mono.h, mono.Aeq.toarray(), mono.beq,
                                mono.Aineq.toarray(), mono.dineq)
    assert np.abs(sol.x_full - ref[0]).max() <= 1e-8 * (1 + np.abs(ref[0]).max())
    assert abs(sol.objective - ref[1]) <= 1e-9 * max(1.0, abs(ref[1]))
    assert sol.enumeration_agrees


def test_feasible_t1():
    assert feasibility_check(tiny_instance()).feasible


def _contradictory():
    t1 = tiny_instance()
    glob = GlobalConstraints(np.zeros((0, 1)), [], [[1.0], [-1.0]], [0.0, -1.0], 1)  # y <= 0, y >= 1
    return BlockQP(t1.subsystems, glob, 1)


def test_contradictory_rows_infeasible_with_witness():
    res = feasibility_check(_contradictory())
    assert not res.feasible
    assert res.violation == pytest.approx(1.0, abs=1e-9)
    assert res.witness is not None and res.witness.size == 2


def test_solve_raises_on_infeasible():
    with pytest.raises(InfeasibleError):
        solve_monolithic(_contradictory())
