import numpy as np
import pytest

from primaldec.admm import (AdmmState, admm_global_step, admm_local_step, admm_multiplier_step,
                            run_admm)
from primaldec.hvac import build_instance, make_scenario
from primaldec.model import GlobalConstraints, SubsystemBlock, tiny_instance
from primaldec.qp import kkt_residual

T1 = tiny_instance()
BLK = T1.subsystems[0]


def test_local_step_t1():
    x, z, _ = admm_local_step(BLK, np.zeros(1), np.zeros(1), 2.0)
    assert x[0] == pytest.approx(1.0, abs=1e-8) and z[0] == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize("y,lam,rho", [(0.4, 0.0, 3.0), (0.4, 1.2, 3.0), (-1.0, 0.5, 0.5)])
def test_local_copy_closed_form(y, lam, rho):
    # no curvature or linear term on z: stationarity gives z = y + lam / rho
    blk = BLK.replace(Hyy=[[0.0]])
    _, z, _ = admm_local_step(blk, np.array([y]), np.array([lam]), rho)
    assert z[0] == pytest.approx(y + lam / rho, abs=1e-8)


def test_local_step_active_inequality():
    blk = BLK.replace(d=[0.5])
    x, _, sol = admm_local_step(blk, np.zeros(1), np.zeros(1), 2.0)
    assert x[0] == pytest.approx(0.5, abs=1e-8)
    assert sol.z[0] > 0


def test_local_step_kkt_rechecked():
    rng = np.random.default_rng(0)
    problem = build_instance(make_scenario(2, 3, 2, seed=3))
    blk = problem.subsystems[0]
    y, lam, rho = rng.standard_normal(problem.n_y), rng.standard_normal(problem.n_y), 10.0
    x, z, sol = admm_local_step(blk, y, lam, rho)
    H = np.block([[blk.Hxx, blk.Hxy], [blk.Hxy.T, blk.Hyy + rho * np.eye(blk.n_y)]])
    c = np.concatenate([blk.hx, blk.hy - lam - rho * y])
    res = kkt_residual(H, c, np.hstack([blk.Ax, blk.Ay]), blk.b, np.hstack([blk.Bx, blk.By]), blk.d,
                       np.concatenate([x, z]), sol.y, sol.z)
    assert res <= 1e-8


def test_global_step_examples():
    free = GlobalConstraints.empty(1)
    assert admm_global_step([np.zeros(1)], [np.zeros(1)], 1.0, T1.global_constraints)[0] == \
        pytest.approx(0.0, abs=1e-9)
    assert admm_global_step([np.ones(1), np.full(1, 3.0)], [np.zeros(1)] * 2, 1.0, free)[0] == \
        pytest.approx(2.0, abs=1e-9)
    capped = GlobalConstraints(np.zeros((0, 1)), [], [[1.0]], [1.0], 1)
    assert admm_global_step([np.ones(1), np.full(1, 3.0)], [np.zeros(1)] * 2, 1.0, capped)[0] == \
        pytest.approx(1.0, abs=1e-8)


def test_multiplier_step():
    s = AdmmState([np.zeros(1)], [np.array([0.5])], np.array([1.0]), [np.zeros(1)], 2.0)
    assert admm_multiplier_step(s).lam_list[0][0] == 1.0
    s = AdmmState([np.zeros(1)], [np.array([0.3])], np.array([0.3]), [np.array([0.7])], 2.0)
    assert admm_multiplier_step(s).lam_list[0][0] == 0.7


def test_rejects_nonpositive_penalty():
    with pytest.raises(ValueError):
        run_admm(T1, rho=0.0)
    with pytest.raises(ValueError):
        AdmmState([], [], np.zeros(1), [], 0.0)


def test_t1_converges():
    r = run_admm(T1, rho=2.0, max_iter=50, threads=1)
    assert len(r.iterations) == 50
    assert abs(r.y[0]) <= 1e-6 and abs(r.x_list[0][0] - 1.0) <= 1e-6
    assert np.abs(r.flags["multipliers"][0]).max() <= 1e-6


def test_communication_and_eventual_decrease_on_hvac():
    problem = build_instance(make_scenario(3, 8, 2, seed=1))
    r = run_admm(problem, rho=10.0, max_iter=100, threads=1)
    per_iter = 2 * problem.S * problem.n_y
    assert [rec.comm_floats for rec in r.iterations] == [per_iter * (k + 1) for k in range(100)]
    assert r.iterations[99].step_norm < r.iterations[9].step_norm
