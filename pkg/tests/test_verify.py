import math

import numpy as np
import pytest

from rotpend.loopspace import LoopPath, eval_loop, random_loop, validate_winding
from rotpend.model import Forcing, PendulumParams, energy
from rotpend.solver import RotationProblem, minimize
from rotpend.verify import certify, integrate, loop_residual

SINGLE = PendulumParams((1.0,), (1.0,))


def test_equilibrium_stays_put():
    traj = integrate(SINGLE, None, [0.0], [0.0], 1.0, 1000)
    assert np.all(traj.q == 0.0) and np.all(traj.qd == 0.0)
    assert traj.t[-1] == pytest.approx(1.0)


def test_steps_floor():
    with pytest.raises(ValueError):
        integrate(SINGLE, None, [0.0], [1.0], 1.0, 999)


def test_single_link_energy_is_conserved():
    traj = integrate(SINGLE, None, [0.0], [7.0], 1.0, 4096)
    E = 0.5 * traj.qd[:, 0] ** 2 - np.cos(traj.q[:, 0])
    assert abs(E[-1] - E[0]) < 1e-8


@pytest.mark.parametrize("N", [2, 3])
def test_energy_is_conserved_for_chains(N, rng):
    p = PendulumParams(tuple(rng.uniform(0.5, 2, N)), tuple(rng.uniform(0.5, 2, N)), 1.0)
    q0, qd0 = rng.uniform(0, 2 * np.pi, N), rng.normal(0, 2, N)
    traj = integrate(p, None, q0, qd0, 1.0, 8192)
    E0, E1 = energy(p, traj.q[0], traj.qd[0]), energy(p, traj.q[-1], traj.qd[-1])
    assert abs(E1 - E0) < 1e-7 * (1 + abs(E0))


def test_integrator_order_by_richardson():
    ends = [integrate(SINGLE, None, [0.0], [3.0], 10.0, n).q[-1, 0] for n in (1000, 2000, 4000)]
    rate = math.log2(abs(ends[0] - ends[1]) / abs(ends[1] - ends[2]))
    assert 3.7 <= rate <= 4.3


def test_random_loop_fails_certification(unit_double, rng):
    loop = random_loop(rng, 1.0, validate_winding((1, 0)), 6, scale=0.5)
    cert = certify(unit_double, Forcing.zero(2, 1.0), loop)
    assert not cert.passed
    assert cert.defect > 1e-2


def test_constant_rotation_is_not_a_solution_under_gravity():
    loop = LoopPath.constant(1.0, validate_winding((1,)), [0.0], 4)
    assert loop_residual(SINGLE, Forcing.zero(1, 1.0), loop) == pytest.approx(1.0, rel=1e-12)


def test_single_link_rotation_certifies():
    prob = RotationProblem(SINGLE, Forcing.zero(1, 1.0), (1,), 1.0, K=48)
    res = minimize(prob, LoopPath.constant(1.0, prob.v, [0.3], 48), tol_conv=1e-10)
    loop = prob.evaluator.loop(res.c)
    cert = certify(SINGLE, prob.forcing, loop)
    assert cert.passed, cert
    assert cert.max_gap < 1e-4
    traj = integrate(SINGLE, None, *eval_loop(loop, 0.0), 1.0, 4096)
    assert traj.q[-1, 0] - traj.q[0, 0] == pytest.approx(2 * math.pi, abs=1e-5)
