"""Independent certification of candidate rotations by ODE integration."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .loopspace import TWO_PI, LoopPath, eval_loop, eval_loop_full
from .model import (
    Forcing,
    PendulumParams,
    euler_lagrange_residual,
    forcing_bound,
    forcing_eval,
    kinetic_force,
    kinetic_matrix,
    kinetic_matrix_derivative,
    potential_gradient,
)


def acceleration(params: PendulumParams, f: Forcing | None, t: float, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
    """Solve ``A(q) qdd = 0.5 grad(A qd.qd) - Adot qd + grad V + f`` for ``qdd``."""
    A = kinetic_matrix(params, q)
    rhs = kinetic_force(params, q, qd) - kinetic_matrix_derivative(params, q, qd) @ qd + potential_gradient(params, q)
    if f is not None:
        rhs = rhs + forcing_eval(f, t)
    return np.linalg.solve(A, rhs)


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray


def integrate(params: PendulumParams, f: Forcing | None, q0, qd0, T: float, steps: int = 4096) -> Trajectory:
    """Classic fixed-step RK4 on the first-order system ``(q, qdot)`` over ``[0, T]``."""
    if steps < 1000:
        raise ValueError("steps must be >= 1000")
    h = T / steps
    q = np.array(q0, dtype=float)
    qd = np.array(qd0, dtype=float)
    ts = np.arange(steps + 1) * h
    Q = np.empty((steps + 1, q.size))
    QD = np.empty_like(Q)
    Q[0], QD[0] = q, qd
    acc = lambda t, x, y: acceleration(params, f, t, x, y)  # noqa: E731
    for n in range(steps):
        t = ts[n]
        k1q, k1v = qd, acc(t, q, qd)
        k2q, k2v = qd + 0.5 * h * k1v, acc(t + 0.5 * h, q + 0.5 * h * k1q, qd + 0.5 * h * k1v)
        k3q, k3v = qd + 0.5 * h * k2v, acc(t + 0.5 * h, q + 0.5 * h * k2q, qd + 0.5 * h * k2v)
        k4q, k4v = qd + h * k3v, acc(t + h, q + h * k3q, qd + h * k3v)
        q = q + (h / 6) * (k1q + 2 * k2q + 2 * k3q + k4q)
        qd = qd + (h / 6) * (k1v + 2 * k2v + 2 * k3v + k4v)
        Q[n + 1], QD[n + 1] = q, qd
    return Trajectory(ts, Q, QD)


@dataclass(frozen=True)
class Certification:
    defect: float
    residual: float
    max_gap: float
    defect_tol: float
    residual_tol: float
    steps: int

    @property
    def passed(self) -> bool:
        return self.defect < self.defect_tol and self.residual < self.residual_tol

    def as_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def periodicity_defect(traj: Trajectory, v: np.ndarray) -> float:
    dq = traj.q[-1] - traj.q[0] - TWO_PI * np.asarray(v, dtype=float)
    dv = traj.qd[-1] - traj.qd[0]
    return float(np.linalg.norm(dq) + np.linalg.norm(dv))


def loop_residual(params: PendulumParams, f: Forcing, loop: LoopPath, M: int | None = None) -> float:
    """Max Euclidean Euler-Lagrange residual of the loop on the quadrature grid."""
    M = M or 8 * loop.K
    t = np.arange(M) * (loop.T / M)
    q, qd, qdd = eval_loop_full(loop, t)
    r = euler_lagrange_residual(params, f, t, q, qd, qdd)
    return float(np.linalg.norm(r, axis=-1).max())


def certify(params: PendulumParams, f: Forcing, loop: LoopPath, steps: int = 4096, M0: float | None = None) -> Certification:
    """Integrate from the loop's initial state and compare with the winding condition.

    PASS iff ``defect < 1e-5 (1 + |2 pi v|)`` and
    ``residual < 1e-4 (1 + M0 + g sum beta)``.
    """
    if M0 is None:
        M0 = forcing_bound(f)
    q0, qd0 = eval_loop(loop, 0.0)
    traj = integrate(params, f, q0, qd0, loop.T, steps)
    defect = periodicity_defect(traj, loop.v.array)
    residual = loop_residual(params, f, loop)
    stride = max(1, steps // 256)
    qv, _ = eval_loop(loop, traj.t[::stride])
    gap = float(np.abs(qv - traj.q[::stride]).max())
    return Certification(
        defect=defect,
        residual=residual,
        max_gap=gap,
        defect_tol=1e-5 * (1 + TWO_PI * float(np.linalg.norm(loop.v.array))),
        residual_tol=1e-4 * (1 + M0 + float(params.gbeta.sum())),
        steps=steps,
    )
