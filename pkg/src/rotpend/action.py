"""Action functional on discretized loops, with gradient and Hessian.

The action is ``L1 + L2 + L3``::

    L1 = 0.5 * int A(q) qdot.qdot dt     L2 = int V(q) dt     L3 = int f.q dt

Periodic integrands use the trapezoid rule on ``M`` uniform nodes. The one
non-periodic piece, ``int f . (2 pi v t / T) dt``, is the constant ``f_v``
and is integrated exactly termwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import NotCriticalError, ProblemMismatchError
from .loopspace import TWO_PI, LoopPath, WindingVector, w12_weights
from .model import Forcing, PendulumParams, forcing_eval

__all__ = [
    "ActionBreakdown",
    "ActionEvaluator",
    "HessianInfo",
    "action",
    "action_gradient",
    "action_hessian_fd",
    "evaluator_for",
    "f_moment_exact",
]


@dataclass(frozen=True)
class ActionBreakdown:
    L1: float
    L2: float
    L3: float

    @property
    def total(self) -> float:
        return self.L1 + self.L2 + self.L3


def f_moment_exact(f: Forcing, v: WindingVector, T: float) -> float:
    """``int_0^T f(t) . (2 pi v t / T) dt`` for a trigonometric forcing.

    Termwise: ``int_0^T t cos(k w t) dt = 0`` and ``int_0^T t sin(k w t) dt = -T^2 / (2 pi k)``.
    """
    if f.T != T:
        raise ProblemMismatchError(f"forcing period {f.T} differs from loop period {T}")
    _, fs = f.coefficient_arrays()
    k = np.arange(1, fs.shape[1] + 1)
    return float(-T * (v.array @ (fs / k).sum(axis=1)))


class ActionEvaluator:
    """Quadrature state for one ``(params, forcing, v, T, K, M)`` problem.

    Methods accept either a single flat coefficient vector of length
    ``N(2K+1)`` or a batch of shape ``(B, N(2K+1))``.
    """

    def __init__(self, params: PendulumParams, f: Forcing, v: WindingVector, T: float, K: int, M: int | None = None):
        if f.T != T:
            raise ProblemMismatchError(f"forcing period {f.T} differs from loop period {T}")
        if params.N != v.N or f.N != v.N:
            raise ProblemMismatchError("params, forcing and winding vector disagree on N")
        self.params, self.f, self.v = params, f, v
        self.T, self.K = float(T), int(K)
        self.M = int(M) if M is not None else 8 * self.K
        if self.M <= 2 * (self.K + f.max_harmonic):
            raise ValueError(f"quadrature grid M={self.M} too coarse for K={K} and forcing harmonics {f.max_harmonic}")
        self.N = v.N
        self.n = self.N * (2 * self.K + 1)
        self.h = self.T / self.M
        self.omega = TWO_PI / self.T
        self.t = np.arange(self.M) * self.h
        self.kw = np.arange(1, self.K + 1) * self.omega
        ph = np.outer(self.t, self.kw)
        self.C, self.S = np.cos(ph), np.sin(ph)
        self.drift = np.outer(self.t, v.array * self.omega)  # (M, N)
        self.vrate = v.array * self.omega
        self.fs_t = forcing_eval(f, self.t)  # (M, N)
        self.f_v = f_moment_exact(f, v, T)
        self.weights = w12_weights(self.T, self.N, self.K)
        # int f dt must vanish; otherwise f . xbar would enter the action
        fmean = self.fs_t.sum(axis=0) * self.h
        assert np.all(np.abs(fmean) <= 1e-12 * (1.0 + np.abs(self.fs_t).max() * self.T)), fmean

    def split(self, c: np.ndarray):
        N, K = self.N, self.K
        xbar = c[..., :N]
        a = c[..., N : N + N * K].reshape(c.shape[:-1] + (N, K))
        b = c[..., N + N * K :].reshape(c.shape[:-1] + (N, K))
        return xbar, a, b

    def samples(self, c: np.ndarray):
        """Return ``(q, qdot, xtil)`` on the grid, each shaped ``(..., M, N)``."""
        xbar, a, b = self.split(c)
        at, bt = np.swapaxes(a, -1, -2), np.swapaxes(b, -1, -2)
        xt = self.C @ at + self.S @ bt
        xtd = (self.S * -self.kw) @ at + (self.C * self.kw) @ bt
        q = xbar[..., None, :] + xt + self.drift
        return q, xtd + self.vrate, xt

    def breakdown(self, c: np.ndarray):
        c = np.asarray(c, dtype=float)
        q, qd, xt = self.samples(c)
        p = self.params
        cosd = np.cos(q[..., :, None] - q[..., None, :])
        kin = 0.5 * np.einsum("...i,ij,...ij,...j->...", qd, p.coupling, cosd, qd)
        L1 = self.h * kin.sum(axis=-1)
        L2 = self.h * (np.cos(q) @ p.gbeta).sum(axis=-1)
        # f . xbar integrates to zero (checked at construction)
        L3 = self.h * np.einsum("mi,...mi->...", self.fs_t, xt) + self.f_v
        return L1, L2, L3

    def value(self, c: np.ndarray):
        L1, L2, L3 = self.breakdown(c)
        return L1 + L2 + L3

    def value_and_gradient(self, c: np.ndarray):
        c = np.asarray(c, dtype=float)
        p = self.params
        q, qd, xt = self.samples(c)
        dq = q[..., :, None] - q[..., None, :]
        cosd, sind = np.cos(dq), np.sin(dq)
        Aq = p.coupling * cosd
        P = np.einsum("...ij,...j->...i", Aq, qd)  # dL/dqdot
        kin = 0.5 * np.einsum("...i,...i->...", P, qd)
        F = (
            -np.einsum("...ij,...i,...j->...i", p.coupling * sind, qd, qd)
            - p.gbeta * np.sin(q)
            + self.fs_t
        )  # dL/dq
        L1 = self.h * kin.sum(axis=-1)
        L2 = self.h * (np.cos(q) @ p.gbeta).sum(axis=-1)
        L3 = self.h * np.einsum("mi,...mi->...", self.fs_t, xt) + self.f_v
        Ft = np.swapaxes(F, -1, -2)  # (..., N, M)
        Pt = np.swapaxes(P, -1, -2)
        g_xbar = self.h * Ft.sum(axis=-1)
        g_a = self.h * (Ft @ self.C - (Pt @ self.S) * self.kw)
        g_b = self.h * (Ft @ self.S + (Pt @ self.C) * self.kw)
        lead = c.shape[:-1]
        grad = np.concatenate(
            [g_xbar, g_a.reshape(lead + (-1,)), g_b.reshape(lead + (-1,))], axis=-1
        )
        return L1 + L2 + L3, grad

    def gradient(self, c: np.ndarray):
        return self.value_and_gradient(c)[1]

    def loop(self, c: np.ndarray) -> LoopPath:
        return LoopPath.from_vector(self.T, self.v, self.K, c)

    def check_loop(self, loop: LoopPath):
        if loop.T != self.T:
            raise ProblemMismatchError(f"loop period {loop.T} differs from forcing period {self.T}")
        if loop.v != self.v or loop.K != self.K:
            raise ProblemMismatchError("loop winding vector or order does not match the evaluator")


@lru_cache(maxsize=64)
def evaluator_for(params: PendulumParams, f: Forcing, v: WindingVector, T: float, K: int, M: int | None = None) -> ActionEvaluator:
    return ActionEvaluator(params, f, v, T, K, M)


def _evaluator(params, f, loop, M=None) -> ActionEvaluator:
    if f.T != loop.T:
        raise ProblemMismatchError(f"loop period {loop.T} differs from forcing period {f.T}")
    return evaluator_for(params, f, loop.v, loop.T, loop.K, M)


def action(params: PendulumParams, f: Forcing, loop: LoopPath, M: int | None = None) -> ActionBreakdown:
    L1, L2, L3 = _evaluator(params, f, loop, M).breakdown(loop.to_vector())
    return ActionBreakdown(float(L1), float(L2), float(L3))


def action_gradient(params: PendulumParams, f: Forcing, loop: LoopPath, M: int | None = None) -> np.ndarray:
    """Gradient with respect to the flat coefficient vector ``(xbar, a, b)``."""
    return _evaluator(params, f, loop, M).gradient(loop.to_vector())


@dataclass(frozen=True)
class HessianInfo:
    """Hessian spectrum in the W^{1,2}-orthonormal coefficient basis.

    ``matrix`` is the raw coefficient-space Hessian; ``eigenvalues`` belong to
    ``D^{-1/2} H D^{-1/2}`` with ``D`` the W^{1,2} Gram diagonal, which has the
    same inertia as ``H`` but a scale-free spectrum.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    symmetry_defect: float
    tau: float

    @property
    def morse_index(self) -> int:
        return int(np.sum(self.eigenvalues < -self.tau))

    @property
    def near_zero(self) -> int:
        return int(np.sum(np.abs(self.eigenvalues) <= self.tau))

    def nondegenerate(self, zero_modes: int = 0) -> bool:
        return self.near_zero == zero_modes


def hessian_normalized(ev: ActionEvaluator, c: np.ndarray, step: float = 1e-5) -> tuple[np.ndarray, float]:
    """Central-difference Hessian of the gradient in W^{1,2}-normalized coordinates.

    Returns the symmetrized matrix and the relative symmetry defect of the raw estimate.
    """
    s = 1.0 / np.sqrt(ev.weights)
    E = np.diag(s * step)
    pts = np.concatenate([c + E, c - E])
    g = ev.gradient(pts)
    n = c.size
    cols = (g[:n] - g[n:]) / (2 * step)  # row j: H @ (s_j e_j)
    Hn = (cols * s).T  # D^-1/2 H D^-1/2, column j
    nrm = np.linalg.norm(Hn)
    defect = float(np.linalg.norm(Hn - Hn.T) / nrm) if nrm > 0 else 0.0
    return 0.5 * (Hn + Hn.T), defect


def action_hessian_fd(params: PendulumParams, f: Forcing, loop: LoopPath, M: int | None = None,
                      step: float = 1e-5, crit_tol: float = 1e-6) -> HessianInfo:
    """Finite-difference Hessian at a near-critical loop, with its spectrum."""
    ev = _evaluator(params, f, loop, M)
    c = loop.to_vector()
    gnorm = float(np.linalg.norm(ev.gradient(c)))
    if gnorm > crit_tol:
        raise NotCriticalError(f"gradient norm {gnorm:.3e} exceeds {crit_tol:.1e}; Hessian classification needs a critical point")
    return _hessian_info(ev, c, step)


def _hessian_info(ev: ActionEvaluator, c: np.ndarray, step: float = 1e-5) -> HessianInfo:
    Hn, defect = hessian_normalized(ev, c, step)
    eig = np.linalg.eigvalsh(Hn)
    tau = 1e-5 * (1.0 + float(np.abs(eig).max()))
    sq = np.sqrt(ev.weights)
    H = Hn * sq[:, None] * sq[None, :]
    return HessianInfo(H, eig, defect, tau)
