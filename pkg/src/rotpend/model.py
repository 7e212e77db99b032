"""Planar N-pendulum: coefficients, kinetic matrix, potential, forcing.

Angles are measured from the downward vertical. The Lagrangian is
``L(q, p) = 0.5 * A(q) p.p + V(q)`` with ``V(q) = g * sum(beta_j cos q_j)``,
so ``V`` is minus the gravitational potential energy and the conserved
energy of the unforced system is ``0.5 * A(q) p.p - V(q)``.

All array-valued functions broadcast over leading axes: ``q`` may have
shape ``(..., N)`` and the result carries the same leading shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import InvalidParameterError

__all__ = [
    "PendulumParams",
    "Forcing",
    "derive_coefficients",
    "kinetic_matrix",
    "kinetic_matrix_derivative",
    "kinetic_force",
    "potential",
    "potential_gradient",
    "forcing_eval",
    "forcing_bound",
    "euler_lagrange_residual",
    "lagrangian",
    "energy",
]


def derive_coefficients(m: Sequence[float], ell: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(alpha, beta)`` with ``alpha_j = sum_{s>=j} m_s`` and ``beta_j = alpha_j * ell_j``."""
    m = np.asarray(m, dtype=float)
    ell = np.asarray(ell, dtype=float)
    if m.ndim != 1 or m.shape != ell.shape or m.size == 0:
        raise InvalidParameterError(f"masses and lengths must be equal-length 1-D lists, got {m.shape} and {ell.shape}")
    if not (np.all(np.isfinite(m)) and np.all(np.isfinite(ell))):
        raise InvalidParameterError("masses and lengths must be finite")
    if np.any(m <= 0) or np.any(ell <= 0):
        raise InvalidParameterError("masses and lengths must be strictly positive")
    alpha = np.cumsum(m[::-1])[::-1]
    return alpha, alpha * ell


@dataclass(frozen=True)
class PendulumParams:
    """Masses, lengths and gravity of a coplanar N-link pendulum."""

    m: tuple[float, ...]
    ell: tuple[float, ...]
    g: float = 1.0
    alpha: np.ndarray = field(init=False, repr=False, compare=False)
    beta: np.ndarray = field(init=False, repr=False, compare=False)
    # c[i, j] = alpha_{max(i,j)} ell_i ell_j, so A(q)_ij = c_ij cos(q_i - q_j)
    coupling: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(float(x) for x in self.m))
        object.__setattr__(self, "ell", tuple(float(x) for x in self.ell))
        if not (np.isfinite(self.g) and self.g > 0):
            raise InvalidParameterError(f"gravity must be positive, got {self.g}")
        object.__setattr__(self, "g", float(self.g))
        alpha, beta = derive_coefficients(self.m, self.ell)
        n = alpha.size
        idx = np.arange(n)
        jmax = np.maximum(idx[:, None], idx[None, :])
        ell = np.asarray(self.ell)
        coupling = alpha[jmax] * ell[:, None] * ell[None, :]
        for arr in (alpha, beta, coupling):
            arr.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "coupling", coupling)

    @property
    def N(self) -> int:
        return len(self.m)

    @property
    def gbeta(self) -> np.ndarray:
        """Gravity-scaled coefficients ``g * beta``; the potential is ``sum(gbeta * cos q)``."""
        return self.g * self.beta

    def scaled(self, mass_factor: float = 1.0, length_factor: float = 1.0) -> "PendulumParams":
        return PendulumParams(
            tuple(x * mass_factor for x in self.m),
            tuple(x * length_factor for x in self.ell),
            self.g,
        )


def _diff(q: np.ndarray) -> np.ndarray:
    return q[..., :, None] - q[..., None, :]


def kinetic_matrix(params: PendulumParams, q) -> np.ndarray:
    """Symmetric positive-definite kinetic matrix ``A(q)`` of shape ``(..., N, N)``."""
    q = np.asarray(q, dtype=float)
    return params.coupling * np.cos(_diff(q))


def kinetic_matrix_derivative(params: PendulumParams, q, y) -> np.ndarray:
    """Directional derivative ``A'(q) y``.

    Entry ``(i, j)`` is ``-c_ij sin(q_i - q_j) (y_i - y_j)``; the diagonal vanishes.
    With ``y = qdot`` this is the time derivative of ``A`` along a trajectory.
    """
    q = np.asarray(q, dtype=float)
    y = np.asarray(y, dtype=float)
    return -params.coupling * np.sin(_diff(q)) * _diff(y)


def kinetic_force(params: PendulumParams, q, qdot) -> np.ndarray:
    """Gradient ``0.5 * d/dq (A(q) qdot . qdot)``.

    Component ``i`` is ``-sum_{j != i} c_ij sin(q_i - q_j) qdot_i qdot_j``.
    """
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    w = params.coupling * np.sin(_diff(q)) * qdot[..., :, None] * qdot[..., None, :]
    return -w.sum(axis=-1)


def potential(params: PendulumParams, q) -> np.ndarray:
    """``V(q) = g * sum_j beta_j cos(q_j)``."""
    q = np.asarray(q, dtype=float)
    return np.cos(q) @ params.gbeta


def potential_gradient(params: PendulumParams, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return -params.gbeta * np.sin(q)


def lagrangian(params: PendulumParams, q, qdot) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    A = kinetic_matrix(params, q)
    kin = 0.5 * np.einsum("...i,...ij,...j->...", qdot, A, qdot)
    return kin + potential(params, q)


def energy(params: PendulumParams, q, qdot) -> np.ndarray:
    """Conserved energy of the unforced system, kinetic minus ``V``."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    A = kinetic_matrix(params, q)
    kin = 0.5 * np.einsum("...i,...ij,...j->...", qdot, A, qdot)
    return kin - potential(params, q)


@dataclass(frozen=True)
class Forcing:
    """Zero-mean trigonometric-polynomial forcing.

    ``terms[i]`` lists ``(k, cos_amp, sin_amp)`` triples for coordinate ``i``,
    meaning ``f_i(t) = sum cos_amp*cos(2 pi k t/T) + sin_amp*sin(2 pi k t/T)``.
    Harmonic indices must be ``>= 1`` so there is never a constant term.
    """

    T: float
    terms: tuple[tuple[tuple[int, float, float], ...], ...]

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise InvalidParameterError(f"forcing period must be positive, got {self.T}")
        clean = []
        for row in self.terms:
            triples = []
            for k, c, s in row:
                if int(k) != k or k < 1:
                    raise InvalidParameterError(f"harmonic index must be an integer >= 1, got {k}")
                triples.append((int(k), float(c), float(s)))
            clean.append(tuple(triples))
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "terms", tuple(clean))

    @classmethod
    def zero(cls, N: int, T: float) -> "Forcing":
        return cls(T, tuple(() for _ in range(N)))

    @classmethod
    def single(cls, N: int, T: float, coord: int, k: int = 1, cos_amp: float = 0.0, sin_amp: float = 0.0) -> "Forcing":
        rows = [() for _ in range(N)]
        rows[coord] = ((k, cos_amp, sin_amp),)
        return cls(T, tuple(rows))

    @property
    def N(self) -> int:
        return len(self.terms)

    @property
    def max_harmonic(self) -> int:
        return max((k for row in self.terms for k, _, _ in row), default=0)

    @property
    def is_zero(self) -> bool:
        return all(c == 0.0 and s == 0.0 for row in self.terms for _, c, s in row)

    def coefficient_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense ``(N, Kf)`` cosine and sine amplitude tables (column ``k-1`` is harmonic ``k``)."""
        kf = max(self.max_harmonic, 1)
        fc = np.zeros((self.N, kf))
        fs = np.zeros((self.N, kf))
        for i, row in enumerate(self.terms):
            for k, c, s in row:
                fc[i, k - 1] += c
                fs[i, k - 1] += s
        return fc, fs

    def with_period(self, T: float) -> "Forcing":
        return Forcing(T, self.terms)


def forcing_eval(f: Forcing, t) -> np.ndarray:
    """Evaluate ``f`` at time(s) ``t``; returns shape ``t.shape + (N,)``."""
    t = np.asarray(t, dtype=float)
    fc, fs = f.coefficient_arrays()
    k = np.arange(1, fc.shape[1] + 1)
    phase = 2 * np.pi * np.multiply.outer(np.mod(t, f.T), k) / f.T
    return np.cos(phase) @ fc.T + np.sin(phase) @ fs.T


def forcing_bound(f: Forcing, samples: int = 10_000) -> float:
    """Dense-sampled sup of ``|f(t)|`` (Euclidean norm) over one period."""
    if f.is_zero:
        return 0.0
    t = np.arange(samples) * (f.T / samples)
    return float(np.max(np.linalg.norm(forcing_eval(f, t), axis=-1)))


def forcing_l2_norm(f: Forcing) -> float:
    """Exact ``L^2(0, T)`` norm from Parseval."""
    fc, fs = f.coefficient_arrays()
    return float(np.sqrt(0.5 * f.T * (np.sum(fc**2) + np.sum(fs**2))))


def euler_lagrange_residual(params: PendulumParams, f: Forcing | None, t, q, qdot, qddot) -> np.ndarray:
    """``d/dt L_p - L_q - f(t)`` along a sampled trajectory.

    Expands to ``A(q) qddot + (dA/dt) qdot - 0.5 grad_q(A qdot.qdot) - grad V - f``.
    """
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    qddot = np.asarray(qddot, dtype=float)
    A = kinetic_matrix(params, q)
    Adot = kinetic_matrix_derivative(params, q, qdot)
    r = (
        np.einsum("...ij,...j->...i", A, qddot)
        + np.einsum("...ij,...j->...i", Adot, qdot)
        - kinetic_force(params, q, qdot)
        - potential_gradient(params, q)
    )
    if f is not None:
        r = r - forcing_eval(f, t)
    return r
