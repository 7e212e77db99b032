"""Trigonometric loops with winding, and the symmetries acting on them.

A loop is ``q(t) = xbar + xtil(t) + 2 pi v t / T`` where ``xbar`` lives on the
torus (stored reduced to ``[0, 2 pi)``) and ``xtil`` is a zero-mean
trigonometric polynomial of order ``K``::

    xtil_i(t) = sum_k a[i, k-1] cos(k w t) + b[i, k-1] sin(k w t),  w = 2 pi / T

The flat coefficient vector used by the optimizer is
``concat(xbar, a.ravel(), b.ravel())`` of length ``N * (2K + 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from math import gcd
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .exceptions import InvalidWindingError, ProblemMismatchError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class WindingVector:
    v: tuple[int, ...]

    @property
    def N(self) -> int:
        return len(self.v)

    @property
    def I0(self) -> tuple[int, ...]:
        """Zero-based indices of the non-rotating links."""
        return tuple(i for i, vi in enumerate(self.v) if vi == 0)

    @property
    def N0(self) -> int:
        return len(self.I0)

    @property
    def free(self) -> tuple[int, ...]:
        return tuple(i for i, vi in enumerate(self.v) if vi != 0)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.v, dtype=float)

    @property
    def norm2(self) -> int:
        return sum(vi * vi for vi in self.v)


def is_prime_winding(v: Sequence[int]) -> tuple[bool, str]:
    """Primality test; returns ``(ok, reason)``.

    Accepted: a single coordinate equal to +-1 with the rest zero, or at
    least two nonzero coordinates of which SOME pair is coprime.
    """
    nz = [abs(int(x)) for x in v if x != 0]
    if not nz:
        return False, "winding vector must be nonzero"
    if len(nz) == 1:
        if nz[0] == 1:
            return True, ""
        return False, f"single nonzero coordinate {nz[0]} is not +-1"
    for i in range(len(nz)):
        for j in range(i + 1, len(nz)):
            if gcd(nz[i], nz[j]) == 1:
                return True, ""
    return False, f"no pair of nonzero coordinates is coprime (gcd of all = {reduce(gcd, nz)})"


def validate_winding(v: Sequence[int]) -> WindingVector:
    vals = []
    for x in v:
        if int(x) != x:
            raise InvalidWindingError(f"winding entries must be integers, got {x!r}")
        vals.append(int(x))
    ok, reason = is_prime_winding(vals)
    if not ok:
        raise InvalidWindingError(reason)
    return WindingVector(tuple(vals))


@dataclass(frozen=True)
class LoopPath:
    T: float
    v: WindingVector
    xbar: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        xbar = np.mod(np.asarray(self.xbar, dtype=float), TWO_PI)
        # mod can return exactly 2 pi for tiny negative inputs
        xbar = np.where(xbar >= TWO_PI, 0.0, xbar)
        a = np.array(self.a, dtype=float, ndmin=2)
        b = np.array(self.b, dtype=float, ndmin=2)
        N = self.v.N
        if xbar.shape != (N,) or a.shape != b.shape or a.shape[0] != N:
            raise ProblemMismatchError(f"inconsistent loop shapes xbar={xbar.shape} a={a.shape} b={b.shape} N={N}")
        for arr in (xbar, a, b):
            arr.setflags(write=False)
        object.__setattr__(self, "xbar", xbar)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "T", float(self.T))

    @property
    def N(self) -> int:
        return self.v.N

    @property
    def K(self) -> int:
        return self.a.shape[1]

    @property
    def omega(self) -> float:
        return TWO_PI / self.T

    @classmethod
    def constant(cls, T: float, v: WindingVector, xbar, K: int) -> "LoopPath":
        return cls(T, v, xbar, np.zeros((v.N, K)), np.zeros((v.N, K)))

    @classmethod
    def from_vector(cls, T: float, v: WindingVector, K: int, c: np.ndarray) -> "LoopPath":
        N = v.N
        c = np.asarray(c, dtype=float)
        return cls(T, v, c[:N], c[N : N + N * K].reshape(N, K), c[N + N * K :].reshape(N, K))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.xbar, self.a.ravel(), self.b.ravel()])

    def same_problem(self, other: "LoopPath") -> bool:
        return self.v == other.v and self.T == other.T and self.K == other.K


def with_order(loop: LoopPath, K: int) -> LoopPath:
    """Same loop with harmonics truncated or zero-padded to order ``K``."""
    N, K0 = loop.N, loop.K
    a = np.zeros((N, K))
    b = np.zeros((N, K))
    n = min(K, K0)
    a[:, :n] = loop.a[:, :n]
    b[:, :n] = loop.b[:, :n]
    return LoopPath(loop.T, loop.v, loop.xbar, a, b)


def eval_loop(loop: LoopPath, t) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(q, qdot)`` at time(s) ``t``; shapes ``t.shape + (N,)``."""
    q, qd, _ = eval_loop_full(loop, t)
    return q, qd


def eval_loop_full(loop: LoopPath, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(q, qdot, qddot)`` at time(s) ``t``."""
    t = np.asarray(t, dtype=float)
    w = loop.omega
    k = np.arange(1, loop.K + 1)
    kw = k * w
    ph = np.multiply.outer(t, kw)
    C, S = np.cos(ph), np.sin(ph)
    xt = C @ loop.a.T + S @ loop.b.T
    xtd = (S * -kw) @ loop.a.T + (C * kw) @ loop.b.T
    xtdd = (C * -(kw**2)) @ loop.a.T + (S * -(kw**2)) @ loop.b.T
    vrate = loop.v.array * w
    q = loop.xbar + xt + np.multiply.outer(t, vrate)
    return q, xtd + vrate, xtdd


def norms(loop: LoopPath) -> tuple[float, float, float]:
    """Exact Parseval norms ``(||xtil||_L2, ||xdot||_L2, ||x||_W12)``.

    ``x`` here is ``xbar + xtil`` with ``xbar`` taken as stored in ``[0, 2 pi)``.
    """
    T = loop.T
    kw = np.arange(1, loop.K + 1) * loop.omega
    amp2 = loop.a**2 + loop.b**2
    l2 = 0.5 * T * amp2.sum()
    h1 = 0.5 * T * (kw**2 * amp2).sum()
    w12 = T * float(loop.xbar @ loop.xbar) + l2 + h1
    return float(np.sqrt(l2)), float(np.sqrt(h1)), float(np.sqrt(w12))


def coordinate_derivative_norms(loop: LoopPath) -> np.ndarray:
    """Per-coordinate ``||xdot_i||_L2``."""
    kw = np.arange(1, loop.K + 1) * loop.omega
    return np.sqrt(0.5 * loop.T * (kw**2 * (loop.a**2 + loop.b**2)).sum(axis=1))


def coordinate_l2_norms(loop: LoopPath) -> np.ndarray:
    return np.sqrt(0.5 * loop.T * (loop.a**2 + loop.b**2).sum(axis=1))


def _rotate(a: np.ndarray, b: np.ndarray, phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c, s = np.cos(phi), np.sin(phi)
    return a * c + b * s, b * c - a * s


def time_shift(loop: LoopPath, theta: float) -> LoopPath:
    """The circle action ``x(t) -> x(t + theta) + 2 pi v theta / T``."""
    phi = np.arange(1, loop.K + 1) * loop.omega * theta
    a, b = _rotate(loop.a, loop.b, phi[None, :])
    xbar = loop.xbar + loop.v.array * loop.omega * theta
    return LoopPath(loop.T, loop.v, xbar, a, b)


def wrap_angle(x):
    """Reduce to ``[-pi, pi)``."""
    return np.mod(np.asarray(x) + np.pi, TWO_PI) - np.pi


def w12_weights(T: float, N: int, K: int) -> np.ndarray:
    """Diagonal of the W^{1,2} Gram matrix in flat coefficient coordinates."""
    kw = np.arange(1, K + 1) * (TWO_PI / T)
    harm = np.tile(0.5 * T * (1.0 + kw**2), N)
    return np.concatenate([np.full(N, T), harm, harm])


def _dist2_and_slope(a: LoopPath, b: LoopPath, theta: float) -> tuple[float, float]:
    """Squared W^{1,2} distance from ``shift(a, theta)`` to ``b`` (mod 2 pi Z^N) and its theta-derivative."""
    T = a.T
    kw = np.arange(1, a.K + 1) * a.omega
    wt = 0.5 * T * (1.0 + kw**2)
    ra, rb = _rotate(a.a, a.b, (kw * theta)[None, :])
    dx = wrap_angle(a.xbar + a.v.array * a.omega * theta - b.xbar)
    da, db = ra - b.a, rb - b.b
    d2 = T * float(dx @ dx) + float((wt * (da**2 + db**2)).sum())
    # d(ra)/dtheta = kw * rb, d(rb)/dtheta = -kw * ra
    slope = 2 * T * float(dx @ (a.v.array * a.omega)) + 2 * float((wt * kw * (da * rb - db * ra)).sum())
    return d2, slope


def distance_mod_symmetries(a: LoopPath, b: LoopPath, quotient_time_shift: bool = False, grid: int = 256) -> float:
    """W^{1,2} distance minimized over ``2 pi Z^N`` mean shifts and, optionally, time shifts."""
    if a.N != b.N or not a.same_problem(b):
        raise ProblemMismatchError("loops belong to different problems (N, v, T or K differ)")
    if not quotient_time_shift:
        return float(np.sqrt(_dist2_and_slope(a, b, 0.0)[0]))
    thetas = np.arange(grid) * (a.T / grid)
    vals = np.array([_dist2_and_slope(a, b, th)[0] for th in thetas])
    best = float(vals.min())
    h = a.T / grid
    # refine around the few best grid cells by root-finding on the slope
    for idx in np.argsort(vals)[:3]:
        lo, hi = thetas[idx] - h, thetas[idx] + h
        s_lo = _dist2_and_slope(a, b, lo)[1]
        s_hi = _dist2_and_slope(a, b, hi)[1]
        if s_lo < 0 < s_hi:
            root = brentq(lambda th: _dist2_and_slope(a, b, th)[1], lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            best = min(best, _dist2_and_slope(a, b, root)[0])
    return float(np.sqrt(max(best, 0.0)))


def random_loop(rng: np.random.Generator, T: float, v: WindingVector, K: int, scale: float = 1.0, decay: float = 1.0) -> LoopPath:
    """Random smooth loop with amplitudes ``~ scale / k^(1+decay)``."""
    N = v.N
    k = np.arange(1, K + 1)
    env = scale / k ** (1.0 + decay)
    return LoopPath(
        T,
        v,
        rng.uniform(0, TWO_PI, N),
        rng.normal(size=(N, K)) * env,
        rng.normal(size=(N, K)) * env,
    )
