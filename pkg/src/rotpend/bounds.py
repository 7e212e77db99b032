"""Closed-form constants, level construction, and estimate oracles.

Gravity enters every formula through ``g * beta`` (``params.gbeta``); with
``g = 1`` these reduce to the unscaled expressions.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .action import ActionEvaluator, f_moment_exact
from .exceptions import HypothesisError, InfeasibleError
from .loopspace import (
    LoopPath,
    WindingVector,
    coordinate_derivative_norms,
    norms,
    validate_winding,
)
from .model import Forcing, PendulumParams, forcing_bound, forcing_l2_norm, kinetic_matrix
from .torus import tau

log = logging.getLogger(__name__)

CONSERVATIVE_LAMBDA = 0.999


# -- kinetic eigenvalue ---------------------------------------------------------------

def _min_eig(params: PendulumParams, diffs: np.ndarray) -> np.ndarray:
    q = np.concatenate([np.zeros(diffs.shape[:-1] + (1,)), diffs], axis=-1)
    return np.linalg.eigvalsh(kinetic_matrix(params, q))[..., 0]


@dataclass(frozen=True)
class LambdaEstimate:
    value: float        # refined estimate of the infimum
    grid_value: float   # grid minimum, an upper bound on the infimum
    argmin: tuple[float, ...]

    @property
    def conservative(self) -> float:
        return CONSERVATIVE_LAMBDA * self.value


def lambda_search(params: PendulumParams, grid_resolution: int = 72, rounds: int = 3) -> LambdaEstimate:
    """Grid sweep over angle differences ``q_j - q_1`` plus coordinate-descent refinement."""
    if grid_resolution < 8:
        raise ValueError("grid_resolution must be >= 8")
    N = params.N
    if N == 1:
        v = float(params.coupling[0, 0])
        return LambdaEstimate(v, v, ())
    axis = np.arange(grid_resolution) * (2 * np.pi / grid_resolution)
    best, arg = np.inf, None
    if N == 2:
        chunks = [axis[:, None]]
    else:
        rest = np.array(list(itertools.product(axis, repeat=N - 2)))
        # chunk over the first difference coordinate to bound memory
        chunks = (np.concatenate([np.full((rest.shape[0], 1), first), rest], axis=1) for first in axis)
    for diffs in chunks:
        e = _min_eig(params, diffs)
        i = int(np.argmin(e))
        if e[i] < best:
            best, arg = float(e[i]), diffs[i].copy()
    grid_best = best
    x = arg.copy()
    h = 2 * np.pi / grid_resolution
    for _ in range(rounds):
        for j in range(N - 1):
            def fun(s, j=j):
                y = x.copy()
                y[j] = s
                return float(_min_eig(params, y))
            r = minimize_scalar(fun, bounds=(x[j] - h, x[j] + h), method="bounded", options={"xatol": 1e-12})
            if r.fun < best:
                best, x[j] = float(r.fun), float(r.x)
    return LambdaEstimate(min(best, grid_best), grid_best, tuple(float(s) for s in x))


def lambda_min(params: PendulumParams, grid_resolution: int = 72) -> float:
    """Infimum over configurations of the smallest eigenvalue of ``A(q)``."""
    return lambda_search(params, grid_resolution).value


# -- closed forms -------------------------------------------------------------------

def gamma1(params: PendulumParams, v: WindingVector | Sequence[int]) -> float:
    """``2 pi^2 (sum alpha_i l_i^2 v_i^2 + sum_{i<j, v_i = v_j} 2 alpha_j l_i l_j v_i v_j)``."""
    vv = np.asarray(v.v if isinstance(v, WindingVector) else v, dtype=float)
    al, ell = params.alpha, np.asarray(params.ell)
    s = float(np.sum(al * ell**2 * vv**2))
    N = params.N
    for i in range(N):
        for j in range(i + 1, N):
            if vv[i] == vv[j]:
                s += 2 * al[j] * ell[i] * ell[j] * vv[i] * vv[j]
    return 2 * np.pi**2 * s


def gamma2(params: PendulumParams, M0: float, lam: float) -> float:
    """``(1 / (8 pi^2 lambda)) * sum (g beta_i + M0)^2``."""
    return float(np.sum((params.gbeta + M0) ** 2) / (8 * np.pi**2 * lam))


def sigma_for(v: WindingVector) -> tuple[int, ...]:
    """Increasing enumeration of the non-rotating links."""
    return v.I0


def _require_codes(sigma: Sequence[int], N: int):
    if not 1 <= len(sigma) <= N - 1:
        raise HypothesisError(f"need 1 <= N0 <= N-1, got N0={len(sigma)} for N={N}")


def beta_of_k(params: PendulumParams, sigma: Sequence[int], k: int) -> float:
    """Signed sum ``sum_i (-1)^(1 - tau_i(k)) g beta_{sigma(i)}``."""
    bits = tau(k, len(sigma))
    gb = params.gbeta
    return float(sum((1.0 if b else -1.0) * gb[s] for s, b in zip(sigma, bits)))


def beta_levels(params: PendulumParams, sigma: Sequence[int]) -> np.ndarray:
    return np.array([beta_of_k(params, sigma, k) for k in range(1, 2 ** len(sigma) + 1)])


def gamma_gap(params: PendulumParams, sigma: Sequence[int]) -> float:
    """Smallest consecutive gap ``min_k beta(k+1) - beta(k)``."""
    _require_codes(sigma, params.N)
    return float(np.min(np.diff(beta_levels(params, sigma))))


def _distinct(values, rtol: float = 1e-12) -> tuple[float, ...]:
    out: list[float] = []
    for x in sorted(values):
        if not out or abs(x - out[-1]) > rtol * max(1.0, abs(x)):
            out.append(float(x))
    return tuple(out)


@dataclass(frozen=True)
class GammaSet:
    closed_form: tuple[float, ...]
    direct: tuple[float, ...]

    @property
    def agree(self) -> bool:
        return len(self.closed_form) == len(self.direct) and np.allclose(self.closed_form, self.direct, rtol=1e-12, atol=1e-12)


def gamma_set_from_betas(bsig: Sequence[float]) -> GammaSet:
    """Half-gap set for an ordered coefficient list ``bsig = (g beta_{sigma(1)}, ...)``."""
    bsig = [float(x) for x in bsig]
    N0 = len(bsig)
    levels = []
    for k in range(1, 2**N0 + 1):
        levels.append(sum((1.0 if b else -1.0) * x for x, b in zip(bsig, tau(k, N0))))
    direct = [0.5 * (levels[k + 1] - levels[k]) for k in range(len(levels) - 1)]
    closed = [bsig[-1]] + [bsig[i] - sum(bsig[i + 1 :]) for i in range(N0 - 1)]
    return GammaSet(_distinct(closed), _distinct(direct))


def gamma_set(params: PendulumParams, sigma: Sequence[int]) -> GammaSet:
    _require_codes(sigma, params.N)
    return gamma_set_from_betas(params.gbeta[list(sigma)])


@dataclass(frozen=True)
class PeriodWindow:
    feasible: bool
    T1: float
    T2: float
    margin: float  # gamma / sqrt(gamma1 gamma2)

    def contains(self, T: float) -> bool:
        return self.feasible and self.T1 <= T <= self.T2


def period_window(gamma: float, g1: float, g2: float) -> PeriodWindow:
    """Feasibility ``gamma > sqrt(gamma1 gamma2)`` and ``T1 = sqrt(gamma1/gamma)``, ``T2 = sqrt(gamma/gamma2)``."""
    if g1 <= 0 or g2 <= 0:
        raise ValueError("gamma1 and gamma2 must be positive")
    root = np.sqrt(g1 * g2)
    T1 = float(np.sqrt(g1 / gamma)) if gamma > 0 else np.inf
    T2 = float(np.sqrt(gamma / g2)) if gamma > 0 else 0.0
    return PeriodWindow(bool(gamma > root), T1, T2, float(gamma / root))


def window_inequality_samples(gamma: float, g1: float, g2: float, T1: float, T2: float, count: int = 33):
    """Evaluate ``gamma T^2 - gamma1 - gamma2 T^4`` at ``count`` evenly spaced periods in ``[T1, T2]``."""
    Ts = np.linspace(T1, T2, count)
    return Ts, gamma * Ts**2 - g1 - g2 * Ts**4


def strict_window(gamma: float, g1: float, g2: float) -> tuple[float, float] | None:
    """Exact period range on which ``gamma T^2 > gamma1 + gamma2 T^4``; ``None`` if empty.

    Roots of ``g2 s^2 - gamma s + g1`` in ``s = T^2``; nonempty iff ``gamma > 2 sqrt(g1 g2)``.
    """
    disc = gamma**2 - 4 * g1 * g2
    if disc <= 0:
        return None
    r = np.sqrt(disc)
    # stable root pair
    s_hi = (gamma + r) / (2 * g2)
    s_lo = g1 / (g2 * s_hi)
    return float(np.sqrt(s_lo)), float(np.sqrt(s_hi))


# -- forcing moment and levels ----------------------------------------------------------

def f_moment(f: Forcing, v: WindingVector, T: float, check: bool = True) -> float:
    """``int_0^T f . (2 pi v t / T) dt``, exact for trigonometric forcing.

    With ``check`` the value is compared with the forcing part of the action
    at two constant loops with random means, which must not depend on the mean.
    """
    fv = f_moment_exact(f, v, T)
    if check and not f.is_zero:
        rng = np.random.default_rng(12345)
        ev = ActionEvaluator(PendulumParams((1.0,) * v.N, (1.0,) * v.N), f, v, T, max(4, f.max_harmonic))
        for _ in range(2):
            c = np.zeros(ev.n)
            c[: v.N] = rng.uniform(0, 2 * np.pi, v.N)
            L3 = float(ev.breakdown(c)[2])
            assert abs(L3 - fv) <= 1e-12 * (1 + abs(fv)), (L3, fv)
    return fv


@dataclass(frozen=True)
class Levels:
    T: float
    f_v: float
    beta: np.ndarray   # beta(1..n)
    C1: np.ndarray     # k = 1..n-1
    C2: np.ndarray
    a: np.ndarray      # a_1..a_n
    gamma: float

    @property
    def n(self) -> int:
        return self.beta.size

    def band(self, value: float) -> int:
        """Band index ``k`` (1-based) with ``a_{k-1} <= value < a_k``; ``n`` above ``a_{n-1}``."""
        for k in range(1, self.n):
            if value < self.a[k - 1]:
                return k
        return self.n


def levels(params: PendulumParams, v: WindingVector, T: float, f: Forcing, sigma: Sequence[int] | None = None,
           lam: float | None = None, M0: float | None = None, grid_resolution: int = 72) -> Levels:
    """Levels ``C1(k) < a_k < C2(k)``; refuses outside the feasible window.

    ``lam`` defaults to the conservative kinetic eigenvalue and ``M0`` to the
    sampled forcing bound.
    """
    sigma = sigma_for(v) if sigma is None else tuple(sigma)
    _require_codes(sigma, params.N)
    if lam is None:
        lam = lambda_search(params, grid_resolution).conservative
    if M0 is None:
        M0 = forcing_bound(f)
    g1, g2 = gamma1(params, v), gamma2(params, M0, lam)
    gam = gamma_gap(params, sigma)
    win = period_window(gam, g1, g2)
    if not win.feasible:
        raise InfeasibleError(f"gamma={gam:.6g} <= sqrt(gamma1 gamma2)={np.sqrt(g1 * g2):.6g}; no period window")
    if not win.T1 <= T <= win.T2:
        raise InfeasibleError(f"T={T} outside window [{win.T1:.6g}, {win.T2:.6g}]")
    fv = f_moment(f, v, T)
    beta = beta_levels(params, sigma)
    C1 = g1 / T + T * beta[:-1] + fv
    C2 = 2 * np.pi**2 * v.norm2 * lam / T + T * beta[1:] + fv - T**3 * g2
    if np.any(C2 <= C1):
        bad = [int(k) + 1 for k in np.nonzero(C2 <= C1)[0]]
        raise InfeasibleError(f"level sandwich C1(k) < C2(k) fails at T={T} for k={bad}")
    a = np.empty(beta.size)
    a[:-1] = 0.5 * (C1 + C2)
    a[-1] = g1 / T + T * float(params.gbeta[list(sigma)].sum()) + fv + 1.0
    assert np.all(C1 < a[:-1]) and np.all(a[:-1] < C2)
    gaps = np.diff(a)
    assert np.all(gaps[:-1] >= T * gam * (1 - 1e-12)), gaps
    assert gaps[-1] > 0, gaps
    return Levels(T, fv, beta, C1, C2, a, gam)


def a0_bound(params: PendulumParams, v: WindingVector, T: float, f: Forcing, lam: float) -> float:
    """Global lower bound ``2 pi^2 |v|^2 lam / T + f_v - T sum g beta - T^3 ||f||^2 / (8 pi^2 lam)``."""
    fv = f_moment_exact(f, v, T)
    fn = forcing_l2_norm(f)
    return float(2 * np.pi**2 * v.norm2 * lam / T + fv - T * params.gbeta.sum() - T**3 * fn**2 / (8 * np.pi**2 * lam))


# -- estimate oracles --------------------------------------------------------------------

@dataclass(frozen=True)
class OracleResult:
    name: str
    lhs: float
    rhs: float
    sense: str  # "<=" or ">="
    holds: bool


def _check(name, lhs, rhs, sense, scale):
    tol = 1e-11 * (1.0 + abs(scale))
    ok = lhs <= rhs + tol if sense == "<=" else lhs >= rhs - tol
    return OracleResult(name, float(lhs), float(rhs), sense, bool(ok))


def estimate_oracles(params: PendulumParams, f: Forcing, loop: LoopPath, lam: float | None = None,
                     M0: float | None = None, ev: ActionEvaluator | None = None) -> list[OracleResult]:
    """Evaluate both sides of the six action estimates at ``loop``."""
    if lam is None:
        lam = lambda_search(params).conservative
    if M0 is None:
        M0 = forcing_bound(f)
    v, T = loop.v, loop.T
    if ev is None:
        ev = ActionEvaluator(params, f, v, T, loop.K)
    c = loop.to_vector()
    cbar = np.zeros_like(c)
    cbar[: v.N] = c[: v.N]
    L1, L2, L3 = (float(x) for x in ev.breakdown(c))
    B1, B2, B3 = (float(x) for x in ev.breakdown(cbar))
    _, hd, _ = norms(loop)
    xd_i = coordinate_derivative_norms(loop)
    fn = forcing_l2_norm(f)
    gb = params.gbeta
    c32 = T**1.5 / (2 * np.pi)
    total = L1 + L2 + L3
    return [
        _check("kinetic_lower", L1, 0.5 * lam * hd**2 + 2 * np.pi**2 * v.norm2 * lam / T, ">=", L1),
        _check("kinetic_mean_upper", B1, gamma1(params, v) / T, "<=", B1),
        _check("potential_deviation", abs(L2 - B2), c32 * float(gb @ xd_i), "<=", abs(L2) + abs(B2)),
        _check("forcing_deviation", abs(L3 - B3), T / (2 * np.pi) * fn * float(xd_i.sum()), "<=", abs(L3) + abs(B3)),
        _check("combined_deviation", abs(L2 + L3 - B2 - B3), c32 * float((gb + M0) @ xd_i), "<=",
               abs(L2) + abs(L3) + abs(B2) + abs(B3)),
        _check("global_lower", total, a0_bound(params, v, T, f, lam), ">=", total),
    ]


# -- constants report ---------------------------------------------------------------------

@dataclass
class ConstantsReport:
    N: int
    v: tuple[int, ...]
    sigma: tuple[int, ...]
    M0: float
    lambda_hat: float
    lambda_grid: float
    lam: float
    gamma1: float
    gamma2: float
    gamma: float | None = None
    Gamma: tuple[float, ...] | None = None
    T1: float | None = None
    T2: float | None = None
    margin: float | None = None
    feasible: bool = False
    strict_window: tuple[float, float] | None = None
    levels: dict | None = None
    a0: float | None = None
    f_v: float | None = None
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def constants_report(params: PendulumParams, v: WindingVector | Sequence[int], M0: float = 0.0,
                     T: float | None = None, f: Forcing | None = None, grid_resolution: int = 72,
                     lam_est: LambdaEstimate | None = None) -> ConstantsReport:
    """Assemble every constant; levels are added when ``T`` is given and feasible."""
    if not isinstance(v, WindingVector):
        v = validate_winding(v)
    sigma = sigma_for(v)
    _require_codes(sigma, params.N)
    est = lam_est or lambda_search(params, grid_resolution)
    lam = est.conservative
    g1, g2 = gamma1(params, v), gamma2(params, M0, lam)
    gam = gamma_gap(params, sigma)
    gs = gamma_set(params, sigma)
    if not gs.agree:
        raise AssertionError(f"half-gap set mismatch: {gs}")
    win = period_window(gam, g1, g2)
    rep = ConstantsReport(
        N=params.N, v=v.v, sigma=sigma, M0=float(M0), lambda_hat=est.value, lambda_grid=est.grid_value,
        lam=lam, gamma1=g1, gamma2=g2, gamma=gam, Gamma=gs.closed_form, T1=win.T1, T2=win.T2,
        margin=win.margin, feasible=win.feasible, strict_window=strict_window(gam, g1, g2),
    )
    if T is not None:
        f = f if f is not None else Forcing.zero(params.N, T)
        rep.f_v = f_moment(f, v, T)
        rep.a0 = a0_bound(params, v, T, f, lam)
        if win.contains(T):
            lv = levels(params, v, T, f, sigma, lam=lam, M0=M0)
            rep.levels = {"T": T, "beta": lv.beta.tolist(), "C1": lv.C1.tolist(), "C2": lv.C2.tolist(), "a": lv.a.tolist()}
        else:
            rep.notes.append(f"T={T} outside [T1, T2]; levels not constructed")
    return rep


# -- parameter search ---------------------------------------------------------------------

@dataclass
class SearchResult:
    params: PendulumParams | None
    margin: float
    evaluations: int
    report: ConstantsReport | None

    @property
    def feasible(self) -> bool:
        return self.params is not None and self.margin > 1.0


def _margin(params: PendulumParams, v: WindingVector, sigma, M0: float, grid_resolution: int) -> float:
    lam = lambda_search(params, grid_resolution, rounds=1).conservative
    g1, g2 = gamma1(params, v), gamma2(params, M0, lam)
    gam = gamma_gap(params, sigma)
    return float(gam / np.sqrt(g1 * g2))


def initial_family(v: WindingVector, ratio: float = 2.5) -> PendulumParams:
    """Structured starting point: non-rotating links long with geometrically decreasing
    lengths along ``sigma``, heavier first; rotating links short."""
    N = v.N
    m = np.ones(N)
    ell = np.full(N, 0.1)
    for pos, i in enumerate(v.I0):
        ell[i] = 10.0 / ratio**pos
    for i in v.free:
        m[i] = 10.0
    return PendulumParams(tuple(m), tuple(ell))


SEARCH_BOX = (1e-2, 1e2)


def _search_resolution(N: int, grid_resolution: int, points: int = 4096) -> int:
    # keep the (N-1)-dimensional lambda grid near ``points`` nodes during the search
    if N <= 2:
        return grid_resolution
    return max(8, min(grid_resolution, int(points ** (1.0 / (N - 1)))))


def _sweep(start: PendulumParams, v, sigma, M0, res, budget, factors, box):
    best = start
    best_m = _margin(best, v, sigma, M0, res)
    evals = 1
    improved = True
    while improved and evals < budget:
        improved = False
        N = best.N
        for coord in range(2 * N):
            for fac in factors:
                if evals >= budget:
                    break
                m, ell = list(best.m), list(best.ell)
                if coord < N:
                    m[coord] *= fac
                else:
                    ell[coord - N] *= fac
                if not all(box[0] <= x <= box[1] for x in (*m, *ell)):
                    continue
                cand = PendulumParams(tuple(m), tuple(ell), best.g)
                mg = _margin(cand, v, sigma, M0, res)
                evals += 1
                if mg > best_m * (1 + 1e-12):
                    best, best_m, improved = cand, mg, True
    return best, best_m, evals


def parameter_search(N: int, v: WindingVector | Sequence[int], M0: float = 0.0, budget: int = 1200,
                     grid_resolution: int = 24, factors: Sequence[float] = (0.25, 0.5, 0.8, 1.25, 2.0, 4.0),
                     box: tuple[float, float] = SEARCH_BOX, restarts: int = 3, seed: int = 0) -> SearchResult:
    """Multistart coordinate-wise multiplicative sweeps over masses and lengths.

    The first start is :func:`initial_family`; ``restarts`` more are drawn
    log-uniformly from ``box`` with a seeded generator. Each sweep runs the
    ``2N`` log-parameters through ``factors`` and keeps any candidate raising
    the margin ``gamma / sqrt(gamma1 gamma2)`` (first in sweep order on ties),
    until a full cycle brings no improvement. ``budget`` caps margin
    evaluations over all starts. Candidates leaving ``box`` are skipped; the
    margin is invariant under uniform rescaling, so the box only stops drift
    toward extreme scales. The best margin over all starts is returned.
    """
    if not isinstance(v, WindingVector):
        v = validate_winding(v)
    if v.N != N:
        raise ValueError(f"winding vector has {v.N} entries, expected {N}")
    sigma = sigma_for(v)
    _require_codes(sigma, N)
    res = _search_resolution(N, grid_resolution)
    rng = np.random.default_rng(seed)
    lo, hi = np.log(box[0]), np.log(box[1])
    starts = [initial_family(v)]
    for _ in range(restarts):
        x = np.exp(rng.uniform(lo, hi, size=2 * N))
        starts.append(PendulumParams(tuple(x[:N]), tuple(x[N:])))
    best, best_m, evals = None, -np.inf, 0
    per_start = max(1, budget // len(starts))
    for start in starts:
        if evals >= budget:
            break
        cand, mg, used = _sweep(start, v, sigma, M0, res, min(per_start, budget - evals), factors, box)
        evals += used
        if mg > best_m:
            best, best_m = cand, mg
    log.info("parameter search: best margin %.6g after %d evaluations", best_m, evals)
    if best_m <= 1.0:
        return SearchResult(None, best_m, evals, None)
    rep = constants_report(best, v, M0, grid_resolution=grid_resolution)
    return SearchResult(best, rep.margin, evals, rep)
