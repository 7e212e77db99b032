"""Multistart critical-point search, deduplication and counting.

Two local solvers run from every seed:

* :func:`minimize` -- limited-memory quasi-Newton descent with backtracking;
  reaches minimizers, and the action never increases along accepted steps.
* :func:`solve_critical` -- Levenberg-Marquardt on the gradient equation with
  a finite-difference Hessian; converges to nearby critical points of any
  Morse index, which is how the saddle levels are reached.

Both work in W^{1,2}-normalized coordinates ``u = sqrt(D) c`` where ``D`` is the
Gram diagonal, so high harmonics are not stiff.
"""

from __future__ import annotations

import itertools
import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .action import ActionBreakdown, ActionEvaluator, HessianInfo, _hessian_info, evaluator_for, hessian_normalized
from .exceptions import HypothesisError, InfeasibleError
from .loopspace import TWO_PI, LoopPath, WindingVector, distance_mod_symmetries, norms, validate_winding, with_order
from .model import Forcing, PendulumParams, forcing_bound

log = logging.getLogger(__name__)

DEDUP_RTOL = 1e-4


@dataclass(frozen=True)
class RotationProblem:
    params: PendulumParams
    forcing: Forcing
    v: WindingVector
    T: float
    K: int = 32
    M: int | None = None

    def __post_init__(self):
        if not isinstance(self.v, WindingVector):
            object.__setattr__(self, "v", validate_winding(self.v))
        object.__setattr__(self, "T", float(self.T))
        if self.forcing.T != self.T:
            raise ValueError(f"forcing period {self.forcing.T} differs from T={self.T}")

    @property
    def N(self) -> int:
        return self.params.N

    @property
    def evaluator(self) -> ActionEvaluator:
        return evaluator_for(self.params, self.forcing, self.v, self.T, self.K, self.M)

    @property
    def unforced(self) -> bool:
        return self.forcing.is_zero

    def tol_conv(self, value: float) -> float:
        return 1e-8 * (1.0 + abs(value))


@dataclass(frozen=True)
class Seed:
    loop: LoopPath
    label: str


def seed_plan(problem: RotationProblem, sigma: Sequence[int] | None = None, density: int = 8, r: int = 4,
              seed: int = 0, radius: float = 0.3, harmonics: int = 3) -> list[Seed]:
    """Starts at ``{0, pi}^{I0} x (uniform grid on rotating coordinates)``, each with
    zero oscillation plus ``r`` random oscillations of W^{1,2} norm at most ``radius``."""
    v, K, T, N = problem.v, problem.K, problem.T, problem.N
    sigma = tuple(v.I0 if sigma is None else sigma)
    free = [i for i in range(N) if i not in sigma]
    rng = np.random.default_rng(seed)
    grid = np.arange(density) * (TWO_PI / density)
    kmax = min(harmonics, K)
    kw = np.arange(1, kmax + 1) * (TWO_PI / T)
    wt = 0.5 * T * (1 + kw**2)
    seeds = []
    for bits in itertools.product((1, 0), repeat=len(sigma)):
        for cell in itertools.product(range(density), repeat=len(free)):
            xbar = np.zeros(N)
            for s, b in zip(sigma, bits):
                xbar[s] = np.pi * b
            for i, j in zip(free, cell):
                xbar[i] = grid[j]
            tag = "pins=" + "".join("pi" if b else "0" for b in bits) + f" grid={cell}"
            seeds.append(Seed(LoopPath.constant(T, v, xbar, K), tag + " pert=0"))
            for p in range(r):
                a = np.zeros((N, K))
                b = np.zeros((N, K))
                a[:, :kmax] = rng.normal(size=(N, kmax))
                b[:, :kmax] = rng.normal(size=(N, kmax))
                nrm = np.sqrt((wt * (a[:, :kmax] ** 2 + b[:, :kmax] ** 2)).sum())
                scale = radius * rng.uniform(0.1, 1.0) / nrm
                seeds.append(Seed(LoopPath(T, v, xbar, a * scale, b * scale), tag + f" pert={p + 1}"))
    return seeds


@dataclass
class LocalResult:
    converged: bool
    c: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    trace: list[float]
    method: str
    message: str = ""


def _lbfgs_direction(g, S, Y):
    q = g.copy()
    alphas = []
    for s, y in reversed(list(zip(S, Y))):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append((rho, a))
        q -= a * y
    if S:
        s, y = S[-1], Y[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        bcoef = rho * (y @ q)
        q += (a - bcoef) * s
    return -q


def minimize(problem: RotationProblem, start: LoopPath, tol_conv: float | None = None, max_iters: int = 2000,
             memory: int = 12, patience: int = 600, polish: bool = True) -> LocalResult:
    """Quasi-Newton descent from ``start``.

    Converged iff ``||grad|| <= 1e-8 (1 + |action|)`` (raw coefficient gradient).
    Accepted steps satisfy Armijo; when the decrease drops below rounding
    level, a step is still accepted if the action does not increase and the
    gradient shrinks. If the line search fails or the gradient stops halving
    within ``patience`` iterations, a short Newton polish on the gradient
    equation finishes the job (action differences are then below rounding, the
    gradient is not).
    """
    ev = problem.evaluator
    sq = np.sqrt(ev.weights)
    u = start.to_vector() * sq

    def fg(u):
        val, gr = ev.value_and_gradient(u / sq)
        return float(val), gr / sq, gr

    def finish(msg, it):
        res = LocalResult(False, u / sq, f, gn, it, trace, "descent", msg)
        if not polish:
            return res
        pol = solve_critical(problem, ev.loop(u / sq), tol_conv, max_iters=10, patience=4)
        if pol.converged:
            return LocalResult(True, pol.c, pol.value, pol.grad_norm, it + pol.iterations, trace + pol.trace[1:],
                               "descent", "newton polish")
        return res

    f, g, graw = fg(u)
    trace = [f]
    S: deque = deque(maxlen=memory)
    Y: deque = deque(maxlen=memory)
    gn = float(np.linalg.norm(graw))
    checkpoint = (0, gn)
    for it in range(max_iters + 1):
        gn = float(np.linalg.norm(graw))
        tol = tol_conv if tol_conv is not None else problem.tol_conv(f)
        if gn <= tol:
            return LocalResult(True, u / sq, f, gn, it, trace, "descent")
        if it == max_iters:
            break
        if gn < 0.5 * checkpoint[1]:
            checkpoint = (it, gn)
        elif it - checkpoint[0] >= patience:
            return finish("stagnated", it)
        d = _lbfgs_direction(g, S, Y)
        slope = float(g @ d)
        if slope >= 0:
            S.clear()
            Y.clear()
            d = -g
            slope = -float(g @ g)
        alpha = 1.0 if S else min(1.0, 1.0 / max(np.linalg.norm(g), 1e-300))
        accepted = None
        fallback = None
        for _ in range(30):
            un = u + alpha * d
            fn, gnew, grawn = fg(un)
            if fn <= f + 1e-4 * alpha * slope:
                accepted = (un, fn, gnew, grawn)
                break
            if fallback is None and fn <= f and np.linalg.norm(grawn) < gn:
                fallback = (un, fn, gnew, grawn)
            alpha *= 0.5
        if accepted is None:
            accepted = fallback
        if accepted is None:
            return finish("line search failed", it)
        un, fn, gnew, grawn = accepted
        s, y = un - u, gnew - g
        if s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
        u, f, g, graw = un, fn, gnew, grawn
        trace.append(f)
    return finish("max_iters exceeded", max_iters)


def solve_critical(problem: RotationProblem, start: LoopPath, tol_conv: float | None = None, max_iters: int = 80,
                   patience: int = 10) -> LocalResult:
    """Levenberg-Marquardt on ``grad L = 0`` with the finite-difference Hessian.

    Gives up early when the merit ``0.5 |grad|^2`` fails to halve within ``patience`` iterations.
    """
    ev = problem.evaluator
    sq = np.sqrt(ev.weights)
    c = start.to_vector()
    f, graw = ev.value_and_gradient(c)
    r = graw / sq
    phi = 0.5 * float(r @ r)
    mu = 1e-3
    trace = [float(f)]
    checkpoint = (0, phi)
    for it in range(max_iters + 1):
        gn = float(np.linalg.norm(graw))
        tol = tol_conv if tol_conv is not None else problem.tol_conv(float(f))
        if gn <= tol:
            return LocalResult(True, c, float(f), gn, it, trace, "newton")
        if it == max_iters:
            break
        if phi < 0.5 * checkpoint[1]:
            checkpoint = (it, phi)
        elif it - checkpoint[0] >= patience:
            return LocalResult(False, c, float(f), gn, it, trace, "newton", "stagnated")
        Hn, _ = hessian_normalized(ev, c)
        lam, Q = np.linalg.eigh(Hn)
        rq = Q.T @ r
        scale2 = float(np.max(lam**2))
        for _ in range(30):
            mu_eff = max(mu, 1e-14 * scale2)
            du = -Q @ (lam / (lam**2 + mu_eff) * rq)
            cn = c + du / sq
            fn, grawn = ev.value_and_gradient(cn)
            rn = grawn / sq
            phin = 0.5 * float(rn @ rn)
            if phin < phi:
                c, f, graw, r, phi = cn, fn, grawn, rn, phin
                mu = mu / 5
                break
            mu = max(mu * 4, 1e-12)
        else:
            return LocalResult(False, c, float(f), gn, it, trace, "newton", "no merit decrease")
        trace.append(float(f))
    return LocalResult(False, c, float(f), float(np.linalg.norm(graw)), max_iters, trace, "newton", "max_iters exceeded")


def tail_ratio(loop: LoopPath) -> float:
    """Share of ``||xtil||_{W12}`` carried by the top quartile of harmonics."""
    K = loop.K
    kw = np.arange(1, K + 1) * loop.omega
    e = 0.5 * loop.T * (1 + kw**2) * (loop.a**2 + loop.b**2).sum(axis=0)
    tot = e.sum()
    if tot == 0:
        return 0.0
    top = e[int(np.ceil(0.75 * K)) :].sum()
    return float(np.sqrt(top / tot))


@dataclass
class SolutionRecord:
    loop: LoopPath
    breakdown: ActionBreakdown
    grad_norm: float
    provenance: str
    method: str
    morse_index: int | None = None
    nondegenerate: bool | None = None
    zero_modes: int | None = None
    hessian_head: list[float] = field(default_factory=list)
    orbit_representative: bool = False
    underresolved: bool = False
    band: int | None = None
    certification: dict | None = None
    cluster_size: int = 1
    oracles_ok: bool | None = None
    above_a0: bool | None = None

    @property
    def action(self) -> float:
        return self.breakdown.total

    @property
    def certified(self) -> bool:
        return bool(self.certification and self.certification.get("passed"))


def classify(problem: RotationProblem, rec: SolutionRecord) -> HessianInfo:
    info = _hessian_info(problem.evaluator, rec.loop.to_vector())
    expected = 1 if problem.unforced else 0
    rec.morse_index = info.morse_index
    rec.zero_modes = info.near_zero
    rec.nondegenerate = info.nondegenerate(expected)
    rec.hessian_head = [float(x) for x in info.eigenvalues[:8]]
    return info


def record_from(problem: RotationProblem, res: LocalResult, provenance: str) -> SolutionRecord:
    ev = problem.evaluator
    loop = ev.loop(res.c)
    L1, L2, L3 = ev.breakdown(loop.to_vector())
    return SolutionRecord(
        loop=loop,
        breakdown=ActionBreakdown(float(L1), float(L2), float(L3)),
        grad_norm=res.grad_norm,
        provenance=provenance,
        method=res.method,
        underresolved=tail_ratio(loop) > 1e-6,
    )


def _scale(loop: LoopPath) -> float:
    return norms(loop)[2]


def same_solution(a: SolutionRecord, b: SolutionRecord, quotient_time_shift: bool) -> bool:
    K = max(a.loop.K, b.loop.K)
    la, lb = with_order(a.loop, K), with_order(b.loop, K)
    tol = DEDUP_RTOL * (1 + max(_scale(a.loop), _scale(b.loop)))
    # equivalent loops carry equal action; a large action gap settles it cheaply
    if abs(a.action - b.action) > 1e-6 * (1 + abs(a.action)):
        return False
    return distance_mod_symmetries(la, lb, quotient_time_shift) <= tol


def dedupe(records: Sequence[SolutionRecord], quotient_time_shift: bool) -> list[SolutionRecord]:
    """Greedy clustering in ascending action; the first (lowest-action) member represents the cluster."""
    ordered = sorted(records, key=lambda r: (r.action, r.provenance, r.method))
    reps: list[SolutionRecord] = []
    for rec in ordered:
        for rep in reps:
            if same_solution(rep, rec, quotient_time_shift):
                rep.cluster_size += rec.cluster_size
                break
        else:
            rec.orbit_representative = quotient_time_shift
            reps.append(rec)
    return reps


@dataclass
class SolverConfig:
    density: int = 8
    r: int = 4
    seed: int = 0
    max_iters: int = 2000
    newton_iters: int = 80
    methods: tuple[str, ...] = ("descent", "newton")
    certify_steps: int = 4096
    threads: int = 1
    max_order: int = 128


@dataclass
class CensusReport:
    mode: str
    bound: int
    bound_label: str
    found: int
    certified: int
    records: list[SolutionRecord]
    seeds: int
    converged_runs: int
    failed_runs: int
    band_counts: dict[int, int] | None = None
    levels: list[float] | None = None
    degenerate: int = 0
    a0: float | None = None
    lam: float | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def meets_bound(self) -> bool:
        return self.certified >= self.bound

    @property
    def bands_ok(self) -> bool | None:
        if self.band_counts is None:
            return None
        return all(c >= 1 for c in self.band_counts.values())


MODES = ("generic", "tuned")


def count_bound(problem: RotationProblem, mode: str) -> tuple[int, str]:
    """Guaranteed solution count: ``generic`` holds for any parameters, ``tuned``
    for parameters with a feasible period window containing ``T``."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    N, N0 = problem.N, problem.v.N0
    if mode == "tuned":
        if not 1 <= N0 <= N - 1:
            raise HypothesisError(f"tuned mode needs 1 <= N0 <= N-1 non-rotating links, got N0={N0}")
        if problem.unforced:
            return (N - N0) * 2**N0, "(N-N0) 2^N0 (f = 0, circle orbits)"
        return (N - N0 + 1) * 2**N0, "(N-N0+1) 2^N0 (f != 0)"
    if problem.unforced:
        return N, "N (f = 0, circle orbits)"
    return N + 1, "N+1 (f != 0)"


def at_order(problem: RotationProblem, K: int) -> RotationProblem:
    M = None if problem.M is None else max(problem.M, 8 * K)
    return replace(problem, K=K, M=M)


def escalate(problem: RotationProblem, rec: SolutionRecord, cfg: SolverConfig) -> tuple[RotationProblem, SolutionRecord]:
    """Re-solve at doubled order until the loop is resolved and certifies, or ``max_order`` is hit."""
    from .verify import certify

    M0 = forcing_bound(problem.forcing)
    cert = certify(problem.params, problem.forcing, rec.loop, cfg.certify_steps, M0)
    while (rec.underresolved or not cert.passed) and problem.K * 2 <= cfg.max_order:
        finer = at_order(problem, problem.K * 2)
        res = solve_critical(finer, with_order(rec.loop, finer.K), max_iters=cfg.newton_iters)
        if not res.converged:
            break
        new = record_from(finer, res, rec.provenance)
        new.method, new.cluster_size = rec.method, rec.cluster_size
        problem, rec = finer, new
        cert = certify(problem.params, problem.forcing, rec.loop, cfg.certify_steps, M0)
    rec.certification = cert.as_dict()
    return problem, rec


def _run_seed(problem: RotationProblem, seed: Seed, cfg: SolverConfig) -> list[tuple[LocalResult, str]]:
    out = []
    if "descent" in cfg.methods:
        out.append((minimize(problem, seed.loop, max_iters=cfg.max_iters), seed.label))
    if "newton" in cfg.methods:
        out.append((solve_critical(problem, seed.loop, max_iters=cfg.newton_iters), seed.label))
    return out


def census(problem: RotationProblem, cfg: SolverConfig | None = None, mode: str = "generic",
           sigma: Sequence[int] | None = None, levels=None) -> CensusReport:
    """Seed, solve, deduplicate, classify, certify and count.

    ``levels`` (a :class:`rotpend.bounds.Levels`) enables band tagging.
    Under-counting is reported, never raised.
    """
    from .bounds import a0_bound, estimate_oracles, lambda_search

    cfg = cfg or SolverConfig()
    bound, label = count_bound(problem, mode)
    seeds = seed_plan(problem, sigma, cfg.density, cfg.r, cfg.seed)
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            batches = list(pool.map(lambda s: _run_seed(problem, s, cfg), seeds))
    else:
        batches = [_run_seed(problem, s, cfg) for s in seeds]
    runs = [x for b in batches for x in b]
    ok = [(res, lab) for res, lab in runs if res.converged]
    records = [record_from(problem, res, lab) for res, lab in ok]
    quotient = problem.unforced
    reps = dedupe(records, quotient)
    finished = []
    for rec in reps:
        prob_k, rec = escalate(problem, rec, cfg)
        classify(prob_k, rec)
        finished.append(rec)
    # refined loops can coincide where their coarse versions did not
    reps = dedupe(finished, quotient)
    lam = lambda_search(problem.params).conservative
    a0 = a0_bound(problem.params, problem.v, problem.T, problem.forcing, lam)
    M0 = forcing_bound(problem.forcing)
    for rec in reps:
        ev = evaluator_for(problem.params, problem.forcing, problem.v, problem.T, rec.loop.K)
        rec.oracles_ok = all(o.holds for o in estimate_oracles(problem.params, problem.forcing, rec.loop, lam, M0, ev))
        rec.above_a0 = rec.action >= a0 - 1e-9 * (1 + abs(a0))
        if levels is not None:
            rec.band = levels.band(rec.action)
    certified = [r for r in reps if r.certified]
    report = CensusReport(
        mode=mode, bound=bound, bound_label=label, found=len(reps), certified=len(certified),
        records=reps, seeds=len(seeds), converged_runs=len(ok), failed_runs=len(runs) - len(ok),
        degenerate=sum(1 for r in reps if r.nondegenerate is False), a0=a0, lam=lam,
    )
    if levels is not None:
        counts = {k: 0 for k in range(1, levels.n + 1)}
        for r in certified:
            counts[r.band] += 1
        report.band_counts = counts
        report.levels = levels.a.tolist()
    if report.degenerate:
        report.notes.append(f"{report.degenerate} distinct solution(s) have Hessian eigenvalues in the degeneracy band")
    if not all(r.oracles_ok and r.above_a0 for r in reps):
        report.notes.append("some solution violates an action estimate or the a0 lower bound")
    if not report.meets_bound:
        report.notes.append(f"under-count: {report.certified} certified < bound {bound}")
    return report


def band_levels(problem: RotationProblem, grid_resolution: int = 72):
    """Levels for band tagging in tuned mode; ``None`` when the window is infeasible or excludes ``T``."""
    from .bounds import levels as build_levels

    try:
        return build_levels(problem.params, problem.v, problem.T, problem.forcing, grid_resolution=grid_resolution)
    except InfeasibleError as exc:
        log.warning("no level bands: %s", exc)
        return None
