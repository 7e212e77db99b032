"""Binary codes and pinned subtori of T^N.

Every set used in the level construction is a finite union of subtori obtained
by pinning some coordinates to ``0`` or ``pi``. A :class:`ConstraintSet` stores
that union in disjunctive normal form: a set of *terms*, each term a frozenset
of pins ``(coord, bit)`` meaning ``y[coord] = bit * pi``. Unpinned coordinates
range over the whole circle.

Codes use a permutation ``sigma`` (zero-based coordinates of the non-rotating
links, increasing) to transport the sets onto the ambient torus: position ``i``
of the code pins ambient coordinate ``sigma[i]``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .exceptions import CertificateError, EmptySetError, InvalidParameterError

MEMBERSHIP_TOL = 1e-9

Pin = tuple[int, int]
Term = frozenset


def tau(k: int, N0: int) -> tuple[int, ...]:
    """Big-endian binary digits of ``k - 1`` on ``N0`` bits."""
    if N0 < 0 or not 1 <= k <= 2**N0:
        raise InvalidParameterError(f"k={k} outside [1, 2^{N0}]")
    return tuple(((k - 1) >> (N0 - 1 - i)) & 1 for i in range(N0))


def k_from_tau(bits: Sequence[int]) -> int:
    k = 0
    for bit in bits:
        k = 2 * k + int(bit)
    return k + 1


def z_point(k: int, N0: int) -> np.ndarray:
    """Seed point ``pi * (1 - tau(k))`` on ``T^N0``."""
    return np.pi * (1 - np.asarray(tau(k, N0), dtype=float))


def _absorb(terms: Iterable[Term]) -> frozenset:
    terms = set(terms)
    keep = set()
    for t in terms:
        if not any(s < t for s in terms):
            keep.add(t)
    return frozenset(keep)


def _consistent(pins: Iterable[Pin]) -> bool:
    seen: dict[int, int] = {}
    for c, w in pins:
        if seen.setdefault(c, w) != w:
            return False
    return True


def angular_distance(x, w):
    d = np.mod(np.asarray(x) - w + np.pi, 2 * np.pi) - np.pi
    return np.abs(d)


@dataclass(frozen=True)
class ConstraintSet:
    """Finite union of pinned subtori of ``T^N``."""

    N: int
    terms: frozenset

    @classmethod
    def torus(cls, N: int) -> "ConstraintSet":
        return cls(N, frozenset({frozenset()}))

    @classmethod
    def empty(cls, N: int) -> "ConstraintSet":
        return cls(N, frozenset())

    @classmethod
    def pinned(cls, N: int, pins: Iterable[Pin]) -> "ConstraintSet":
        pins = frozenset((int(c), int(w)) for c, w in pins)
        if not _consistent(pins):
            return cls.empty(N)
        return cls(N, frozenset({pins}))

    def __or__(self, other: "ConstraintSet") -> "ConstraintSet":
        return ConstraintSet(self.N, _absorb(self.terms | other.terms))

    def __and__(self, other: "ConstraintSet") -> "ConstraintSet":
        out = []
        for s in self.terms:
            for t in other.terms:
                u = s | t
                if _consistent(u):
                    out.append(frozenset(u))
        return ConstraintSet(self.N, _absorb(out))

    @property
    def is_empty(self) -> bool:
        return not self.terms

    def dimension(self) -> int:
        return max((self.N - len(t) for t in self.terms), default=-1)

    def contains(self, point, tol: float = MEMBERSHIP_TOL) -> bool:
        point = np.asarray(point, dtype=float)
        for t in self.terms:
            if all(angular_distance(point[c], w * np.pi) <= tol for c, w in t):
                return True
        return False

    def issubset(self, other: "ConstraintSet") -> bool:
        """Exact inclusion test.

        A subtorus lies in a finite union of subtori only if it lies in one of
        them, and a pinned subtorus lies in another iff its pins are a superset.
        """
        return all(any(s <= t for s in other.terms) for t in self.terms)

    def equals(self, other: "ConstraintSet") -> bool:
        return self.issubset(other) and other.issubset(self)

    def grid_patterns(self, coords: Sequence[int]) -> set[tuple[int, ...]]:
        """Bit patterns on ``coords`` (each coordinate in ``{0, pi}``) lying in the set, via the DNF."""
        out = set()
        for t in self.terms:
            fixed = dict(t)
            free = [c for c in coords if c not in fixed]
            for bits in itertools.product((0, 1), repeat=len(free)):
                assign = {**fixed, **dict(zip(free, bits))}
                out.add(tuple(assign[c] for c in coords))
        return out

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Random points: pick a DNF term uniformly, pin it, draw free coordinates uniformly."""
        if self.is_empty:
            raise EmptySetError("constraint set is unsatisfiable")
        terms = sorted(tuple(sorted(t)) for t in self.terms)
        pts = rng.uniform(0.0, 2 * np.pi, size=(count, self.N))
        choice = rng.integers(len(terms), size=count)
        for r, j in enumerate(choice):
            for c, w in terms[j]:
                pts[r, c] = w * np.pi
        return pts

    def extreme_values(self, weights: np.ndarray, coords: Sequence[int]) -> tuple[float, float]:
        """Exact ``(min, max)`` of ``sum_i weights[i] * cos(y[coords[i]])`` over the set.

        The function is separable, so on each term a pinned coordinate contributes
        its pinned value and a free one contributes ``+-|weight|``.
        """
        if self.is_empty:
            raise EmptySetError("constraint set is unsatisfiable")
        lo, hi = np.inf, -np.inf
        for t in self.terms:
            fixed = dict(t)
            tmin = tmax = 0.0
            for wgt, c in zip(weights, coords):
                if c in fixed:
                    val = wgt * (1.0 if fixed[c] == 0 else -1.0)
                    tmin += val
                    tmax += val
                else:
                    tmin -= abs(wgt)
                    tmax += abs(wgt)
            lo, hi = min(lo, tmin), max(hi, tmax)
        return float(lo), float(hi)


class Subtori:
    """Constructors for the coded subtori, transported by ``sigma``."""

    def __init__(self, N: int, sigma: Sequence[int]):
        self.N = int(N)
        self.sigma = tuple(int(s) for s in sigma)
        if len(set(self.sigma)) != len(self.sigma) or any(not 0 <= s < N for s in self.sigma):
            raise InvalidParameterError(f"sigma {sigma} is not an injective map into range({N})")
        self.N0 = len(self.sigma)
        self.n = 2**self.N0

    def _check(self, k: int):
        if not 1 <= k <= self.n:
            raise InvalidParameterError(f"k={k} outside [1, {self.n}]")

    def S(self, k: int) -> ConstraintSet:
        self._check(k)
        return ConstraintSet.pinned(self.N, [(s, 1 - b) for s, b in zip(self.sigma, tau(k, self.N0))])

    def T_pair(self, k: int, j: int) -> ConstraintSet:
        """Subtorus releasing code position ``m`` of ``S(k)``, where ``k - j = 2^(N0 - m)``.

        It contains ``S(j)`` only when ``tau(k)`` and ``tau(j)`` differ in position
        ``m`` alone; a borrow in ``k - j`` (e.g. ``k = 3, j = 2`` for ``N0 = 2``)
        changes further bits.
        """
        self._check(k)
        self._check(j)
        d = k - j
        if d <= 0 or d & (d - 1):
            raise InvalidParameterError(f"k - j = {d} is not a positive power of two")
        m = self.N0 - (d.bit_length() - 1)  # 1-based position that is released
        if not 1 <= m <= self.N0:
            raise InvalidParameterError(f"k - j = {d} too large for N0={self.N0}")
        bits = tau(k, self.N0)
        return ConstraintSet.pinned(self.N, [(s, 1 - b) for i, (s, b) in enumerate(zip(self.sigma, bits)) if i != m - 1])

    def T_hyper(self, k: int, i: int) -> ConstraintSet:
        """Codimension-one subtorus pinning code position ``i`` (zero-based) to ``pi * tau_i(k)``."""
        self._check(k)
        return ConstraintSet.pinned(self.N, [(self.sigma[i], tau(k, self.N0)[i])])

    def Q(self, k: int) -> ConstraintSet:
        out = ConstraintSet.empty(self.N)
        for i in range(self.N0):
            out = out | self.T_hyper(k, i)
        return out

    def M(self, k: int) -> ConstraintSet:
        self._check(k)
        out = ConstraintSet.torus(self.N)
        for j in range(k, self.n + 1):
            out = out & self.Q(j)
        return out

    def O(self, k: int) -> ConstraintSet:
        self._check(k)
        return ConstraintSet.pinned(self.N, [(s, 0) for s, b in zip(self.sigma, tau(k, self.N0)) if b == 1])


def recursive_table_discrepancies(N: int, sigma: Sequence[int]) -> list[str]:
    """Compare the coded sets against their one-step recursive descriptions.

    ``m = len(sigma) >= 2``. Sets for ``m - 1`` use ``sigma[1:]``; the leading
    code position is ``sigma[0]``. Returns human-readable discrepancy lines.
    """
    big = Subtori(N, sigma)
    small = Subtori(N, sigma[1:])
    m, h = big.N0, 2 ** (big.N0 - 1)
    if m < 2:
        raise InvalidParameterError("recursive tables need at least two code positions")
    c0 = big.sigma[0]
    full = ConstraintSet.torus(N)
    pin0, pinpi = ConstraintSet.pinned(N, [(c0, 0)]), ConstraintSet.pinned(N, [(c0, 1)])
    out = []

    def cmp(name, k, got, want):
        if not got.equals(want):
            out.append(f"{name}_{k} (m={m}): derived {sorted(map(sorted, got.terms))} != table {sorted(map(sorted, want.terms))}")

    for k in range(1, 2**m + 1):
        lower = k <= h
        kk = k if lower else k - h
        cmp("S", k, big.S(k), (pinpi if lower else pin0) & small.S(kk))
        cmp("O", k, big.O(k), (full if lower else pin0) & small.O(kk))
        cmp("Q", k, big.Q(k), (pin0 if lower else pinpi) | small.Q(kk))
        if 2 <= k <= h:
            cmp("M", k, big.M(k), pinpi & small.M(k))
        elif k == h + 1:
            cmp("M", k, big.M(k), pinpi)
        elif k >= h + 2:
            cmp("M", k, big.M(k), pinpi | small.M(k - h))
    return out


@dataclass(frozen=True)
class PotentialCertificate:
    """Bounds on the averaged potential ``V0 = sum_{i in I0} g beta_i cos y_i`` for one ``k``."""

    k: int
    max_on_M: float
    beta_k: float
    min_on_O: float
    beta_k1: float
    grid_max_on_M: float
    grid_min_on_O: float
    passed: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def potential_bounds_certificate(params, sigma: Sequence[int], k: int, grid_resolution: int = 16) -> PotentialCertificate:
    """Certify ``max V0|M_{k+1} <= beta(k) < beta(k+1) <= min V0|O_{k+1}``.

    Exact extremes come from the separable structure; a grid over the code
    coordinates (resolution even, so it contains 0 and pi) cross-checks them.
    Raises :class:`CertificateError` on failure.
    """
    from .bounds import beta_of_k

    sub = Subtori(params.N, sigma)
    if not 1 <= k <= sub.n - 1:
        raise InvalidParameterError(f"k={k} outside [1, {sub.n - 1}]")
    if grid_resolution % 2:
        grid_resolution += 1
    w = params.gbeta[list(sub.sigma)]
    Mset, Oset = sub.M(k + 1), sub.O(k + 1)
    _, vmax = Mset.extreme_values(w, sub.sigma)
    vmin, _ = Oset.extreme_values(w, sub.sigma)
    bk, bk1 = beta_of_k(params, sub.sigma, k), beta_of_k(params, sub.sigma, k + 1)

    res = grid_resolution if sub.N0 <= 3 else max(4, min(grid_resolution, 8))
    axis = np.arange(res) * (2 * np.pi / res)
    grid = np.array(list(itertools.product(axis, repeat=sub.N0))).reshape(-1, sub.N0)
    vals = np.cos(grid) @ w
    pts = np.zeros((grid.shape[0], params.N))
    pts[:, list(sub.sigma)] = grid
    inM = np.array([Mset.contains(p) for p in pts])
    inO = np.array([Oset.contains(p) for p in pts])
    gmax = float(vals[inM].max()) if inM.any() else -np.inf
    gmin = float(vals[inO].min()) if inO.any() else np.inf

    tol = 1e-12 * (1.0 + float(np.abs(w).sum()))
    ok = (
        vmax <= bk + tol
        and bk < bk1
        and vmin >= bk1 - tol
        and gmax <= vmax + tol
        and gmin >= vmin - tol
    )
    cert = PotentialCertificate(k, vmax, bk, vmin, bk1, gmax, gmin, bool(ok))
    if not ok:
        raise CertificateError(f"potential-bound certificate failed: {cert}")
    return cert
