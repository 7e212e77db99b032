"""Config files (INI) and solution records (JSON).

Config layout::

    [pendulum]
    N = 2
    m = 10, 1
    l = 0.1, 10
    g = 1

    [problem]
    v = 1, 0
    T = 0.6
    K = 32          ; optional
    M = 256         ; optional, defaults to 8K
    mode = tuned    ; generic | tuned

    [forcing]
    f1 = 1 0 0.05   ; "k cos sin" triples for coordinate 1, ';'-separated

    [solver]
    density = 8
    r = 4
    seed = 0

Records store floats through ``repr`` (shortest round-trip form), so a
record read back reproduces every coefficient bit for bit.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .loopspace import LoopPath, validate_winding
from .model import Forcing, PendulumParams
from .solver import MODES, RotationProblem, SolutionRecord, SolverConfig

RECORD_FORMAT = "rotpend-solution/1"
SIGN_CONVENTION = "action = int 0.5 A(q) qdot.qdot + V(q) + f.q dt with V = g sum beta_j cos q_j"


class ConfigError(ValueError):
    """Malformed or inconsistent config file."""


@dataclass
class RunConfig:
    params: PendulumParams
    v: tuple[int, ...]
    T: float | None
    K: int
    M: int | None
    mode: str
    forcing_terms: tuple
    solver: SolverConfig

    def forcing(self, T: float | None = None) -> Forcing:
        T = self.T if T is None else T
        if T is None:
            raise ConfigError("[problem] T is required here")
        return Forcing(T, self.forcing_terms)

    def problem(self) -> RotationProblem:
        return RotationProblem(self.params, self.forcing(), validate_winding(self.v), self.T, self.K, self.M)


def _floats(text: str, key: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"{key}: expected numbers, got {text!r}") from exc


def _ints(text: str, key: str) -> list[int]:
    vals = _floats(text, key)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"{key}: expected integers, got {text!r}")
    return [int(v) for v in vals]


def _triples(text: str, key: str) -> tuple:
    out = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        vals = _floats(chunk, key)
        if len(vals) != 3:
            raise ConfigError(f"{key}: each harmonic needs 'k cos sin', got {chunk.strip()!r}")
        out.append((int(vals[0]), vals[1], vals[2]))
    return tuple(out)


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    if "pendulum" not in cp:
        raise ConfigError("missing [pendulum] section")
    pend = cp["pendulum"]
    try:
        m = _floats(pend["m"], "m")
        ell = _floats(pend["l"], "l")
    except KeyError as exc:
        raise ConfigError(f"[pendulum] missing key {exc}") from exc
    N = int(pend.get("N", len(m)))
    if len(m) != N or len(ell) != N:
        raise ConfigError(f"[pendulum] N={N} but m has {len(m)} and l has {len(ell)} entries")
    g = float(pend.get("g", "1"))
    try:
        params = PendulumParams(tuple(m), tuple(ell), g)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    prob = cp["problem"] if "problem" in cp else {}
    if "v" not in prob:
        raise ConfigError("[problem] v is required")
    v = tuple(_ints(prob["v"], "v"))
    if len(v) != N:
        raise ConfigError(f"v has {len(v)} entries, expected {N}")
    T = float(prob["T"]) if "T" in prob else None
    K = int(prob.get("K", "32"))
    M = int(prob["M"]) if "M" in prob else None
    mode = prob.get("mode", "generic")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")

    rows = [() for _ in range(N)]
    if "forcing" in cp:
        for key, val in cp["forcing"].items():
            if not (key.startswith("f") and key[1:].isdigit() and 1 <= int(key[1:]) <= N):
                raise ConfigError(f"[forcing] keys are f1..f{N}, got {key!r}")
            rows[int(key[1:]) - 1] = _triples(val, key)

    scfg = SolverConfig()
    if "solver" in cp:
        known = {f.name: f for f in fields(SolverConfig)}
        for key, val in cp["solver"].items():
            if key not in known:
                raise ConfigError(f"[solver] unknown key {key!r}")
            if key == "methods":
                setattr(scfg, key, tuple(x.strip() for x in val.split(",") if x.strip()))
            else:
                setattr(scfg, key, int(val))
    return RunConfig(params, v, T, K, M, mode, tuple(rows), scfg)


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _join(xs) -> str:
    return ", ".join(repr(float(x)) if not isinstance(x, int) else str(x) for x in xs)


def format_config(params: PendulumParams, v, T: float | None = None, mode: str = "tuned",
                  forcing_terms=None, K: int = 32) -> str:
    lines = [
        "[pendulum]",
        f"N = {params.N}",
        f"m = {_join(params.m)}",
        f"l = {_join(params.ell)}",
        f"g = {params.g!r}",
        "",
        "[problem]",
        f"v = {', '.join(str(int(x)) for x in v)}",
    ]
    if T is not None:
        lines.append(f"T = {float(T)!r}")
    lines += [f"K = {K}", f"mode = {mode}", "", "[forcing]"]
    for i, row in enumerate(forcing_terms or ()):
        if row:
            lines.append(f"f{i + 1} = " + "; ".join(f"{k} {c!r} {s!r}" for k, c, s in row))
    lines += ["", "[solver]", "density = 8", "r = 4", "seed = 0", ""]
    return "\n".join(lines)


# -- solution records ---------------------------------------------------------------------

def record_to_dict(rec: SolutionRecord, params: PendulumParams, forcing: Forcing) -> dict:
    loop = rec.loop
    return {
        "format": RECORD_FORMAT,
        "sign_convention": SIGN_CONVENTION,
        "params": {"m": list(params.m), "l": list(params.ell), "g": params.g},
        "forcing": {"T": forcing.T, "terms": [[list(t) for t in row] for row in forcing.terms]},
        "loop": {
            "T": loop.T,
            "v": list(loop.v.v),
            "K": loop.K,
            "xbar": loop.xbar.tolist(),
            "a": loop.a.tolist(),
            "b": loop.b.tolist(),
        },
        "action": {"L1": rec.breakdown.L1, "L2": rec.breakdown.L2, "L3": rec.breakdown.L3, "total": rec.action},
        "grad_norm": rec.grad_norm,
        "morse_index": rec.morse_index,
        "nondegenerate": rec.nondegenerate,
        "zero_modes": rec.zero_modes,
        "hessian_head": rec.hessian_head,
        "orbit_representative": rec.orbit_representative,
        "underresolved": rec.underresolved,
        "band": rec.band,
        "oracles_ok": rec.oracles_ok,
        "above_a0": rec.above_a0,
        "provenance": rec.provenance,
        "method": rec.method,
        "cluster_size": rec.cluster_size,
        "certification": rec.certification,
    }


def write_record(path: str | Path, rec: SolutionRecord, params: PendulumParams, forcing: Forcing):
    # json writes floats via repr, which round-trips exactly
    Path(path).write_text(json.dumps(record_to_dict(rec, params, forcing), indent=1) + "\n")


@dataclass
class LoadedRecord:
    params: PendulumParams
    forcing: Forcing
    loop: LoopPath
    data: dict


def read_record(path: str | Path) -> LoadedRecord:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read record {path}: {exc}") from exc
    if data.get("format") != RECORD_FORMAT:
        raise ConfigError(f"{path}: not a solution record")
    try:
        p = data["params"]
        params = PendulumParams(tuple(p["m"]), tuple(p["l"]), p["g"])
        fd = data["forcing"]
        forcing = Forcing(fd["T"], tuple(tuple(tuple(t) for t in row) for row in fd["terms"]))
        lp = data["loop"]
        loop = LoopPath(lp["T"], validate_winding(lp["v"]), np.array(lp["xbar"]), np.array(lp["a"]), np.array(lp["b"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed record ({exc})") from exc
    return LoadedRecord(params, forcing, loop, data)
