"""Command-line entry point: ``rotpend {check-params,search-params,find,verify}``.

Exit codes: 0 success, 1 negative result (infeasible, failed check,
under-count), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .bounds import constants_report, parameter_search
from .exceptions import CertificateError, HypothesisError, InfeasibleError, InvalidParameterError, InvalidWindingError
from .loopspace import validate_winding
from .model import forcing_bound
from .solver import CensusReport, band_levels, census
from .storage import SIGN_CONVENTION, ConfigError, format_config, load_config, read_record, write_record
from .torus import potential_bounds_certificate
from .verify import certify

log = logging.getLogger("rotpend")

EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE = 0, 1, 2


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, float):
        return f"{x + 0.0:.10g}"
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_fmt(y) for y in x) + "]"
    return str(x)


def cmd_check_params(args) -> int:
    cfg = load_config(args.config)
    v = validate_winding(cfg.v)
    T = args.T if args.T is not None else cfg.T
    f = cfg.forcing(T) if T is not None else None
    M0 = forcing_bound(f) if f is not None else 0.0
    rep = constants_report(cfg.params, v, M0, T, f)
    out = sys.stdout
    print(f"N = {rep.N}  v = {list(rep.v)}  sigma (0-based) = {list(rep.sigma)}  M0 = {_fmt(rep.M0)}", file=out)
    print(f"lambda: search {_fmt(rep.lambda_hat)}  grid {_fmt(rep.lambda_grid)}  used {_fmt(rep.lam)}", file=out)
    print(f"gamma1 = {_fmt(rep.gamma1)}  gamma2 = {_fmt(rep.gamma2)}  gamma = {_fmt(rep.gamma)}", file=out)
    print(f"Gamma = {_fmt(rep.Gamma)}", file=out)
    print(f"margin gamma/sqrt(gamma1 gamma2) = {_fmt(rep.margin)}  feasible = {rep.feasible}", file=out)
    if rep.feasible:
        print(f"period window [T1, T2] = [{_fmt(rep.T1)}, {_fmt(rep.T2)}]", file=out)
    print(f"window where gamma T^2 > gamma1 + gamma2 T^4 holds: {_fmt(rep.strict_window)}", file=out)
    if rep.a0 is not None:
        print(f"T = {_fmt(T)}  f_v = {_fmt(rep.f_v)}  a0 = {_fmt(rep.a0)}", file=out)
    if rep.levels:
        lv = rep.levels
        print(f"beta(k) = {_fmt(lv['beta'])}", file=out)
        print(f"C1(k) = {_fmt(lv['C1'])}", file=out)
        print(f"C2(k) = {_fmt(lv['C2'])}", file=out)
        print(f"a_k = {_fmt(lv['a'])}", file=out)
    for note in rep.notes:
        print(f"note: {note}", file=out)
    certs_ok = True
    n = 2 ** len(rep.sigma)
    for k in range(1, n):
        try:
            c = potential_bounds_certificate(cfg.params, rep.sigma, k)
            print(f"certificate k={k}: PASS  max V on M = {_fmt(c.max_on_M)} <= beta(k) = {_fmt(c.beta_k)}"
                  f" < beta(k+1) = {_fmt(c.beta_k1)} <= min V on O = {_fmt(c.min_on_O)}", file=out)
        except CertificateError as exc:
            certs_ok = False
            print(f"certificate k={k}: FAIL  {exc}", file=out)
    if args.json:
        Path(args.json).write_text(json.dumps(rep.as_dict(), indent=1) + "\n")
    return EXIT_OK if rep.feasible and certs_ok else EXIT_NEGATIVE


def cmd_search_params(args) -> int:
    v = validate_winding(args.v)
    res = parameter_search(args.N, v, args.M0, args.budget)
    print(f"best margin {_fmt(res.margin)} after {res.evaluations} evaluations")
    if not res.feasible:
        print("no feasible parameters found within the budget")
        return EXIT_NEGATIVE
    rep = res.report
    T = args.T if args.T is not None else 0.5 * (rep.T1 + rep.T2)
    text = format_config(res.params, v.v, T, mode="tuned")
    print(f"m = {_fmt(list(res.params.m))}  l = {_fmt(list(res.params.ell))}  window [{_fmt(rep.T1)}, {_fmt(rep.T2)}]")
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text)
    return EXIT_OK


def run_census(cfg, threads: int | None = None, retry: bool = True) -> CensusReport:
    """Census with one retry at doubled seed density on an under-count."""
    problem = cfg.problem()
    scfg = cfg.solver if threads is None else replace(cfg.solver, threads=threads)
    lv = band_levels(problem) if cfg.mode == "tuned" else None
    rep = census(problem, scfg, cfg.mode, levels=lv)
    if retry and not (rep.meets_bound and rep.bands_ok is not False):
        rep2 = census(problem, replace(scfg, density=2 * scfg.density), cfg.mode, levels=lv)
        rep2.notes.insert(0, f"rerun at seed density {2 * scfg.density} after under-count at {scfg.density}")
        rep = rep2
    if cfg.mode == "tuned" and lv is None:
        rep.notes.append("T outside the feasible period window; bands not assigned")
    return rep


def summary_dict(rep: CensusReport, cfg) -> dict:
    return {
        "sign_convention": SIGN_CONVENTION,
        "mode": rep.mode,
        "N": cfg.params.N,
        "v": list(cfg.v),
        "T": cfg.T,
        "bound": rep.bound,
        "bound_label": rep.bound_label,
        "found": rep.found,
        "certified": rep.certified,
        "meets_bound": rep.meets_bound,
        "band_counts": None if rep.band_counts is None else {str(k): c for k, c in rep.band_counts.items()},
        "bands_ok": rep.bands_ok,
        "levels": rep.levels,
        "a0": rep.a0,
        "lambda": rep.lam,
        "seeds": rep.seeds,
        "converged_runs": rep.converged_runs,
        "failed_runs": rep.failed_runs,
        "degenerate": rep.degenerate,
        "notes": rep.notes,
        "solutions": [
            {"id": i + 1, "action": r.action, "band": r.band, "morse_index": r.morse_index,
             "defect": r.certification["defect"], "passed": r.certification["passed"]}
            for i, r in enumerate(rep.records)
        ],
    }


def cmd_find(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.solver.seed = args.seed
    problem = cfg.problem()
    rep = run_census(cfg, args.threads, retry=not args.no_retry)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, r in enumerate(rep.records):
        write_record(out / f"solution-{i + 1:03d}.json", r, problem.params, problem.forcing)
    summary = summary_dict(rep, cfg)
    (out / "census.json").write_text(json.dumps(summary, indent=1) + "\n")
    with open(out / "census.tsv", "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["id", "action", "band", "morse_index", "defect"])
        for s in summary["solutions"]:
            w.writerow([s["id"], repr(s["action"]), s["band"] if s["band"] is not None else "", s["morse_index"], repr(s["defect"])])
    print(f"# {SIGN_CONVENTION}")
    print(f"mode {rep.mode}: bound {rep.bound} [{rep.bound_label}]")
    print(f"found {rep.found} distinct, {rep.certified} certified; seeds {rep.seeds}, "
          f"converged runs {rep.converged_runs}, failed runs {rep.failed_runs}")
    if rep.band_counts is not None:
        print(f"levels a_k = {_fmt(rep.levels)}  per-band counts {rep.band_counts}")
    for s in summary["solutions"]:
        print(f"  #{s['id']:<3d} action {s['action']:.10g}  band {_fmt(s['band'])}  Morse {s['morse_index']}  "
              f"defect {s['defect']:.2e}  {'PASS' if s['passed'] else 'FAIL'}")
    for note in rep.notes:
        print(f"note: {note}")
    ok = rep.meets_bound and rep.bands_ok is not False
    print("RESULT:", "bound met" if ok else "under-count")
    return EXIT_OK if ok else EXIT_NEGATIVE


def cmd_verify(args) -> int:
    all_ok = True
    for path in args.files:
        rec = read_record(path)
        cert = certify(rec.params, rec.forcing, rec.loop, args.steps)
        all_ok &= cert.passed
        print(f"{path}: {'PASS' if cert.passed else 'FAIL'}  defect {cert.defect:.3e} (tol {cert.defect_tol:.1e})  "
              f"residual {cert.residual:.3e} (tol {cert.residual_tol:.1e})")
    return EXIT_OK if all_ok else EXIT_NEGATIVE


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rotpend", description="Rotating periodic solutions of the forced planar N-pendulum.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-params", help="constants, period window, levels and potential certificates")
    p.add_argument("config")
    p.add_argument("--T", type=float, help="period for levels (overrides [problem] T)")
    p.add_argument("--json", help="also write the constants report as JSON")
    p.set_defaults(func=cmd_check_params)

    p = sub.add_parser("search-params", help="search masses and lengths with a feasible period window")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--v", type=_int_list, required=True, help="winding vector, e.g. 1,0")
    p.add_argument("--M0", type=float, default=0.0, help="forcing amplitude bound")
    p.add_argument("--budget", type=int, default=1200)
    p.add_argument("--T", type=float, help="period written to the config (default: window midpoint)")
    p.add_argument("--out", help="config file to write (default: stdout)")
    p.set_defaults(func=cmd_search_params)

    p = sub.add_parser("find", help="multistart search, certification and census")
    p.add_argument("config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--no-retry", action="store_true", help="skip the doubled-density rerun on under-count")
    p.set_defaults(func=cmd_find)

    p = sub.add_parser("verify", help="re-certify solution records")
    p.add_argument("files", nargs="+")
    p.add_argument("--steps", type=int, default=4096)
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, HypothesisError, InvalidParameterError, InvalidWindingError) as exc:
        print(f"rotpend: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"rotpend: {exc}", file=sys.stderr)
        return EXIT_NEGATIVE


if __name__ == "__main__":
    sys.exit(main())
