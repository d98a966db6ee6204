"""Batch command line: solve | price | verify | converge | check-weights.

Exit codes: 0 ok, 2 invalid input, 3 solver failure, 4 audit or convergence failure.
Every command writes ``run_config.json`` (the fully resolved configuration)
next to its outputs and embeds the same dict in its JSON report.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (barrier_audit, coercivity_audit, comparison_check, pointwise_bound_audit,
                       truncation_distance, weight_check)
from .config import RunConfig, load_config
from .errors import (AuditFailure, DegenerateSpectrum, IllposedFactors, LiqShockError, SolverError,
                     ValidationError)
from .grid import barrier_window, write_rows
from .oracles import constant_payoff_solution, linear_reduction_solution
from .params import evaluate_factors, merton_residuals, merton_spectrum
from .payoff import call, evaluate
from .prices import indifference_prices
from .solver import solve, solve_unbounded

log = logging.getLogger("liqshock")

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_AUDIT = 0, 2, 3, 4
CHECKS = ("comparison", "coercivity", "merton", "barrier", "truncation", "pointwise")
MIN_RATE = 1.5


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def _prepare(cfg: RunConfig) -> Path:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "run_config.json", cfg.resolved)
    return out


# ---- solve ------------------------------------------------------------------------------


def _parse_float_list(text: str, field: str):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(field, f"expected a comma-separated list of numbers, got {text!r}") from None
    if not values:
        raise ValidationError(field, "is empty")
    return values


def cmd_solve(cfg: RunConfig, args) -> int:
    out = _prepare(cfg)
    ladder = None
    if args.levels:
        levels = _parse_float_list(args.levels, "--levels")
        surface, report, ladder = solve_unbounded(cfg.params, cfg.payoff, cfg.grid, cfg.solver, levels)
    else:
        surface, report = solve(cfg.params, cfg.payoff, cfg.grid, cfg.solver)
    if "csv" in cfg.formats:
        surface.to_csv(out / "surface.csv")
    if "json" in cfg.formats:
        body = {"config": cfg.resolved, "report": report.as_json_dict(args.timings)}
        if ladder is not None:
            body["ladder"] = ladder.as_dict()
        write_json(out / "report.json", body)
    return EXIT_OK


# ---- price ------------------------------------------------------------------------------


def cmd_price(cfg: RunConfig, args) -> int:
    try:
        factors = merton_spectrum(cfg.params)
    except (IllposedFactors, DegenerateSpectrum) as exc:
        raise ValidationError("model.nu01", f"Merton factors unavailable: {exc}") from None
    out = _prepare(cfg)
    surface, report = solve(cfg.params, cfg.payoff, cfg.grid, cfg.solver)
    prices = indifference_prices(surface, cfg.params, factors)
    if "csv" in cfg.formats:
        prices.to_csv(out / "prices.csv")
    if "json" in cfg.formats:
        write_json(out / "report.json", {"config": cfg.resolved, "report": report.as_json_dict(args.timings)})
    return EXIT_OK


# ---- verify -----------------------------------------------------------------------------


def check_merton(cfg: RunConfig, rng) -> dict:
    factors = merton_spectrum(cfg.params)
    T = cfg.params.T
    t = np.concatenate([[0.0, T], rng.uniform(0.0, T, 50)])
    F0, F1, _, _ = evaluate_factors(factors, t)
    r0, r1 = merton_residuals(factors, t)
    scale = np.maximum(1.0, np.maximum(np.abs(F0), np.abs(F1)))
    worst = float(np.max(np.maximum(np.abs(r0), np.abs(r1)) / scale))
    end = max(abs(F0[1] - 1.0), abs(F1[1] - 1.0))
    return {"passed": worst <= 1e-10 and end <= 1e-12, "worstResidual": worst, "terminalError": end,
            "lambda1": factors.lambda1, "lambda2": factors.lambda2}


def check_comparison(cfg: RunConfig, rng) -> dict:
    u0, _ = solve(cfg.params, cfg.payoff, cfg.grid, cfg.solver)
    u1 = u0 if cfg.compare == cfg.payoff else solve(cfg.params, cfg.compare, cfg.grid, cfg.solver)[0]
    v = comparison_check(u1, u0, cfg.compare, cfg.payoff, cfg.params.gamma)
    d = v.as_dict()
    d["worstS"] = float(cfg.grid.S[v.worst_node])
    d["worstTau"] = float(cfg.grid.tau[v.worst_level])
    return d


def check_coercivity(cfg: RunConfig, rng) -> dict:
    return coercivity_audit(cfg.weight, cfg.grid, cfg.params.sigma, trials=cfg.trials, seed=cfg.seed,
                            raise_on_fail=False).as_dict()


def check_barrier(cfg: RunConfig, rng) -> dict:
    sigma, T = cfg.params.sigma, cfg.params.T
    # window length from growth exponent 1/4, kept strictly inside the admissible bound
    T1 = T + 0.5 * barrier_window(0.25, sigma)
    d = barrier_audit(sigma, T1, tau=T).as_dict()
    d["T1"] = T1
    return d


def check_truncation(cfg: RunConfig, rng) -> dict:
    u = cfg.params.gamma * np.asarray(evaluate(cfg.payoff, cfg.grid.S), dtype=float)
    eps = [2.0**-k for k in range(1, 6)]
    dist = truncation_distance(u, eps, cfg.weight, cfg.grid)
    scale = max(dist[0], 1.0)
    nonincreasing = all(b <= a + 1e-12 * scale for a, b in zip(dist, dist[1:]))
    return {"passed": nonincreasing, "epsilon": eps, "distance": dist}


def check_pointwise(cfg: RunConfig, rng) -> dict:
    grid = cfg.grid
    # the profile S exp(-C |ln S|) peaks at S = 1; anchor the family there
    c = min(max(0.0, grid.x_min), grid.x_max)
    width = 0.125 * (grid.x_max - grid.x_min)
    noise = np.convolve(rng.standard_normal(grid.n_space), np.ones(9) / 9.0, mode="same")
    family = {
        "call": np.asarray(evaluate(call(0.5 * math.exp(c)), grid.S)),
        "bump": np.exp(-0.5 * ((grid.x - c) / width) ** 2),
        "noise": noise,
    }
    fits = {k: pointwise_bound_audit(u, cfg.weight, grid)[0] for k, u in family.items()}
    # c0 -> 0 for functions vanishing near S = 1, so gate on the upper bound only,
    # measured against the constant function
    ref = pointwise_bound_audit(np.ones(grid.n_space), cfg.weight, grid)[0]
    bound = max(fits.values()) / ref
    spread = max(fits.values()) / min(fits.values())
    d = {"passed": bool(math.isfinite(bound) and bound <= 100.0), "c0": fits, "c0Constant": ref,
         "boundRatio": bound, "spread": spread}
    gh = cfg.params.gamma * np.asarray(evaluate(cfg.payoff, grid.S))
    if np.any(gh != 0.0):
        d["payoffC0"] = pointwise_bound_audit(gh, cfg.weight, grid)[0]
    return d


CHECK_FUNCS = {
    "comparison": check_comparison,
    "coercivity": check_coercivity,
    "merton": check_merton,
    "barrier": check_barrier,
    "truncation": check_truncation,
    "pointwise": check_pointwise,
}


def _parse_checks(text):
    if not text:
        return list(CHECKS)
    names = [c.strip() for c in text.split(",") if c.strip()]
    for c in names:
        if c not in CHECKS:
            raise ValidationError("--checks", f"unknown check {c!r}; expected a subset of {CHECKS}")
    return names


def cmd_verify(cfg: RunConfig, args) -> int:
    names = _parse_checks(args.checks)
    if "merton" in names:
        try:
            merton_spectrum(cfg.params)
        except (IllposedFactors, DegenerateSpectrum) as exc:
            raise ValidationError("model.nu01", f"Merton factors unavailable: {exc}") from None
    out = _prepare(cfg)
    results = {}
    for name in names:
        # each audit gets its own stream so results do not depend on which checks ran
        rng = np.random.default_rng([cfg.seed, CHECKS.index(name)])
        try:
            results[name] = CHECK_FUNCS[name](cfg, rng)
        except SolverError as exc:
            results[name] = {"passed": False, "error": f"{type(exc).__name__}: {exc}"}
    passed = all(r["passed"] for r in results.values())
    write_json(out / "verify.json", {"config": cfg.resolved, "checks": results, "passed": passed})
    for name, r in results.items():
        print(f"{name}: {'PASS' if r['passed'] else 'FAIL'}")
    return EXIT_OK if passed else EXIT_AUDIT


# ---- converge ---------------------------------------------------------------------------


def _solve_values(job):
    params, payoff, grid, solver = job
    return solve(params, payoff, grid, solver)[0].values


def _closed_form_case(cfg: RunConfig):
    p = cfg.payoff
    if p.floor is not None:
        return None
    if p.kind == "constant":
        return "constant"
    if cfg.params.nu01 == 0.0 and p.kind in ("call", "put"):
        return "linear"
    return None


def cmd_converge(cfg: RunConfig, args) -> int:
    try:
        levels = int(args.levels) if args.levels else 3
    except ValueError:
        raise ValidationError("--levels", f"expected an integer refinement count, got {args.levels!r}") from None
    if levels < 2:
        raise ValidationError("--levels", f"need at least 2 refinement levels, got {levels}")
    case = _closed_form_case(cfg)
    n_solves = levels if case else levels + 1
    grids = [cfg.grid.refined(2**k) for k in range(n_solves)]
    jobs = [(cfg.params, cfg.payoff, g, cfg.solver) for g in grids]
    out = _prepare(cfg)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            values = list(pool.map(_solve_values, jobs))
    else:
        values = [_solve_values(j) for j in jobs]

    errors = []
    if case == "constant":
        # smooth in S: sup over every node and time level
        for g, v in zip(grids, values):
            exact = constant_payoff_solution(cfg.params, cfg.payoff.level + cfg.payoff.offset, g.tau)
            errors.append(float(np.max(np.abs(v - exact[:, None]))))
        measure = "sup over all nodes and time levels vs closed form"
    elif case == "linear":
        # payoff kink: the first steps carry an O(dt) layer, so measure at the final time
        for g, v in zip(grids, values):
            mask = g.central_mask()
            exact = linear_reduction_solution(cfg.params, cfg.payoff, g.S[mask], g.horizon)
            errors.append(float(np.max(np.abs(v[-1, mask] - exact))))
        measure = "final-time sup over the central half vs lognormal closed form"
    else:
        for k in range(levels):
            g = grids[k]
            mask = g.central_mask()
            fine = values[k + 1][-1, ::2]
            errors.append(float(np.max(np.abs(values[k][-1, mask] - fine[mask]))))
        measure = "final-time sup over the central half between successive levels"

    rates = [math.log2(a / b) if a > 0.0 and b > 0.0 else math.inf for a, b in zip(errors, errors[1:])]
    rows = []
    for k in range(levels):
        g = grids[k]
        rows.append({"level": k, "nSpace": g.n_space, "nTime": g.n_time, "dx": g.dx, "dtau": g.dtau,
                     "error": errors[k], "rate": rates[k - 1] if k > 0 else None})
    if "csv" in cfg.formats:
        write_rows(out / "converge.csv", ("level", "nSpace", "nTime", "dx", "dtau", "error", "rate"),
                   ([r["level"], r["nSpace"], r["nTime"], r["dx"], r["dtau"], r["error"],
                     r["rate"] if r["rate"] is not None else math.nan] for r in rows))
    # errors already at round-off carry no rate information
    floor = 1e-11
    gated = [r for r, e in zip(rates, errors[1:]) if e > floor]
    passed = all(r >= MIN_RATE for r in gated)
    write_json(out / "converge.json", {"config": cfg.resolved, "case": case or "self", "measure": measure,
                                       "levels": rows, "minRate": min(rates) if rates else None,
                                       "threshold": MIN_RATE, "passed": passed})
    for r in rows:
        rate = "" if r["rate"] is None else f"  rate {r['rate']:.3f}"
        print(f"level {r['level']}: nSpace {r['nSpace']} nTime {r['nTime']} error {r['error']:.3e}{rate}")
    return EXIT_OK if passed else EXIT_AUDIT


# ---- check-weights ----------------------------------------------------------------------


def cmd_check_weights(cfg: RunConfig, args) -> int:
    out = _prepare(cfg)
    report = weight_check(cfg.weight, cfg.grid)
    write_json(out / "weights.json", {"config": cfg.resolved, "weight": report.as_dict()})
    print(f"C = {report.C} (measured {report.C_measured:.6g}), theta = {report.theta:.6g}: "
          f"{'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_AUDIT


COMMANDS = {
    "solve": cmd_solve,
    "price": cmd_price,
    "verify": cmd_verify,
    "converge": cmd_converge,
    "check-weights": cmd_check_weights,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="liqshock", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI run configuration")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--seed", type=int, help="audit seed (overrides audit.seed)")
        p.add_argument("--checks", help="verify: comma-separated subset of " + ",".join(CHECKS))
        p.add_argument("--levels", help="solve: truncation levels N1,N2,...; converge: refinement count")
        p.add_argument("--jobs", type=int, default=1, help="converge: parallel solver processes")
        p.add_argument("--timings", action="store_true", help="include wall-clock times in JSON reports")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.jobs < 1:
            raise ValidationError("--jobs", "must be >= 1")
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ValidationError("--seed", "must be >= 0")
            cfg = cfg.with_seed(args.seed)
        if args.out:
            cfg = cfg.with_out(args.out)
        return COMMANDS[args.command](cfg, args)
    except ValidationError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"solver failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except AuditFailure as exc:
        print(f"audit failure: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    except LiqShockError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
