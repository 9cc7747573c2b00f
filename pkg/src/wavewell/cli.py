"""``wavewell`` command line: check, eig, fiber, depth, simulate, classify, sweep.

Exit codes: 0 success, 1 input error, 2 a prediction or condition was
violated, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from .classify import plan_context, predict, run_experiment
from .domain import Grid, embedding_constant, lambda1
from .dynamics import DIAGNOSTIC_COLUMNS, State, simulate
from .errors import InputError, NumericalError
from .nonlinearity import check_condition_H, check_lemma_equivalence, growth_constants
from .wells import depth_curve, fiber_scan, nehari_scale

log = logging.getLogger("wavewell")

EXIT_OK, EXIT_INPUT, EXIT_VIOLATION, EXIT_NUMERICAL = 0, 1, 2, 3
COMMANDS = ("check", "eig", "fiber", "depth", "simulate", "classify", "sweep")


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if x is None:
        return ""
    return str(x)


def write_csv(path: Path, command: str, columns, rows) -> None:
    """CSV with a ``# ... generated <timestamp>`` first line; floats in shortest round-trip form."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    path.write_text(f"# wavewell {__version__} {command} generated {stamp}\n" + buf.getvalue())


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return str(x)


def _finite(obj):
    # json has no inf/nan; map them to null
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not math.isfinite(obj):
        return None
    return obj


def output_dir(base, command: str) -> Path:
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S-%f")
    out = Path(base) / f"{command}-{stamp}"
    out.mkdir(parents=True, exist_ok=False)
    return out


# -- commands -----------------------------------------------------------------


def cmd_check(cfg, out: Path) -> int:
    spec, params = cfgmod.build_spec(cfg), cfgmod.build_params(cfg)
    grid = cfgmod.build_grid(cfg)
    rep = check_condition_H(spec, params)
    lam = lambda1(grid)
    result = {"condition": rep.to_dict(), "lambda1": lam, "beta_bound": params.beta_bound(lam)}
    try:
        result["growth"] = growth_constants(spec, params, float(cfg["condition"]["probe_u"])).to_dict()
    except InputError as exc:
        result["growth"] = {"error": str(exc)}
    result["lemma_equivalence"] = check_lemma_equivalence(spec, params, lam)
    write_json(out / "check.json", _finite(result))
    log.info("condition (1): worst slack %r, passed %s; condition (2): passed %s",
             rep.worst_slack_1, rep.passed_1, rep.passed_2)
    ok = rep.passed and params.beta < params.beta_bound(lam)
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_eig(cfg, out: Path) -> int:
    grid = cfgmod.build_grid(cfg)
    gamma = float(cfg["condition"]["gamma"])
    seed = int(cfg["search"]["seed"])
    rows = []
    for n in sorted(set(int(k) for k in cfg["output"]["refinements"]) | {grid.counts[0]}):
        g = Grid(grid.dim, grid.extents, (n,) * grid.dim)
        rows.append({
            "n": n,
            "h": g.spacing[0],
            "lambda1": lambda1(g),
            "lambda1_discrete": g.discrete_lambda1(),
            "c_star": embedding_constant(g, gamma, n_starts=int(cfg["search"]["n_starts"]), seed=seed),
        })
    write_csv(out / "eig.csv", "eig", ["n", "h", "lambda1", "lambda1_discrete", "c_star"], rows)
    write_json(out / "eig.json", rows[-1] | {"gamma": gamma})
    log.info("lambda1 = %r, C* = %r", rows[-1]["lambda1"], rows[-1]["c_star"])
    return EXIT_OK


def cmd_fiber(cfg, out: Path) -> int:
    plan = cfgmod.build_plan(cfg)
    s = cfg["search"]
    u = plan.u0.build(plan.grid, plan.seed, 0)
    eps = np.linspace(float(s["eps_min"]), float(s["eps_max"]), int(s["eps_points"]))
    scan = fiber_scan(plan.grid, plan.spec, plan.params, u, eps)
    eps_star = nehari_scale(plan.grid, plan.spec, u)
    rows = [{"eps": e, "J": j, "I": i} for e, j, i in zip(scan.eps, scan.J, scan.I)]
    write_csv(out / "fiber.csv", "fiber", ["eps", "J", "I"], rows)
    write_json(out / "fiber.json", {
        "eps_star": eps_star,
        "argmax_eps": scan.argmax_eps,
        "zero_crossing_eps": scan.zero_crossing_eps,
        "cell": scan.cell,
        "consistent": scan.consistent,
    })
    log.info("eps* = %r, argmax of J = %r", eps_star, scan.argmax_eps)
    return EXIT_OK if scan.consistent else EXIT_VIOLATION


def cmd_depth(cfg, out: Path) -> int:
    plan = cfgmod.build_plan(cfg)
    s = cfg["search"]
    top = plan.params.gamma / 2
    deltas = s["deltas"] if s["deltas"] is not None else np.linspace(top / 20, top, 20)
    curve = depth_curve(plan.grid, plan.spec, plan.params, plan_context(plan), deltas,
                        budget=plan.budget, seed=plan.seed, descent_starts=plan.descent_starts)
    write_csv(out / "depth.csv", "depth", ["delta", "d_estimate", "r_delta", "a_delta"], curve.rows())
    write_json(out / "depth_seed.json", {"seed": plan.seed, "budget": plan.budget, "stream": 1,
                                         "descent_starts": plan.descent_starts})
    summary = {"d1": curve.d_at_one, "b": curve.b_root, "b_is_lower_bound": curve.b_is_lower_bound,
               "b_bounds": list(curve.b_bounds), "b_in_bounds": curve.b_in_bounds}
    write_json(out / "depth.json", summary)
    log.info("d(1) = %r, b = %r", curve.d_at_one, curve.b_root)
    return EXIT_OK if curve.b_in_bounds else EXIT_VIOLATION


def _diag_rows(diag):
    return diag.rows()


def cmd_simulate(cfg, out: Path) -> int:
    plan = cfgmod.build_plan(cfg)
    u0 = plan.u0.build(plan.grid, plan.seed, 0)
    u1 = plan.u1.build(plan.grid, plan.seed, 1, u0)
    diag, verdict = simulate(plan.grid, plan.spec, plan.params, State.initial(plan.grid, u0, u1),
                             plan.time_step, plan.t_end, plan.monitors)
    write_csv(out / "diagnostics.csv", "simulate", DIAGNOSTIC_COLUMNS, _diag_rows(diag))
    write_json(out / "verdict.json", _finite(verdict.to_dict()))
    log.info("status %s, max drift %r, t_detect %r", verdict.status, verdict.max_drift, verdict.t_detect)
    return EXIT_NUMERICAL if verdict.status in ("numerical-failure", "inconclusive") else EXIT_OK


def _record_exit(record) -> int:
    if record.verdict.get("status") in ("numerical-failure", "inconclusive"):
        return EXIT_NUMERICAL
    return EXIT_VIOLATION if record.outcome == "violation" else EXIT_OK


def cmd_classify(cfg, out: Path) -> int:
    plan = cfgmod.build_plan(cfg)
    record = run_experiment(plan)
    write_csv(out / "diagnostics.csv", "classify", DIAGNOSTIC_COLUMNS, _diag_rows(record.diagnostics))
    write_json(out / "record.json", _finite(record.to_dict()))
    log.info("regime %s, outcome %s", record.prediction["regime"], record.outcome)
    return _record_exit(record)


def _sweep_one(cfg):
    plan = cfgmod.build_plan(cfg)
    record = run_experiment(plan)
    return record.to_dict(), _record_exit(record)


SWEEP_COLUMNS = ("index", "value", "plan_hash", "regime", "verdict", "outcome", "E0", "I0", "d", "t_detect", "bound_T")


def cmd_sweep(cfg, out: Path, jobs: int = 1) -> int:
    param = cfg["sweep"]["parameter"]
    values = cfgmod.sweep_values(cfg)
    cfgs = [cfgmod.with_override(cfg, param, v) for v in values]
    for c in cfgs:
        cfgmod.build_plan(c)  # validate every plan before running any
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_sweep_one, cfgs))
    else:
        results = [_sweep_one(c) for c in cfgs]
    runs = out / "runs"
    runs.mkdir()
    rows = []
    for k, (v, (rec, _)) in enumerate(zip(values, results)):
        write_json(runs / f"{k:03d}-{rec['plan_hash'][:12]}.json", _finite(rec))
        rows.append({
            "index": k,
            "value": v,
            "plan_hash": rec["plan_hash"],
            "regime": rec["prediction"]["regime"],
            "verdict": rec["verdict"]["status"],
            "outcome": rec["outcome"],
            "E0": rec["prediction"]["E0"],
            "I0": rec["prediction"]["I0"],
            "d": rec["prediction"]["d_estimate"],
            "t_detect": rec["verdict"]["t_detect"],
            "bound_T": rec["verdict"]["bound_T_theorem"],
        })
    write_csv(out / "summary.csv", "sweep", SWEEP_COLUMNS, rows)
    codes = [c for _, c in results]
    log.info("%d runs: %s", len(rows), ", ".join(r["regime"] for r in rows))
    if EXIT_NUMERICAL in codes:
        return EXIT_NUMERICAL
    return EXIT_VIOLATION if EXIT_VIOLATION in codes else EXIT_OK


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wavewell", description="Potential-well lab for u_tt - Δu = f(u).")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="TOML or JSON config file")
    p.add_argument("--out", type=Path, help="base output directory (default: [output] dir)")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs for sweep")
    p.add_argument("--seed", type=int, help="override [search] seed")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--version", action="version", version=f"wavewell {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s", force=True)
    try:
        cfg = cfgmod.load(args.config) if args.config else cfgmod.resolve()
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise InputError("--seed must be an unsigned 64-bit integer")
            cfg["search"]["seed"] = args.seed
        if args.jobs < 1:
            raise InputError("--jobs must be at least 1")
        out = output_dir(args.out or cfg["output"]["dir"], args.command)
        write_json(out / "config.json", cfg)
        handler = globals()[f"cmd_{args.command}"]
        code = handler(cfg, out, args.jobs) if args.command == "sweep" else handler(cfg, out)
        log.info("artifacts in %s", out)
        return code
    except InputError as exc:
        log.error("input error: %s", exc)
        return EXIT_INPUT
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
