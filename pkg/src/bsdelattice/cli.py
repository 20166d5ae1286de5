"""Command-line front end for solving, certifying, and experimenting.

Subcommands: solve, duality, picard, converge, approx, verify.  Every option
can also come from a flat JSON config file (same names, underscores for
hyphens); explicit flags win over the config, the config wins over defaults.

Exit codes: 0 on success, 1 when a mathematical property fails (divergence,
inadmissible optimizer, violated monotonicity), 2 on input errors.  All CSV
output is written with 17 significant digits and is bitwise reproducible for
a fixed config and seed.  BSDELATTICE_WORKERS is validated when set but
never influences results; it is reserved for a future parallel evaluator.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from .approximation import (
    export_ladder_csv,
    export_refinement_csv,
    monotone_limit_experiment,
    refinement_experiment,
)
from .drivers import SamplingPlan, make_driver, make_terminal, verify_driver_properties
from .duality import (
    dual_value,
    duality_gap,
    duality_summary,
    export_duality_csv,
    optimal_control,
    random_admissible_control,
)
from .errors import (
    AdmissibilityError,
    ConvergenceError,
    GridError,
    LatticeModelError,
    QuadratureError,
    ValidationError,
)
from .lattice import build_lattice, verify_walk_conditions
from .picard import export_picard_trace_csv, picard_solve
from .solver import export_solution_csv, solution_summary, solve_backward

WORKERS_VAR = "BSDELATTICE_WORKERS"

DEFAULTS = {
    "steps": 8,
    "dim": 1,
    "horizon": 1.0,
    "mode": "full",
    "driver": "quadratic",
    "terminal": "endpoint",
    "tol": None,
    "max_iter": 200,
    "steps_list": [10, 50, 100],
    "levels": [1, 2, 4, 8, 16],
    "reference": None,
    "samples": 16,
    "seed": 0,
    "leaf_budget": None,
    "out": None,
}


@dataclass
class ExperimentConfig:
    command: str
    steps: int
    dim: int
    horizon: float
    mode: str
    driver: str
    terminal: str
    tol: float
    max_iter: int
    steps_list: list
    levels: list
    reference: float
    samples: int
    seed: int
    leaf_budget: int
    out: str

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def lattice(self, steps=None):
        kwargs = {}
        if self.leaf_budget is not None:
            kwargs["leaf_budget"] = int(self.leaf_budget)
        return build_lattice(
            int(steps if steps is not None else self.steps),
            dim=int(self.dim),
            horizon=float(self.horizon),
            mode=self.mode,
            **kwargs,
        )


def _parse_int_list(value):
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    return [int(v) for v in str(value).split(",") if v.strip()]


def _parse_level_list(value):
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(v) for v in str(value).split(",") if v.strip()]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bsdelattice",
        description="backward solver and certificates on random-walk lattices",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON file with option values")
    common.add_argument("--steps", type=int)
    common.add_argument("--dim", type=int)
    common.add_argument("--horizon", type=float)
    common.add_argument("--mode", choices=["full", "recombining"])
    common.add_argument("--driver")
    common.add_argument("--terminal")
    common.add_argument("--tol", type=float)
    common.add_argument("--max-iter", type=int, dest="max_iter")
    common.add_argument("--seed", type=int)
    common.add_argument("--leaf-budget", type=int, dest="leaf_budget")
    common.add_argument("--out", help="CSV output path (stdout when omitted)")
    sub.add_parser("solve", parents=[common], help="solve and export the triple")
    dual = sub.add_parser("duality", parents=[common], help="dual certificate and gap")
    dual.add_argument("--samples", type=int, help="random admissible controls to try")
    sub.add_parser("picard", parents=[common], help="iterate and export the trace")
    conv = sub.add_parser("converge", parents=[common], help="grid refinement study")
    conv.add_argument("--steps-list", dest="steps_list", help="comma-separated step counts")
    conv.add_argument("--reference", type=float, help="reference root value")
    appr = sub.add_parser("approx", parents=[common], help="regularization ladder")
    appr.add_argument("--levels", help="comma-separated regularization levels")
    sub.add_parser("verify", parents=[common], help="check walk and driver properties")
    return parser


def _load_config(path):
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise GridError("config must be a JSON object, got %s" % type(data).__name__)
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise GridError("unknown config keys: %s" % ", ".join(unknown))
    return data


def _merge(args: argparse.Namespace) -> ExperimentConfig:
    file_cfg = _load_config(args.config) if getattr(args, "config", None) else {}
    merged = {}
    for key, default in DEFAULTS.items():
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            merged[key] = cli_val
        elif key in file_cfg:
            merged[key] = file_cfg[key]
        else:
            merged[key] = default
    merged["steps_list"] = _parse_int_list(merged["steps_list"])
    merged["levels"] = _parse_level_list(merged["levels"])
    return ExperimentConfig(command=args.command, **merged)


def _check_workers_var():
    raw = os.environ.get(WORKERS_VAR)
    if raw is None:
        return
    try:
        value = int(raw)
    except ValueError:
        raise GridError("%s must be an integer, got %r" % (WORKERS_VAR, raw))
    if value < 1:
        raise GridError("%s must be at least 1, got %d" % (WORKERS_VAR, value))


class _OutSink:
    def __init__(self, path):
        self.path = path

    def __enter__(self):
        self._fh = open(self.path, "w") if self.path else sys.stdout
        return self._fh

    def __exit__(self, *exc):
        if self.path:
            self._fh.close()
        return False


def _emit_summary(cfg: ExperimentConfig, payload: dict):
    # summary goes to stdout only when the CSV went to a file
    if cfg.out:
        print(json.dumps(payload, sort_keys=True))


def _cmd_solve(cfg: ExperimentConfig) -> int:
    lat = cfg.lattice()
    f = make_driver(cfg.driver)
    phi = make_terminal(cfg.terminal)
    tol = 1e-12 if cfg.tol is None else float(cfg.tol)
    sol = solve_backward(lat, f, phi, tol=tol, max_iter=int(cfg.max_iter))
    with _OutSink(cfg.out) as fh:
        export_solution_csv(sol, fh)
    _emit_summary(cfg, solution_summary(sol))
    return 0


def _cmd_duality(cfg: ExperimentConfig) -> int:
    lat = cfg.lattice()
    f = make_driver(cfg.driver)
    phi = make_terminal(cfg.terminal)
    tol = 1e-12 if cfg.tol is None else float(cfg.tol)
    sol = solve_backward(lat, f, phi, tol=tol, max_iter=int(cfg.max_iter))
    control = optimal_control(sol, f)
    candidate = dual_value(lat, f, phi, control, tol=tol, max_iter=int(cfg.max_iter))
    report = duality_gap(sol, candidate, control)
    rng = cfg.rng()
    sampled_min = None
    for _ in range(int(cfg.samples)):
        probe = random_admissible_control(lat, rng)
        probe_rep = duality_gap(sol, dual_value(lat, f, phi, probe), probe)
        gap = probe_rep.min_gap
        sampled_min = gap if sampled_min is None else min(sampled_min, gap)
    with _OutSink(cfg.out) as fh:
        export_duality_csv(sol, candidate, control, fh)
    payload = duality_summary(report)
    payload["sampled_min_gap"] = sampled_min
    payload["samples"] = int(cfg.samples)
    _emit_summary(cfg, payload)
    ok = report.weakly_consistent and (sampled_min is None or sampled_min >= -1e-9)
    return 0 if ok else 1


def _cmd_picard(cfg: ExperimentConfig) -> int:
    lat = cfg.lattice()
    f = make_driver(cfg.driver)
    phi = make_terminal(cfg.terminal)
    tol = 1e-10 if cfg.tol is None else float(cfg.tol)
    result = picard_solve(lat, f, phi, tol=tol, max_p=int(cfg.max_iter))
    with _OutSink(cfg.out) as fh:
        export_picard_trace_csv(result, fh)
    _emit_summary(
        cfg,
        {
            "iterations": result.iterations,
            "residual": result.final_residual,
            "y0": result.solution.y0,
        },
    )
    return 0


def _cmd_converge(cfg: ExperimentConfig) -> int:
    if cfg.reference is None:
        raise GridError("converge needs --reference (or a reference config entry)")
    study = refinement_experiment(
        make_driver(cfg.driver),
        make_terminal(cfg.terminal),
        cfg.steps_list,
        reference=float(cfg.reference),
        dim=int(cfg.dim),
        horizon=float(cfg.horizon),
        mode=cfg.mode,
        leaf_budget=cfg.leaf_budget,
    )
    with _OutSink(cfg.out) as fh:
        export_refinement_csv(study, fh)
    _emit_summary(
        cfg,
        {
            "fitted_order": study.fitted_order,
            "errors_decreasing": study.errors_decreasing,
            "final_error": study.rows[-1][2],
        },
    )
    return 0 if study.errors_decreasing else 1


def _cmd_approx(cfg: ExperimentConfig) -> int:
    lat = cfg.lattice()
    ladder = monotone_limit_experiment(
        lat, make_driver(cfg.driver), make_terminal(cfg.terminal), levels=cfg.levels
    )
    with _OutSink(cfg.out) as fh:
        export_ladder_csv(ladder, fh)
    _emit_summary(
        cfg,
        {
            "monotone": ladder.monotone,
            "increments_decreasing": ladder.increments_decreasing,
            "cauchy_uniform": ladder.cauchy_uniform,
            "levels": len(ladder.rows),
        },
    )
    return 0 if ladder.monotone and ladder.increments_decreasing else 1


def _cmd_verify(cfg: ExperimentConfig) -> int:
    lat = cfg.lattice()
    walk_report = verify_walk_conditions(lat)
    plan = SamplingPlan(dim=int(cfg.dim), horizon=float(cfg.horizon), seed=int(cfg.seed))
    driver_report = verify_driver_properties(make_driver(cfg.driver), plan)
    lines = []
    for check in walk_report.checks:
        state = "SKIP" if check.passed is None else ("PASS" if check.passed else "FAIL")
        lines.append("walk:%s %s" % (check.name, state))
    for check in driver_report.checks:
        state = "SKIP" if check.passed is None else ("PASS" if check.passed else "FAIL")
        lines.append("driver:%s %s" % (check.name, state))
    text = "\n".join(lines) + "\n"
    with _OutSink(cfg.out) as fh:
        fh.write(text)
    if cfg.out:
        sys.stdout.write(text)
    return 0 if walk_report.passed and driver_report.passed else 1


_COMMANDS = {
    "solve": _cmd_solve,
    "duality": _cmd_duality,
    "picard": _cmd_picard,
    "converge": _cmd_converge,
    "approx": _cmd_approx,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _check_workers_var()
        cfg = _merge(args)
        return _COMMANDS[args.command](cfg)
    except (ConvergenceError, AdmissibilityError, ValidationError, QuadratureError) as exc:
        print("property failure: %s" % exc, file=sys.stderr)
        return 1
    except (LatticeModelError, ValueError, OSError) as exc:
        print("input error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
