"""Command-line front end.

Commands::

    iccopf parse CASE
    iccopf iccopf --scenario S --direction D [--eps-s --eps-d --max-iter --trace PATH --verify]
    iccopf sensitivity --scenario S --direction D --beta B [--fd-step 1e-3]
    iccopf sweep --scenario S --spec W [--workers N --output PATH]
    iccopf curve --scenario S --direction D --beta-min A --beta-max B --points N [--output PATH]

``S``, ``D`` and ``W`` are JSON files; names of bundled documents (for
example ``case14_scenario``) are accepted in place of a path. Summaries go to
standard output as JSON, tables as CSV with a one-line header.

Exit codes: 0 success, 1 solver breakdown, 2 unreadable or malformed input,
3 iteration cap, 4 bisection fallback after an anomaly, 5 validation or
domain error, 6 sensitivity mismatch.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, data
from .dcgrid import ScenarioError, StructuralError, build_compact, load_scenario
from .gaussmath import DomainError
from .inverse import (
    AnomalyError,
    InverseSettings,
    Termination,
    solve_inverse,
    verify_boundary,
)
from .mpcase import CaseSemanticError, CaseSyntaxError, load_case, serialize, validate
from .surrogate import SecurityProfile, SolverError, fd_sensitivity, solve_surrogate

log = logging.getLogger("iccopf")

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_PARSE = 2
EXIT_CAP = 3
EXIT_FALLBACK = 4
EXIT_INVALID = 5
EXIT_MISMATCH = 6

SENSITIVITY_RTOL = 0.05
SENSITIVITY_MIN_SNORM = 1e-4
DIGITS = 12


class InputError(Exception):
    """Malformed or unreadable input document (exit 2)."""


class ValidationError(Exception):
    """Well-formed input with invalid content (exit 5)."""


# ---------------------------------------------------------------- inputs

def _resolve(ref, suffix=".json"):
    path = Path(ref)
    if path.exists():
        return path
    for name in (str(ref), f"{ref}{suffix}"):
        candidate = data.bundled(name)
        if candidate.is_file():
            return candidate
    raise InputError(f"no such file: {ref}")


def _read_json(ref):
    path = _resolve(ref)
    try:
        return path, json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from exc


def _load_model(ref):
    path = _resolve(ref)
    try:
        case, scenario = load_scenario(path)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    except TypeError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from exc
    model = build_compact(case, scenario)
    return path, case, scenario, model


def _row(model, key):
    try:
        return model.row_index(key)
    except KeyError as exc:
        raise ValidationError(exc.args[0]) from None


def _number(value, what):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{what} must be a number, got {value!r}")
    return float(value)


def load_direction(ref, model):
    """Read ``{"u": {row: weight}, "beta0": number | {"default": x, row: y}}``.

    Weights are rescaled to unit 2-norm; rows not listed get weight 0.
    """
    path, doc = _read_json(ref)
    if not isinstance(doc, dict) or "u" not in doc or not isinstance(doc["u"], dict):
        raise InputError(f"{path}: direction must be an object with a 'u' mapping")
    unknown = set(doc) - {"u", "beta0"}
    if unknown:
        raise ValidationError(f"{path}: unknown direction keys {sorted(unknown)}")
    K = len(model.chance_rows)
    u = np.zeros(K)
    for key, val in doc["u"].items():
        u[_row(model, key)] = _number(val, f"u[{key}]")
    norm = float(np.linalg.norm(u))
    if not norm > 0:
        raise ValidationError(f"{path}: direction has no nonzero component")
    if abs(norm - 1.0) > 1e-12:
        log.info("rescaling direction from norm %.12g to 1", norm)
        u = u / norm
    b0 = doc.get("beta0", 0.95)
    if isinstance(b0, dict):
        offsets = np.full(K, _number(b0.get("default", 0.95), "beta0.default"))
        for key, val in b0.items():
            if key != "default":
                offsets[_row(model, key)] = _number(val, f"beta0[{key}]")
    else:
        offsets = np.full(K, _number(b0, "beta0"))
    return path, doc, SecurityProfile(u, offsets)


@dataclass(frozen=True)
class SweepSpec:
    pair: tuple[str, str]
    tau_grid: tuple[float, ...]
    beta0_list: tuple[float, ...]

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise InputError("sweep spec must be an object")
        unknown = set(doc) - {"pair", "tau_grid", "beta0_list"}
        if unknown:
            raise ValidationError(f"unknown sweep keys {sorted(unknown)}")
        pair = doc.get("pair")
        if not (isinstance(pair, list) and len(pair) == 2 and all(isinstance(k, str) for k in pair)) or pair[0] == pair[1]:
            raise ValidationError("pair must list two distinct chance-row keys")
        taus = tuple(_number(t, "tau") for t in doc.get("tau_grid") or [])
        b0s = tuple(_number(b, "beta0") for b in doc.get("beta0_list") or [])
        if not taus or not b0s:
            raise ValidationError("tau_grid and beta0_list must be non-empty")
        if any(not t > 0 for t in taus):
            raise ValidationError("tau values must be positive")
        return cls((pair[0], pair[1]), taus, b0s)

    def direction(self, K, k1, k2, tau):
        u = np.zeros(K)
        u[k1] = 1.0 / math.sqrt(1.0 + tau * tau)
        u[k2] = tau / math.sqrt(1.0 + tau * tau)
        return u


# ---------------------------------------------------------------- outputs

def _num(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return v if math.isfinite(v) else None


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.{DIGITS}g}"
    return str(v)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _emit(text, target):
    if target in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(target).write_text(text)


def _print_json(obj):
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def digest(*parts):
    h = hashlib.sha256()
    for part in parts:
        h.update(json.dumps(part, sort_keys=True, separators=(",", ":")).encode())
        h.update(b"\0")
    return h.hexdigest()


def run_manifest(command, case, scenario, extra, settings, started):
    inputs = {"case": serialize(case), "scenario": scenario.to_dict(), "extra": extra}
    return {
        "command": command,
        "digest": digest(command, inputs, settings),
        "settings": settings,
        "seed": scenario.sigma_seed,
        "version": __version__,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _write_manifest(args, target, manifest):
    path = args.manifest or (None if target in (None, "-") else f"{target}.manifest.json")
    if path:
        Path(path).write_text(json.dumps(manifest, indent=2) + "\n")


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _settings(args):
    return InverseSettings(eps_s=args.eps_s, eps_d=args.eps_d, max_iter=args.max_iter, beta_cap=args.beta_cap,
                           fd_check=getattr(args, "fd_check", False))


# ---------------------------------------------------------------- commands

def cmd_parse(args):
    path = Path(args.case)
    if not path.exists() and args.case in ("case14", "case39"):
        case = load_case(args.case)
    else:
        try:
            case = load_case(path)
        except OSError as exc:
            raise InputError(f"{path}: {exc.strerror or exc}") from exc
    validate(case)
    _print_json({
        "name": case.name,
        "buses": len(case.buses),
        "branches": len(case.branches),
        "generators": len(case.generators),
        "base_mva": case.base_mva,
        "reference_bus": case.reference_bus,
        "generator_stubs": [br.key for br in case.branches if br.is_generator_stub],
        "valid": True,
    })
    return EXIT_OK


def cmd_iccopf(args):
    started = _now()
    _, case, scenario, model = _load_model(args.scenario)
    _, ddoc, profile = load_direction(args.direction, model)
    settings = _settings(args)
    result = solve_inverse(model, profile, settings)
    trace = csv_text(["iter", "beta", "snorm", "d_beta", "eta", "accepted"],
                     [(r.t, r.beta, r.snorm, r.d_beta, r.eta, r.accepted) for r in result.trace])
    report = {
        "termination": result.termination.value,
        "beta_max": _num(result.beta_max),
        "iterations": result.iterations,
        "snorm": _num(result.snorm),
        "d_beta": _num(result.d_beta),
        "fallback": result.fallback,
        "beta_levels": {k: _num(b) for k, b, uk in zip(model.keys, result.beta_levels_at_max, profile.u) if uk > 0},
        "beta_levels_other": sorted({_num(b) for b, uk in zip(result.beta_levels_at_max, profile.u) if uk == 0}),
    }
    if result.anomaly:
        report["anomaly"] = result.anomaly
    if result.fd_check is not None:
        report["fd_check"] = {"beta": _num(result.fd_check.beta), "analytic": _num(result.fd_check.analytic),
                              "finite_difference": _num(result.fd_check.finite_difference),
                              "relative_error": _num(result.fd_check.relative_error)}
    if args.verify and result.termination is Termination.CONVERGED:
        check = verify_boundary(model, profile, result.beta_max, args.delta)
        report["boundary"] = {"delta": args.delta, "below_feasible": check.below_feasible,
                              "above_infeasible": check.above_infeasible}
    _emit(trace, args.trace)
    _write_manifest(args, args.trace, run_manifest("iccopf", case, scenario, {"direction": ddoc},
                                                   asdict(settings), started))
    _print_json(report)
    if result.fallback:
        return EXIT_FALLBACK
    if result.termination is Termination.ITERATION_CAP:
        return EXIT_CAP
    return EXIT_OK


def cmd_sensitivity(args):
    _, _, _, model = _load_model(args.scenario)
    _, _, profile = load_direction(args.direction, model)
    if not args.fd_step > 0:
        raise ValidationError("--fd-step must be positive")
    prof = profile.at(args.beta)
    sol = solve_surrogate(model, prof)
    fd = fd_sensitivity(model, prof, args.fd_step)
    report = {"beta": args.beta, "snorm": _num(sol.snorm), "analytic": _num(sol.d_beta),
              "finite_difference": _num(fd), "fd_step": args.fd_step}
    if sol.snorm <= SENSITIVITY_MIN_SNORM:
        report["relative_error"] = None
        report["note"] = "interior point" if sol.snorm == 0.0 else "within 1e-4 of the boundary; comparison skipped"
        _print_json(report)
        return EXIT_OK
    rel = abs(sol.d_beta - fd) / abs(fd) if fd != 0 else math.inf
    report["relative_error"] = _num(rel)
    report["within_tolerance"] = bool(rel <= SENSITIVITY_RTOL)
    _print_json(report)
    return EXIT_OK if rel <= SENSITIVITY_RTOL else EXIT_MISMATCH


def _sweep_point(model, k1, k2, u, tau, beta0, settings):
    profile = SecurityProfile(u, beta0)
    res = solve_inverse(model, profile, settings)
    return (tau, beta0, res.beta_max, beta0 + res.beta_max * u[k1], beta0 + res.beta_max * u[k2],
            res.iterations, res.termination.value, res.fallback)


def run_sweep(model, spec, settings, workers=1):
    """Boundary points for every (beta0, tau) pair, in grid order."""
    k1, k2 = _row(model, spec.pair[0]), _row(model, spec.pair[1])
    K = len(model.chance_rows)
    jobs = [(model, k1, k2, spec.direction(K, k1, k2, tau), tau, b0, settings)
            for b0 in spec.beta0_list for tau in spec.tau_grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_point, *zip(*jobs)))
    return [_sweep_point(*job) for job in jobs]


def cmd_sweep(args):
    started = _now()
    _, case, scenario, model = _load_model(args.scenario)
    _, sdoc = _read_json(args.spec)
    spec = SweepSpec.from_dict(sdoc)
    if args.workers < 1:
        raise ValidationError("--workers must be at least 1")
    settings = _settings(args)
    rows = run_sweep(model, spec, settings, args.workers)
    text = csv_text(["tau", "beta0", "beta_max", "beta_k1_max", "beta_k2_max", "iterations", "termination"],
                    [r[:7] for r in rows])
    _emit(text, args.output)
    _write_manifest(args, args.output, run_manifest("sweep", case, scenario, {"spec": sdoc}, asdict(settings), started))
    if any(r[7] for r in rows):
        return EXIT_FALLBACK
    if any(r[6] == Termination.ITERATION_CAP.value for r in rows):
        return EXIT_CAP
    return EXIT_OK


def curve_rows(model, profile, betas):
    out = []
    for b in betas:
        sol = solve_surrogate(model, profile.at(float(b)))
        out.append((float(b), sol.snorm, sol.d_beta))
    return out


def cmd_curve(args):
    started = _now()
    _, case, scenario, model = _load_model(args.scenario)
    _, ddoc, profile = load_direction(args.direction, model)
    if args.points < 1:
        raise ValidationError("--points must be at least 1")
    if args.beta_max < args.beta_min:
        raise ValidationError("--beta-max must not be below --beta-min")
    betas = np.linspace(args.beta_min, args.beta_max, args.points) if args.points > 1 else np.array([args.beta_min])
    for b in (betas[0], betas[-1]):
        profile.at(float(b))  # domain check before any solve
    text = csv_text(["beta", "snorm", "d_beta"], curve_rows(model, profile, betas))
    _emit(text, args.output)
    _write_manifest(args, args.output, run_manifest("curve", case, scenario, {"direction": ddoc},
                                                    {"beta_min": args.beta_min, "beta_max": args.beta_max,
                                                     "points": args.points}, started))
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def _inverse_flags(p):
    p.add_argument("--eps-s", type=float, default=1e-6, help="slack-norm tolerance")
    p.add_argument("--eps-d", type=float, default=1e-8, help="sensitivity tolerance")
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--beta-cap", type=float, default=1.0 - 1e-6, help="largest allowed security level")


def build_parser():
    parser = argparse.ArgumentParser(prog="iccopf", description="Inverse chance-constrained DC-OPF.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse and validate a MATPOWER case")
    p.add_argument("case")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("iccopf", help="largest feasible security level along a direction")
    p.add_argument("--scenario", required=True)
    p.add_argument("--direction", required=True)
    _inverse_flags(p)
    p.add_argument("--trace", default="trace.csv", help="trace CSV path ('-' for standard output)")
    p.add_argument("--verify", action="store_true", help="check CC-OPF feasibility at beta_max and beta_max + delta")
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--fd-check", action="store_true", help="compare D_beta with a finite difference outside the boundary")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_iccopf)

    p = sub.add_parser("sensitivity", help="analytic versus finite-difference D_beta")
    p.add_argument("--scenario", required=True)
    p.add_argument("--direction", required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--fd-step", type=float, default=1e-3)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("sweep", help="boundary points over a tau grid and several offsets")
    p.add_argument("--scenario", required=True)
    p.add_argument("--spec", required=True)
    _inverse_flags(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--output", default="-")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("curve", help="snorm and D_beta over a beta grid")
    p.add_argument("--scenario", required=True)
    p.add_argument("--direction", required=True)
    p.add_argument("--beta-min", type=float, required=True)
    p.add_argument("--beta-max", type=float, required=True)
    p.add_argument("--points", type=int, required=True)
    p.add_argument("--output", default="-")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_curve)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except (InputError, CaseSyntaxError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ValidationError, ScenarioError, StructuralError, CaseSemanticError, DomainError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SolverError, AnomalyError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    log.info("%s finished in %.2fs", args.command, time.perf_counter() - t0)
    return code
