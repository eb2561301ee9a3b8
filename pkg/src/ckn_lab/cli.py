"""Command-line front end.

Every subcommand prints one JSON run report
``{command, config_hash, wall_time, payload, warnings}`` (keys sorted) and
exits 0 on success, 1 when a numerical module fails and 2 on usage or
parameter errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import CKNError, InvalidParams
from .params import PRESETS, ProblemParams, derive, preset, validate
from .phase import OrbitOptions, integrate_orbit, write_orbit_csv
from .profile import (envelope_ratio, fit_asymptotics, from_orbit, ode_residual,
                      write_profile_csv)
from .quadrature import best_constant, sobolev_constant
from .truncation import (DEFAULT_M_GRID, strict_inequality_witness, truncation_report,
                         write_truncation_csv)
from .variational import GridOptions, lambda1, minimize_best_constant, mountain_pass_bound

COMMANDS = ("constants", "solve", "best-constant", "truncation", "strict", "oracle",
            "eigen", "energy", "sweep")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    command: str
    params: ProblemParams
    options: dict[str, Any] = field(default_factory=dict)
    output: str | None = None
    fmt: str = "json"

    def canonical(self) -> dict:
        return {"command": self.command, "params": self.params.to_dict(),
                "options": self.options, "format": self.fmt}

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=_jsonable)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("parameters")
    g.add_argument("--preset", choices=sorted(PRESETS), help="named parameter set")
    g.add_argument("--params", metavar="FILE", help="JSON parameter file")
    g.add_argument("--N", type=int)
    g.add_argument("--p", type=float)
    g.add_argument("--a", type=float)
    g.add_argument("--b", type=float)
    g.add_argument("--mu", type=float)
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--c", type=float)
    g.add_argument("--oracle", action="store_true", default=None,
                   help="allow mu = 0 (closed-form cross-checks)")
    n = common.add_argument_group("numerics")
    n.add_argument("--rtol", type=float, default=1e-10)
    n.add_argument("--atol", type=float, default=1e-20)
    n.add_argument("--conservation-tol", type=float, default=None)
    n.add_argument("--y-floor", type=float, default=1e-6, help="stop when y < y_max * this")
    n.add_argument("--t-max", type=float, default=200.0)
    n.add_argument("--no-project", action="store_true", help="disable the V = 0 projection")
    n.add_argument("--dt", type=float, default=0.005, help="t-step of the resampled profile")
    n.add_argument("--fit-window", type=float, default=0.15,
                   help="fraction of the t-range used by each asymptotic fit")
    n.add_argument("--m-grid", type=_int_list, default=list(DEFAULT_M_GRID))
    n.add_argument("--h", type=float, default=4.0)
    n.add_argument("--h-grid", type=_float_list, default=[3.0, 4.0, 6.0])
    n.add_argument("--m-max", type=int, default=64)
    n.add_argument("--nodes", type=int, default=4096)
    n.add_argument("--t-lo", type=float, default=None)
    n.add_argument("--t-hi", type=float, default=None)
    n.add_argument("--levels", type=_int_list, default=[512, 1024, 2048],
                   help="node counts of the eigenvalue refinement table")
    n.add_argument("--mu-grid", type=_float_list, default=None, help="values swept by 'sweep'")
    o = common.add_argument_group("output")
    o.add_argument("--output", "-o", help="write the JSON report here instead of stdout")
    o.add_argument("--format", dest="fmt", choices=("json", "csv"), default="json")
    o.add_argument("--csv", dest="csv_path", help="also write the command's table as CSV")
    o.add_argument("--orbit-csv", help="solve: write the orbit samples")

    parser = _Parser(prog="ckn-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "constants": "closed-form constants and decay exponents",
        "solve": "integrate the orbit, fit asymptotics, check the envelope",
        "best-constant": "best constant by the quotient and power routes",
        "truncation": "order estimates of the cut-off family",
        "strict": "search for a test function below the best constant",
        "oracle": "grid minimisation cross-check of the best constant",
        "eigen": "first eigenvalue on the unit ball",
        "energy": "mountain-pass level bound",
        "sweep": "best constant over a grid of mu values",
    }
    for cmd in COMMANDS:
        sub.add_parser(cmd, parents=[common], help=helps[cmd])
    return parser


def _params_from_args(ns: argparse.Namespace) -> ProblemParams:
    raw: dict[str, Any] = {}
    if ns.params:
        try:
            with open(ns.params, encoding="utf-8") as fh:
                raw.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"--params: {exc}")
    elif ns.preset:
        raw.update(preset(ns.preset).to_dict())
    for key, attr in (("N", "N"), ("p", "p"), ("a", "a"), ("b", "b"), ("mu", "mu"),
                      ("lambda", "lam"), ("c", "c"), ("oracle", "oracle")):
        val = getattr(ns, attr)
        if val is not None:
            raw[key] = val
    if not raw:
        raise UsageError("give --preset, --params or the parameter flags")
    return validate(raw)


def parse_config(argv: Sequence[str]) -> RunConfig:
    """Parse and validate; raises UsageError or InvalidParams."""
    ns = build_parser().parse_args(list(argv))
    params = _params_from_args(ns)
    opts = {k: v for k, v in vars(ns).items()
            if k not in {"command", "preset", "params", "N", "p", "a", "b", "mu", "lam", "c",
                         "oracle", "output", "fmt"}}
    if not 0.0 < opts["fit_window"] < 0.5:
        raise UsageError("--fit-window must lie in (0, 0.5)")
    if ns.command == "strict" and (params.lam is None or params.c is None):
        raise UsageError("strict needs --lambda and --c")
    if ns.command in ("truncation", "eigen", "energy") and params.c is None:
        raise UsageError(f"{ns.command} needs --c")
    if ns.command == "sweep" and not opts["mu_grid"]:
        raise UsageError("sweep needs --mu-grid")
    return RunConfig(command=ns.command, params=params, options=opts, output=ns.output,
                     fmt=ns.fmt)


def _orbit_opts(o: dict) -> OrbitOptions:
    return OrbitOptions(rtol=o["rtol"], atol=o["atol"], y_floor_factor=o["y_floor"],
                        t_max=o["t_max"], project=not o["no_project"],
                        conservation_tol=o["conservation_tol"])


def _best(cfg: RunConfig):
    dc = derive(cfg.params)
    return dc, best_constant(dc, _orbit_opts(cfg.options), dt=cfg.options["dt"])


def _cmd_constants(cfg, warnings):
    return derive(cfg.params).to_dict(), None


def _cmd_solve(cfg, warnings):
    o = cfg.options
    dc = derive(cfg.params)
    orbit = integrate_orbit(dc, _orbit_opts(o))
    prof = from_orbit(orbit, dt=o["dt"])
    fit = fit_asymptotics(prof, frac=o["fit_window"])
    lo, hi = envelope_ratio(prof)
    H = orbit.H
    payload = {
        "constants": dc.to_dict(),
        "orbit": {"t_span": list(orbit.t_span), "steps": len(orbit),
                  "max_v_drift": orbit.max_V_drift, "rejected": orbit.n_rejected,
                  "projected": orbit.n_projected, "h_start": float(H[0]),
                  "h_end": float(H[-1])},
        "fit": fit.to_dict(),
        "envelope": {"ratio_min": lo, "ratio_max": hi, "spread": hi / lo},
        "ode_residual": ode_residual(prof),
    }
    for name, got, want in (("slope0", fit.slope0, -dc.l1), ("slope_inf", fit.slope_inf, -dc.l2)):
        if want and abs(got / want - 1.0) > 0.01:
            warnings.append(f"{name} = {got:.6g} deviates from {want:.6g} by more than 1%")
    if o.get("orbit_csv"):
        write_orbit_csv(orbit, o["orbit_csv"])
    return payload, lambda dest: write_profile_csv(prof, dest)


def _cmd_best_constant(cfg, warnings):
    dc, bc = _best(cfg)
    payload = bc.to_dict()
    if dc.params.p == 2.0 and dc.params.a == 0.0 and dc.params.b == 0.0 and dc.params.mu == 0.0:
        payload["sobolev_closed_form"] = sobolev_constant(dc.params.N)
    return payload, None


def _cmd_truncation(cfg, warnings):
    o = cfg.options
    dc, bc = _best(cfg)
    lam = cfg.params.lam or 0.0
    rep = truncation_report(dc, bc.S, o["m_grid"], o["h"], lam, cfg.params.c, bc.profile)
    for k, v in rep.slope_errors().items():
        if v > 0.05:
            warnings.append(f"{k} differs from its prediction by {100 * v:.1f}%")
    return rep.to_dict(), lambda dest: write_truncation_csv(rep, dest)


def _cmd_strict(cfg, warnings):
    o = cfg.options
    dc, bc = _best(cfg)
    w = strict_inequality_witness(dc, bc.S, cfg.params.lam, cfg.params.c, o["h_grid"],
                                  o["m_max"], bc.profile, s0_error=bc.s_error)
    payload = w.to_dict()
    payload["s0_error"] = bc.s_error
    return payload, None


def _cmd_oracle(cfg, warnings):
    o = cfg.options
    dc, bc = _best(cfg)
    gopts = GridOptions(nodes=o["nodes"],
                        t_lo=o["t_lo"] if o["t_lo"] is not None else -18.0,
                        t_hi=o["t_hi"] if o["t_hi"] is not None else 6.0)
    res = minimize_best_constant(dc, gopts)
    payload = res.to_dict()
    payload["s_ode"] = bc.S
    payload["rel_diff_ode"] = abs(res.S_est - bc.S) / bc.S
    pr = dc.params
    if pr.p == 2.0 and pr.a == 0.0 and pr.b == 0.0 and pr.mu == 0.0:
        s_cf = sobolev_constant(pr.N)
        payload["sobolev_closed_form"] = s_cf
        payload["rel_diff_closed_form"] = abs(res.S_est - s_cf) / s_cf
    return payload, None


def _eigen_opts(o):
    return GridOptions(t_lo=o["t_lo"] if o["t_lo"] is not None else -18.0,
                       t_hi=o["t_hi"] if o["t_hi"] is not None else 0.0)


def _cmd_eigen(cfg, warnings):
    o = cfg.options
    dc = derive(cfg.params)
    est = lambda1(dc, cfg.params.c, _eigen_opts(o), levels=o["levels"])
    if est.refinement_change > 0.01:
        warnings.append("lambda1 changed by more than 1% at the last refinement")
    return est.to_dict(), None


def _cmd_energy(cfg, warnings):
    o = cfg.options
    dc, bc = _best(cfg)
    lam = cfg.params.lam or 0.0
    est = lambda1(dc, cfg.params.c, _eigen_opts(o), levels=o["levels"])
    if lam >= est.lambda1:
        warnings.append(f"lambda = {lam:.6g} is not below lambda1 = {est.lambda1:.6g}")
    bound = mountain_pass_bound(dc, bc.S, lam, cfg.params.c, bc.profile, o["h_grid"],
                                o["m_max"], s0_error=bc.s_error)
    payload = bound.to_dict()
    payload["lambda1"] = est.lambda1
    return payload, None


def _sweep_one(args):
    params, opts = args
    cfg = RunConfig(command="best-constant", params=params, options=opts)
    try:
        dc, bc = _best(cfg)
        return {"mu": params.mu, "l1": dc.l1, "l2": dc.l2, "s_quotient": bc.s_quotient,
                "rel_gap": bc.rel_gap, "error": None}
    except CKNError as exc:
        return {"mu": params.mu, "error": exc.to_dict()}


def _cmd_sweep(cfg, warnings):
    o = cfg.options
    jobs = []
    for mu in o["mu_grid"]:
        raw = {**cfg.params.to_dict(), "mu": mu}
        jobs.append((validate(raw), o))
    workers = max(1, min(len(jobs), int(os.environ.get("CKN_THREADS", os.cpu_count() or 1))))
    if workers == 1:
        rows = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    for r in rows:
        if r["error"] is not None:
            warnings.append(f"mu = {r['mu']}: {r['error']['message']}")
    return {"rows": rows}, None


_DISPATCH = {
    "constants": _cmd_constants, "solve": _cmd_solve, "best-constant": _cmd_best_constant,
    "truncation": _cmd_truncation, "strict": _cmd_strict, "oracle": _cmd_oracle,
    "eigen": _cmd_eigen, "energy": _cmd_energy, "sweep": _cmd_sweep,
}


def _jsonable(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, default=_jsonable, indent=2, ensure_ascii=False)


def run(cfg: RunConfig, stdout=None) -> tuple[int, dict]:
    """Execute a parsed config; returns (exit code, report dict)."""
    stdout = stdout or sys.stdout
    warnings: list[str] = []
    t0 = time.perf_counter()
    report: dict[str, Any] = {"command": cfg.command, "config_hash": cfg.config_hash}
    code = EXIT_OK
    table = None
    try:
        payload, table = _DISPATCH[cfg.command](cfg, warnings)
        report["payload"] = payload
    except InvalidParams as exc:
        code = EXIT_USAGE
        report["error"] = exc.to_dict()
    except CKNError as exc:
        code = EXIT_FAILURE
        report["error"] = exc.to_dict()
    report["warnings"] = warnings
    report["wall_time"] = time.perf_counter() - t0
    report = json.loads(dumps(report))
    if code == EXIT_OK and cfg.options.get("csv_path") and table is not None:
        table(cfg.options["csv_path"])
    if cfg.fmt == "csv" and code == EXIT_OK:
        if table is None:
            code = EXIT_USAGE
            stdout.write(f"{cfg.command} has no tabular output; use --format json\n")
        else:
            table(stdout)
        return code, report
    text = dumps(report) + "\n"
    if cfg.output:
        Path(cfg.output).write_text(text, encoding="utf-8")
    else:
        stdout.write(text)
    return code, report


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except InvalidParams as exc:
        sys.stdout.write(dumps({"command": argv[0] if argv else None,
                                "error": exc.to_dict()}) + "\n")
        return EXIT_USAGE
    code, _ = run(cfg)
    return code


if __name__ == "__main__":
    sys.exit(main())
