"""Run the reference parameter sets end to end and print a summary table.

    python3 scripts/reference_runs.py [--out results/]
"""

import argparse
import json
from pathlib import Path

from ckn_lab.params import derive, preset
from ckn_lab.phase import integrate_orbit, write_orbit_csv
from ckn_lab.profile import envelope_ratio, fit_asymptotics, from_orbit, ode_residual, write_profile_csv
from ckn_lab.quadrature import best_constant, sobolev_constant


def run_one(name, out=None):
    dc = derive(preset(name))
    orbit = integrate_orbit(dc)
    prof = from_orbit(orbit)
    fit = fit_asymptotics(prof)
    lo, hi = envelope_ratio(prof)
    bc = best_constant(dc, profile=prof)
    row = {
        "name": name, "delta": dc.delta, "l1": dc.l1, "l2": dc.l2, "y_max": dc.y_max,
        "max_v_drift": orbit.max_V_drift, "slope0": fit.slope0, "slope_inf": fit.slope_inf,
        "envelope_spread": hi / lo, "ode_residual": ode_residual(prof),
        "s": bc.S, "rel_gap": bc.rel_gap,
    }
    if dc.params.oracle:
        row["s_closed_form"] = sobolev_constant(dc.params.N)
    if out is not None:
        write_orbit_csv(orbit, out / f"{name}_orbit.csv")
        write_profile_csv(prof, out / f"{name}_profile.csv")
    return row


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=None, help="directory for CSV dumps and summary.json")
    ap.add_argument("--sets", default="R0,R1,R2")
    args = ap.parse_args()
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
    rows = [run_one(n, args.out) for n in args.sets.split(",")]
    cols = ["name", "l1", "l2", "max_v_drift", "slope0", "slope_inf", "envelope_spread", "s", "rel_gap"]
    print("  ".join(f"{c:>14s}" for c in cols))
    for r in rows:
        print("  ".join(f"{r[c]:>14s}" if isinstance(r[c], str) else f"{r[c]:>14.8g}" for c in cols))
    if args.out is not None:
        (args.out / "summary.json").write_text(json.dumps(rows, indent=2))


if __name__ == "__main__":
    main()
