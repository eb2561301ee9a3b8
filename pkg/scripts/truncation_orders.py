"""Local decay orders of the cut-off family as m grows.

The log-log slopes over a short m window drift towards the asymptotic
orders only once ``m^(h-1)`` is deep in the algebraic tail of the extremal,
so this script integrates a deeper orbit and reports slopes between
consecutive m values well beyond the default grid.

    python3 scripts/truncation_orders.py --h 4 --c 0.5 --m-max 4096
"""

import argparse

import numpy as np

from ckn_lab.params import derive, preset
from ckn_lab.phase import OrbitOptions, integrate_orbit
from ckn_lab.profile import from_orbit
from ckn_lab.quadrature import best_constant, weighted_integral
from ckn_lab.truncation import build_truncation


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="R1")
    ap.add_argument("--h", type=float, default=4.0)
    ap.add_argument("--c", type=float, default=0.5)
    ap.add_argument("--m-max", type=int, default=4096)
    ap.add_argument("--y-floor", type=float, default=1e-12)
    args = ap.parse_args()

    dc = derive(preset(args.preset))
    pr = dc.params
    base = from_orbit(integrate_orbit(dc, OrbitOptions(y_floor_factor=args.y_floor)))
    S0 = best_constant(dc, profile=base).S
    target = S0 ** dc.energy_exponent

    ms = [4]
    while ms[-1] * 2 <= args.m_max:
        ms.append(ms[-1] * 2)
    rows = []
    for m in ms:
        prof = build_truncation(dc, S0, m, args.h, base).profile
        g = weighted_integral(prof, "grad_p").value
        hd = weighted_integral(prof, "hardy_p").value
        nm = weighted_integral(prof, "norm_pstar").value
        lt = weighted_integral(prof, "lambda_term", c=args.c).value
        rows.append((m, g - pr.mu * hd - target, target - nm, lt))

    pred_q = (args.h - 1) * dc.decay_gap
    pred_n_tail = (args.h - 1) * ((pr.b + dc.l2) * dc.p_star - pr.N)
    # the constant shift leaves a cross term of size u*(1/m) * int u*^(p*-1), of order m^-(h-1)l2
    pred_n_cross = (args.h - 1) * dc.l2
    print(f"predicted: Q {pred_q:.4f}  lambda {args.c * args.h:.4f}  "
          f"norm (tail) {pred_n_tail:.4f}  norm (cross term) {pred_n_cross:.4f}")
    print(f"{'m':>6s} {'q_deficit':>14s} {'norm_deficit':>14s} {'lambda_term':>14s} "
          f"{'slope_q':>8s} {'slope_n':>8s} {'slope_l':>8s}")
    for (m0, q0, n0, l0), (m1, q1, n1, l1) in zip(rows, rows[1:]):
        k = np.log(m1 / m0)
        sq = -np.log(abs(q1 / q0)) / k
        sn = -np.log(abs(n1 / n0)) / k
        sl = -np.log(l1 / l0) / k
        print(f"{m1:>6d} {q1:>14.6e} {n1:>14.6e} {l1:>14.6e} {sq:>8.4f} {sn:>8.4f} {sl:>8.4f}")


if __name__ == "__main__":
    main()
