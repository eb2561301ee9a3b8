"""Best constant, decay exponents and first eigenvalue across mu.

    python3 scripts/mu_sweep.py --preset R1 --n 12 --c 0.15 --csv sweep.csv
"""

import argparse
import csv
import sys

import numpy as np

from ckn_lab.params import derive, preset
from ckn_lab.quadrature import best_constant
from ckn_lab.variational import lambda1


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="R1")
    ap.add_argument("--n", type=int, default=12)
    ap.add_argument("--lo", type=float, default=0.02, help="smallest mu as a fraction of mu_bar")
    ap.add_argument("--hi", type=float, default=0.96, help="largest mu as a fraction of mu_bar")
    ap.add_argument("--c", type=float, default=None, help="also estimate lambda1 with this shift")
    ap.add_argument("--csv", default=None)
    args = ap.parse_args()

    base = preset(args.preset)
    mu_bar = derive(base).mu_bar
    out = open(args.csv, "w", newline="") if args.csv else sys.stdout
    w = csv.writer(out)
    w.writerow(["mu", "l1", "l2", "decay_gap", "s", "rel_gap", "lambda1"])
    for frac in np.linspace(args.lo, args.hi, args.n):
        dc = derive(base.with_(mu=float(frac * mu_bar)))
        bc = best_constant(dc)
        lam = ""
        if args.c is not None and args.c < dc.decay_gap:
            lam = lambda1(dc, args.c, levels=(512, 1024)).lambda1
        w.writerow([dc.params.mu, dc.l1, dc.l2, dc.decay_gap, bc.S, bc.rel_gap, lam])
    if out is not sys.stdout:
        out.close()


if __name__ == "__main__":
    main()
