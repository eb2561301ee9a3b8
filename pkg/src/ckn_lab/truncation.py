"""Compactly supported test functions cut from the dilated extremal.

For ``eps = m^-h`` the family is ``u(r) = U(r) - U(1/m)`` on ``r < 1/m`` and
zero outside, where ``U(r) = eps^-delta u0(r/eps)`` and ``u0`` is the ODE
profile (which already solves the limit equation, so no extra amplitude is
needed).  In the variable ``s = r/eps`` the support is ``s < R = m^(h-1)``;
the profile is sampled there and mapped back, so integrals are computed in
physical coordinates on a grid that ends exactly at the cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DivergentTail, InsufficientDecay, InvalidParams, NoWitness
from .params import DerivedConstants
from .phase import _write_csv
from .profile import RadialProfile, uniform_t_grid
from .quadrature import quotient_parts, weighted_integral

__all__ = [
    "DEFAULT_M_GRID",
    "TruncatedProfile",
    "TruncationRow",
    "TruncationReport",
    "Witness",
    "build_truncation",
    "truncation_report",
    "strict_inequality_witness",
    "h_threshold",
    "loglog_slope",
    "write_truncation_csv",
]

DEFAULT_M_GRID = (4, 8, 16, 32, 64)


@dataclass
class TruncatedProfile:
    m: int
    h: float
    epsilon: float
    cutoff_value: float
    s0: float
    profile: RadialProfile

    @property
    def c0(self) -> float:
        dc = self.profile.constants
        return self.s0 ** (1.0 / (dc.p_star - dc.params.p))

    @property
    def radius(self) -> float:
        return 1.0 / self.m


def _check_c(dc: DerivedConstants, c: float) -> None:
    gap = dc.decay_gap
    if not 0.0 < c < gap:
        raise DivergentTail(
            f"c = {c:.6g} outside (0, (a+1+l2)p - N = {gap:.6g}); the lambda term "
            "of the untruncated extremal diverges")


def build_truncation(dc: DerivedConstants, S0: float, m: int, h: float,
                     base: RadialProfile, dt: float | None = None) -> TruncatedProfile:
    """Sample the cut-off family member for (m, h).

    Parameters
    ----------
    base : RadialProfile
        Undilated ODE profile with an orbit interpolant (``from_orbit``).
    dt : float, optional
        t-step of the new grid; defaults to the base step.

    Raises
    ------
    InsufficientDecay
        The orbit does not reach the cutoff ``s = m^(h-1)``.
    """
    if int(m) != m or m < 2:
        raise InvalidParams("m", "an integer m >= 2 (so that B_1/m lies in the unit ball)")
    if not h > 1.0:
        raise InvalidParams("h", "h > 1")
    if base.interp is None or base.epsilon != 1.0:
        raise ValueError("base must be the undilated profile built from an orbit")
    m = int(m)
    dt = dt or base.dt
    eps = float(m) ** -h
    log_eps = -h * math.log(m)
    s_cut = (h - 1.0) * math.log(m)
    interp = base.interp
    if s_cut > interp.t_max:
        raise InsufficientDecay(
            f"cutoff log-radius {s_cut:.2f} beyond the orbit end {interp.t_max:.2f}; "
            "lower y_floor_factor")
    s = uniform_t_grid(interp.t_min, s_cut, dt, anchor=s_cut)
    u0, du0 = interp.u_du(s)
    k = float(interp.u_du(np.array([s_cut]))[0][0])
    vals = u0 - k
    vals[-1] = 0.0
    d = dc.delta
    prof = RadialProfile(
        t=s + log_eps,
        r=np.exp(s + log_eps),
        u=eps ** -d * vals,
        du_abs=eps ** (-d - 1.0) * du0,
        constants=dc,
        epsilon=eps,
        compact=True,
    )
    return TruncatedProfile(m=m, h=float(h), epsilon=eps, cutoff_value=eps ** -d * k,
                            s0=S0, profile=prof)


@dataclass(frozen=True)
class TruncationRow:
    m: int
    eps: float
    Q_mu: float
    Q_lambda_mu: float
    norm_pstar: float
    norm_pstar_pow: float
    lambda_term: float
    ratio: float
    est_error: float
    q_deficit: float
    norm_deficit: float

    def to_dict(self) -> dict:
        return {
            "m": self.m, "eps": self.eps, "q_mu": self.Q_mu, "q_lambda_mu": self.Q_lambda_mu,
            "norm_pstar": self.norm_pstar, "norm_pstar_pow": self.norm_pstar_pow,
            "lambda_term": self.lambda_term, "ratio": self.ratio, "est_error": self.est_error,
            "q_deficit": self.q_deficit, "norm_deficit": self.norm_deficit,
        }


def loglog_slope(m: Sequence[float], vals: Sequence[float]) -> tuple[float, float, float]:
    """Fit ``|vals| ~ A m^-alpha``; return (alpha, A, max/min of the prefactors)."""
    lm = np.log(np.asarray(m, dtype=float))
    lv = np.log(np.abs(np.asarray(vals, dtype=float)))
    slope, icpt = np.polyfit(lm, lv, 1)
    alpha = -float(slope)
    pref = np.exp(lv + alpha * lm)
    return alpha, float(math.exp(icpt)), float(pref.max() / pref.min())


def _row(tp: TruncatedProfile, lam: float, c: float, target: float) -> TruncationRow:
    dc = tp.profile.constants
    p, ps = dc.params.p, dc.p_star
    q, norm, q_err, n_err, parts = quotient_parts(tp.profile, lam=0.0)
    lt = weighted_integral(tp.profile, "lambda_term", c=c)
    q_lam = q - lam * lt.value
    npow = norm ** (p / ps)
    ratio = q_lam / npow
    err = abs(ratio) * ((q_err + lam * lt.est_error) / abs(q_lam) + p / ps * n_err / norm)
    return TruncationRow(m=tp.m, eps=tp.epsilon, Q_mu=q, Q_lambda_mu=q_lam, norm_pstar=norm,
                         norm_pstar_pow=npow, lambda_term=lt.value, ratio=ratio,
                         est_error=err, q_deficit=q - target, norm_deficit=target - norm)


@dataclass
class TruncationReport:
    h: float
    lam: float
    c: float
    s0: float
    rows: list[TruncationRow]
    deficit_slope_Q: float
    deficit_slope_norm: float
    lambda_slope: float
    q_pred: float
    lam_pred: float
    norm_pred: float
    prefactor_spread: dict = field(default_factory=dict)

    @property
    def m_grid(self) -> list[int]:
        return [r.m for r in self.rows]

    def slope_errors(self) -> dict:
        """Relative deviation of each fitted slope from its prediction."""
        return {
            "deficit_slope_q": abs(self.deficit_slope_Q / self.q_pred - 1.0),
            "lambda_slope": abs(self.lambda_slope / self.lam_pred - 1.0),
            "deficit_slope_norm": abs(self.deficit_slope_norm / self.norm_pred - 1.0),
        }

    def to_dict(self) -> dict:
        return {
            "h": self.h, "lambda": self.lam, "c": self.c, "s0": self.s0,
            "rows": [r.to_dict() for r in self.rows],
            "fitted": {"deficit_slope_q": self.deficit_slope_Q,
                       "deficit_slope_norm": self.deficit_slope_norm,
                       "lambda_slope": self.lambda_slope},
            "predictions": {"q_pred": self.q_pred, "lam_pred": self.lam_pred,
                            "norm_pred": self.norm_pred},
            "prefactor_spread": self.prefactor_spread,
        }


def truncation_report(dc: DerivedConstants, S0: float, m_grid: Sequence[int], h: float,
                      lam: float, c: float, base: RadialProfile) -> TruncationReport:
    """Tabulate the family over ``m_grid`` and fit the decay orders.

    Deficits are measured against the exact limit ``S0^(N/((a+1-b)p))``:
    ``Q_mu(u) - S0^e`` and ``S0^e - ||u||^p*``.  Slopes are positive numbers
    ``alpha`` in ``|deficit| ~ m^-alpha``.
    """
    if lam < 0.0:
        raise InvalidParams("lambda", "lambda >= 0")
    _check_c(dc, c)
    if len(m_grid) < 2:
        raise ValueError("need at least two m values to fit a slope")
    pr = dc.params
    target = S0 ** dc.energy_exponent
    rows = [_row(build_truncation(dc, S0, m, h, base), lam, c, target) for m in m_grid]
    ms = [r.m for r in rows]
    sq, _, spq = loglog_slope(ms, [r.q_deficit for r in rows])
    sn, _, spn = loglog_slope(ms, [r.norm_deficit for r in rows])
    sl, _, spl = loglog_slope(ms, [r.lambda_term for r in rows])
    gap = dc.decay_gap
    return TruncationReport(
        h=float(h), lam=float(lam), c=float(c), s0=S0, rows=rows,
        deficit_slope_Q=sq, deficit_slope_norm=sn, lambda_slope=sl,
        q_pred=(h - 1.0) * gap, lam_pred=c * h,
        norm_pred=(h - 1.0) * ((pr.b + dc.l2) * dc.p_star - pr.N),
        prefactor_spread={"q": spq, "norm": spn, "lambda": spl},
    )


def h_threshold(dc: DerivedConstants, c: float) -> float:
    """Smallest h with ``c < (h-1) gap / h``, i.e. ``gap / (gap - c)``."""
    gap = dc.decay_gap
    return gap / (gap - c)


@dataclass
class Witness:
    m: int
    h: float
    ratio: float
    margin: float
    error: float
    s0: float
    lam: float
    c: float
    profile: TruncatedProfile | None = field(default=None, repr=False)
    tried: list[dict] = field(default_factory=list)

    @property
    def strict(self) -> bool:
        return self.margin > 3.0 * self.error

    def to_dict(self) -> dict:
        return {"m": self.m, "h": self.h, "ratio": self.ratio, "margin": self.margin,
                "error": self.error, "s0": self.s0, "lambda": self.lam, "c": self.c,
                "strict": self.strict, "tried": self.tried}


def _m_candidates(m_max: int) -> list[int]:
    out, m = [], 2
    while m <= m_max:
        out.append(m)
        m *= 2
    return out


def strict_inequality_witness(dc: DerivedConstants, S0: float, lam: float, c: float,
                              h_grid: Sequence[float], m_max: int, base: RadialProfile,
                              s0_error: float = 0.0) -> Witness:
    """Search (h, m) for a test function whose quotient beats S0.

    ``h`` values violating ``c < (h-1)[(a+1+l2)p-N]/h`` are skipped; for each
    admissible ``h`` the radii ``m = 2, 4, 8, ... <= m_max`` are tried in
    order.  A hit needs ``S0 - ratio > 3 (quadrature error + s0_error)``.

    Raises
    ------
    NoWitness
        ``lam <= 0`` or nothing qualifies.
    """
    if not lam > 0.0:
        raise NoWitness("lambda must be positive for the quotient to fall below S0")
    _check_c(dc, c)
    h_min = h_threshold(dc, c)
    target = S0 ** dc.energy_exponent
    tried: list[dict] = []
    for h in h_grid:
        if not h > h_min:
            tried.append({"h": float(h), "admissible": False})
            continue
        for m in _m_candidates(m_max):
            try:
                tp = build_truncation(dc, S0, m, h, base)
            except InsufficientDecay:
                tried.append({"h": float(h), "m": m, "admissible": True, "covered": False})
                break
            row = _row(tp, lam, c, target)
            err = row.est_error + s0_error
            margin = S0 - row.ratio
            tried.append({"h": float(h), "m": m, "admissible": True, "ratio": row.ratio,
                          "margin": margin, "error": err})
            if margin > 3.0 * err:
                return Witness(m=m, h=float(h), ratio=row.ratio, margin=margin, error=err,
                               s0=S0, lam=lam, c=c, profile=tp, tried=tried)
    raise NoWitness(f"no (h, m) with m <= {m_max} gives a quotient below S0 by 3x its error")


def write_truncation_csv(report: TruncationReport, dest: str | Path) -> None:
    rows = ((r.m, r.eps, r.Q_mu, r.lambda_term, r.norm_pstar_pow, r.ratio) for r in report.rows)
    _write_csv(dest, ("m", "eps", "Q_mu", "lambda_term", "norm_pstar_pow", "ratio"), rows)
