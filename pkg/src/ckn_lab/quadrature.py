"""Weighted radial integrals and the best constant.

All integrals are ``omega_N * int f(r) r^(N-1) dr`` rewritten in ``t = log r``
and evaluated by composite Simpson on the profile's uniform t-grid.  The
parts beyond the grid are added in closed form: near either end the
integrand behaves like ``exp(-kappa |t|)`` with a rate fixed by the decay
exponents ``l1``, ``l2``, so the tail equals the end value over ``kappa``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.special import gammaln

from .errors import DivergentTail, ZeroFunction
from .params import DerivedConstants
from .phase import OrbitOptions, integrate_orbit
from .profile import RadialProfile, from_orbit

__all__ = [
    "KINDS",
    "IntegralReport",
    "BestConstantReport",
    "omega_n",
    "sobolev_constant",
    "weighted_integral",
    "functionals",
    "rayleigh_quotient",
    "best_constant",
]

KINDS = ("grad_p", "hardy_p", "norm_pstar", "lambda_term")
OMEGA_CONVENTION = "surface_S^{N-1}"
REL_FLOOR = 1e-11


def omega_n(N: int) -> float:
    """Surface area of the unit sphere S^(N-1) in R^N."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


def sobolev_constant(N: int) -> float:
    """Sharp constant of the D^{1,2}(R^N) -> L^{2^*} embedding."""
    return math.pi * N * (N - 2.0) * math.exp(2.0 / N * (gammaln(N / 2.0) - gammaln(N)))


@dataclass(frozen=True)
class IntegralReport:
    value: float
    grid_part: float
    tail0: float
    tail_inf: float
    est_error: float

    def to_dict(self) -> dict:
        return {"value": self.value, "grid_part": self.grid_part, "tail0": self.tail0,
                "tail_inf": self.tail_inf, "est_error": self.est_error}


def _log_integrand(profile: RadialProfile, kind: str, c: float | None):
    """log of the integrand in t (the Jacobian r^N is included)."""
    dc = profile.constants
    pr = dc.params
    N, p, a, b = pr.N, pr.p, pr.a, pr.b
    ps = dc.p_star
    t = profile.t
    with np.errstate(divide="ignore"):
        if kind == "grad_p":
            return p * np.log(profile.du_abs) + (N - a * p) * t
        if kind == "hardy_p":
            return p * np.log(profile.u) + (N - (a + 1.0) * p) * t
        if kind == "norm_pstar":
            return ps * np.log(profile.u) + (N - b * ps) * t
        if kind == "lambda_term":
            return p * np.log(profile.u) + (N - (a + 1.0) * p + c) * t
    raise ValueError(f"unknown integrand kind {kind!r}; expected one of {KINDS}")


def tail_rates(dc: DerivedConstants, kind: str, c: float | None = None) -> tuple[float, float]:
    """Exponential rates (kappa0, kappa_inf) of the integrand as t -> -inf, +inf.

    A non-positive rate means the integral diverges at that end.
    """
    p, ps, d = dc.params.p, dc.p_star, dc.delta
    lo, hi = d - dc.l1, dc.l2 - d
    if kind in ("grad_p", "hardy_p"):
        return p * lo, p * hi
    if kind == "norm_pstar":
        return ps * lo, ps * hi
    if kind == "lambda_term":
        return p * lo + c, p * hi - c
    raise ValueError(f"unknown integrand kind {kind!r}; expected one of {KINDS}")


def weighted_integral(profile: RadialProfile, kind: str, tail: bool = True,
                      c: float | None = None, omega: float | None = None) -> IntegralReport:
    """Radial integral of one of the four integrands.

    Parameters
    ----------
    profile : RadialProfile
        Must be sampled on a uniform t-grid.
    kind : {"grad_p", "hardy_p", "norm_pstar", "lambda_term"}
        ``|u'|^p r^-ap``, ``u^p r^-(a+1)p``, ``u^p* r^-bp*`` or
        ``u^p r^(c-(a+1)p)``.
    tail : bool
        Add the closed-form contributions outside the sampled range.
    c : float, optional
        Weight shift, required for ``lambda_term``.
    omega : float, optional
        Angular factor; defaults to the area of S^(N-1).

    Returns
    -------
    IntegralReport
        ``est_error`` adds the Simpson/half-grid difference, a rounding floor
        and the magnitude of the tail corrections.

    Raises
    ------
    DivergentTail
        If the integrand is not integrable at one of the ends.
    """
    if kind == "lambda_term" and c is None:
        raise ValueError("lambda_term needs the weight shift c")
    dc = profile.constants
    omega = omega_n(dc.params.N) if omega is None else omega
    k0, kinf = tail_rates(dc, kind, c)
    if kinf <= 0.0 and not profile.compact:
        raise DivergentTail(f"{kind}: integrand grows like exp({-kinf:.4g} t) as r -> inf")
    if k0 <= 0.0:
        raise DivergentTail(f"{kind}: integrand grows like exp({k0:.4g} |t|) as r -> 0")

    f = np.exp(_log_integrand(profile, kind, c))
    if not profile.is_uniform():
        raise ValueError("weighted_integral needs a t-uniform profile")
    h = profile.dt
    grid = float(simpson(f, dx=h))
    # the half-grid comparison needs an even number of intervals over the same span
    fe = f if len(f) % 2 == 1 else f[1:]
    coarse_diff = (abs(float(simpson(fe, dx=h)) - float(simpson(fe[::2], dx=2.0 * h)))
                   if len(fe) >= 5 else 0.0)
    tail0 = tailinf = 0.0
    if tail:
        tail0 = float(f[0]) / k0
        if not profile.compact:
            tailinf = float(f[-1]) / kinf
    # samples carry ~1e-12 relative noise (powers of u, C1 joins of the resampling)
    roundoff = REL_FLOOR * float(np.sum(np.abs(f))) * h
    # Simpson is fourth order, so the half-grid difference overstates the error
    est = coarse_diff + roundoff + abs(tail0) + abs(tailinf)
    return IntegralReport(
        value=omega * (grid + tail0 + tailinf),
        grid_part=omega * grid,
        tail0=omega * tail0,
        tail_inf=omega * tailinf,
        est_error=omega * est,
    )


def functionals(profile: RadialProfile, c: float | None = None, tail: bool = True,
                omega: float | None = None) -> dict[str, IntegralReport]:
    kinds = KINDS if c is not None else KINDS[:3]
    return {k: weighted_integral(profile, k, tail=tail, c=c, omega=omega) for k in kinds}


def quotient_parts(profile: RadialProfile, lam: float = 0.0, c: float | None = None,
                   tail: bool = True, omega: float | None = None):
    """Return (Q_lam_mu, norm^p*, error of Q, error of norm^p*, parts)."""
    dc = profile.constants
    mu = dc.params.mu
    parts = functionals(profile, c=c if lam else None, tail=tail, omega=omega)
    q = parts["grad_p"].value - mu * parts["hardy_p"].value
    q_err = parts["grad_p"].est_error + mu * parts["hardy_p"].est_error
    if lam:
        q -= lam * parts["lambda_term"].value
        q_err += lam * parts["lambda_term"].est_error
    return q, parts["norm_pstar"].value, q_err, parts["norm_pstar"].est_error, parts


def rayleigh_quotient(profile: RadialProfile, lam: float = 0.0, c: float | None = None,
                      omega: float | None = None) -> float:
    """``Q_lam_mu(u) / ||u||^p`` with ``||u||`` the weighted L^p* norm."""
    if lam and c is None:
        raise ValueError("a nonzero lam needs the weight shift c")
    q, norm, *_ = quotient_parts(profile, lam=lam, c=c, omega=omega)
    if norm <= 0.0:
        raise ZeroFunction("profile has zero weighted L^p* norm")
    dc = profile.constants
    return q / norm ** (dc.params.p / dc.p_star)


@dataclass
class BestConstantReport:
    s_quotient: float
    s_power: float
    q_value: float
    norm_pstar: float
    rel_gap: float
    q_error: float
    norm_error: float
    constants: DerivedConstants
    profile: RadialProfile | None = None
    omega_n_convention: str = OMEGA_CONVENTION

    @property
    def S(self) -> float:
        return self.s_quotient

    @property
    def c0(self) -> float:
        """``S^(1/(p*-p))``: amplitude relating the ODE profile to a solution of the limit equation."""
        dc = self.constants
        return self.s_quotient ** (1.0 / (dc.p_star - dc.params.p))

    @property
    def s_error(self) -> float:
        """Rough absolute uncertainty on S: quadrature error plus route gap."""
        dc = self.constants
        rel = self.q_error / abs(self.q_value) + dc.params.p / dc.p_star * self.norm_error / self.norm_pstar
        return self.s_quotient * rel + abs(self.s_quotient - self.s_power)

    def to_dict(self) -> dict:
        return {
            "s_quotient": self.s_quotient, "s_power": self.s_power,
            "rel_gap": self.rel_gap, "q_value": self.q_value, "norm_pstar": self.norm_pstar,
            "q_error": self.q_error, "norm_error": self.norm_error, "c0": self.c0,
            "omega_n_convention": self.omega_n_convention,
        }


def best_constant(dc: DerivedConstants, orbit_opts: OrbitOptions | None = None,
                  dt: float = 0.005, omega: float | None = None,
                  profile: RadialProfile | None = None) -> BestConstantReport:
    """Compute ``S_0,mu`` from the extremal profile by two routes.

    The profile solves ``-div(...) - mu ... = u^(p*-1) ...`` so
    ``Q_mu(u) = ||u||^p*`` and the best constant is both the Rayleigh
    quotient and ``Q_mu(u)^((a+1-b)p/N)``.  Their relative gap measures the
    combined integration and quadrature error.
    """
    if profile is None:
        profile = from_orbit(integrate_orbit(dc, orbit_opts), dt=dt)
    q, norm, q_err, n_err, _ = quotient_parts(profile, omega=omega)
    pr = dc.params
    s_quot = q / norm ** (pr.p / dc.p_star)
    s_pow = q ** ((pr.a + 1.0 - pr.b) * pr.p / pr.N)
    return BestConstantReport(
        s_quotient=s_quot, s_power=s_pow, q_value=q, norm_pstar=norm,
        rel_gap=abs(s_quot - s_pow) / abs(s_quot), q_error=q_err, norm_error=n_err,
        constants=dc, profile=profile,
    )
