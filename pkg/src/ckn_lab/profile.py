"""Radial profiles u(r) reconstructed from phase-plane orbits.

A :class:`RadialProfile` holds samples on a grid that is uniform in
``t = log r``.  Profiles built from an orbit keep a Hermite interpolant of
the orbit so they can be evaluated off-grid (needed by the truncation
family), and dilations ``u -> eps^-delta u(./eps)`` reuse it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TextIO

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import InsufficientDecay
from .params import DerivedConstants
from .phase import Orbit, _field_arrays, _write_csv

__all__ = [
    "OrbitInterpolant",
    "RadialProfile",
    "AsymptoticFit",
    "from_orbit",
    "dilate",
    "fit_asymptotics",
    "envelope_ratio",
    "ode_residual",
    "aubin_talenti_profile",
    "uniform_t_grid",
    "write_profile_csv",
]

HALF_DECADE = 0.5 * math.log(10.0)


class OrbitInterpolant:
    """Cubic Hermite interpolation of (y, z) in t, using the exact vector field
    for the node derivatives."""

    def __init__(self, orbit: Orbit):
        dy, dz = orbit.derivatives()
        self.constants = orbit.constants
        self.t_min, self.t_max = orbit.t_span
        self._y = CubicHermiteSpline(orbit.t, orbit.y, dy, extrapolate=False)
        self._z = CubicHermiteSpline(orbit.t, orbit.z, dz, extrapolate=False)

    def yz(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t_min - 1e-12) or np.any(t > self.t_max + 1e-12):
            raise InsufficientDecay(
                f"requested t outside the integrated range [{self.t_min:.2f}, {self.t_max:.2f}]")
        t = np.clip(t, self.t_min, self.t_max)
        return self._y(t), self._z(t)

    def u_du(self, t):
        """u and |u'| at r = exp(t) in base (eps = 1) coordinates."""
        dc = self.constants
        p = dc.params.p
        y, z = self.yz(t)
        u = np.exp(-dc.delta * t) * y
        du = np.exp(-(1.0 + dc.delta) * t) * np.abs(z) ** (1.0 / (p - 1.0))
        return u, du


@dataclass
class RadialProfile:
    t: np.ndarray
    r: np.ndarray
    u: np.ndarray
    du_abs: np.ndarray
    constants: DerivedConstants
    epsilon: float = 1.0
    # identically zero for r > r[-1] (truncated test functions)
    compact: bool = False
    interp: OrbitInterpolant | None = field(default=None, repr=False)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def is_uniform(self, rtol: float = 1e-9) -> bool:
        d = np.diff(self.t)
        return bool(np.all(np.abs(d - d[0]) <= rtol * max(1.0, np.max(np.abs(self.t)))))

    def evaluate(self, r) -> tuple[np.ndarray, np.ndarray]:
        """(u, |u'|) at arbitrary radii inside the sampled range."""
        r = np.asarray(r, dtype=float)
        d = self.constants.delta
        eps = self.epsilon
        if self.interp is not None and not self.compact:
            u0, du0 = self.interp.u_du(np.log(r / eps))
            return eps ** -d * u0, eps ** (-d - 1.0) * du0
        lt = np.log(r)
        with np.errstate(divide="ignore"):
            lu = np.interp(lt, self.t, np.log(self.u))
            ld = np.interp(lt, self.t, np.log(self.du_abs))
        return np.exp(lu), np.exp(ld)

    def samples(self):
        return zip(self.r, self.u, self.du_abs)

    def __len__(self) -> int:
        return len(self.t)


@dataclass(frozen=True)
class AsymptoticFit:
    C1: float
    C2: float
    C1_std: float
    C2_std: float
    slope0: float
    slope_inf: float
    dslope0: float
    dslope_inf: float
    window0: tuple[float, float]
    window_inf: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "c1": self.C1, "c2": self.C2, "c1_std": self.C1_std, "c2_std": self.C2_std,
            "slope0": self.slope0, "slope_inf": self.slope_inf,
            "dslope0": self.dslope0, "dslope_inf": self.dslope_inf,
            "windows": {"t0": list(self.window0), "t_inf": list(self.window_inf)},
        }


def uniform_t_grid(t_lo: float, t_hi: float, dt: float, anchor: float | None = 0.0) -> np.ndarray:
    """Uniform grid inside [t_lo, t_hi].

    With an ``anchor`` the nodes are ``anchor + k dt``; otherwise the
    endpoints are hit exactly and the spacing is at most ``dt``.
    """
    if anchor is None:
        n = max(2, int(math.ceil((t_hi - t_lo) / dt)))
        return np.linspace(t_lo, t_hi, n + 1)
    k0 = math.ceil((t_lo - anchor) / dt - 1e-9)
    k1 = math.floor((t_hi - anchor) / dt + 1e-9)
    return anchor + dt * np.arange(k0, k1 + 1)


def from_orbit(orbit: Orbit, dt: float = 0.005) -> RadialProfile:
    """Invert the change of variables: ``r = e^t``, ``u = e^(-delta t) y``.

    The profile is resampled on a t-grid anchored at the peak (so
    ``u(1) = y(0) = y_max`` exactly).
    """
    interp = OrbitInterpolant(orbit)
    t = uniform_t_grid(*orbit.t_span, dt)
    u, du = interp.u_du(t)
    return RadialProfile(t=t, r=np.exp(t), u=u, du_abs=du, constants=orbit.constants,
                         epsilon=1.0, interp=interp)


def dilate(profile: RadialProfile, eps: float) -> RadialProfile:
    """Return ``r -> eps^(-delta) u(r / eps)`` on the grid scaled by eps."""
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    d = profile.constants.delta
    s = math.log(eps)
    return replace(
        profile,
        t=profile.t + s,
        r=profile.r * eps,
        u=profile.u * eps ** -d,
        du_abs=profile.du_abs * eps ** (-d - 1.0),
        epsilon=profile.epsilon * eps,
    )


def _fit_windows(profile: RadialProfile, frac: float = 0.15):
    t = profile.t
    centre = math.log(profile.epsilon)
    need = 4.0 * math.log(10.0)
    if centre - t[0] < need or t[-1] - centre < need:
        raise InsufficientDecay("profile must span at least 4 decades on each side of its peak")
    span = t[-1] - t[0]
    w0 = (t[0] + HALF_DECADE, t[0] + frac * span)
    winf = (t[-1] - frac * span, t[-1] - HALF_DECADE)
    if w0[1] <= w0[0] or winf[1] <= winf[0]:
        raise InsufficientDecay("fit windows are empty")
    return w0, winf


def fit_asymptotics(profile: RadialProfile, frac: float = 0.15) -> AsymptoticFit:
    """Fit power laws u ~ C r^-l and |u'| ~ C l r^-(l+1) at both ends.

    The slopes come from least squares of ``log u`` (and ``log|u'|``) against
    ``log r`` over the inner and outer windows; ``C1``, ``C2`` are window
    means of ``r^l1 u`` and ``r^l2 u``.
    """
    dc = profile.constants
    w0, winf = _fit_windows(profile, frac)
    t = profile.t
    m0 = (t >= w0[0]) & (t <= w0[1])
    minf = (t >= winf[0]) & (t <= winf[1])
    lu = np.log(profile.u)
    with np.errstate(divide="ignore"):
        ld = np.log(profile.du_abs)

    def slope(mask, vals):
        vals = vals[mask]
        ok = np.isfinite(vals)
        return float(np.polyfit(t[mask][ok], vals[ok], 1)[0])

    c1 = profile.r[m0] ** dc.l1 * profile.u[m0]
    c2 = profile.r[minf] ** dc.l2 * profile.u[minf]
    return AsymptoticFit(
        C1=float(np.mean(c1)), C2=float(np.mean(c2)),
        C1_std=float(np.std(c1)), C2_std=float(np.std(c2)),
        slope0=slope(m0, lu), slope_inf=slope(minf, lu),
        dslope0=slope(m0, ld), dslope_inf=slope(minf, ld),
        window0=(float(w0[0]), float(w0[1])), window_inf=(float(winf[0]), float(winf[1])),
    )


def envelope_ratio(profile: RadialProfile) -> tuple[float, float]:
    """Min and max over the samples of ``u / (s^(l1/delta) + s^(l2/delta))^(-delta)``.

    ``s = r / eps`` so that the envelope follows the profile under dilation;
    both bounds then scale by ``eps^-delta`` and their ratio is invariant.
    """
    dc = profile.constants
    d = dc.delta
    ls = profile.t - math.log(profile.epsilon)
    log_env = d * np.logaddexp(dc.l1 / d * ls, dc.l2 / d * ls)
    with np.errstate(divide="ignore"):
        ratio = np.exp(np.log(profile.u) + log_env)
    if profile.compact:
        ratio = ratio[profile.u > 0]
    return float(np.min(ratio)), float(np.max(ratio))


def _d_dt(f: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order centred difference on the interior (two nodes lost per end)."""
    return (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * h)


def ode_residual(profile: RadialProfile, dc: DerivedConstants | None = None) -> float:
    """Largest pointwise relative residual of the radial equation.

    The flux ``F = r^(N-1-ap) |u'|^(p-2) u'`` is differentiated in t and the
    residual ``F_t + r^N (mu u^(p-1) r^-(a+1)p + u^(p*-1) r^(-b p*))`` is
    divided by ``|F_t| + |source| + |F|`` at each interior node.  The ``|F|``
    term is the natural scale per unit log-radius; without it the rounding
    noise in ``F_t`` dominates wherever the flux tends to a nonzero constant
    (the mu = 0 tail).
    """
    dc = dc or profile.constants
    if not profile.is_uniform():
        raise ValueError("ode_residual needs a t-uniform profile")
    pr = dc.params
    N, p, a, b, mu = pr.N, pr.p, pr.a, pr.b, pr.mu
    ps = dc.p_star
    u, du, r, t = profile.u, profile.du_abs, profile.r, profile.t
    if not np.any(u):
        return 0.0
    flux = -(r ** (N - 1.0 - a * p)) * du ** (p - 1.0)
    f_t = _d_dt(flux, profile.dt)
    ui, ri = u[2:-2], r[2:-2]
    src = ri ** N * (mu * ui ** (p - 1.0) * ri ** (-(a + 1.0) * p)
                     + ui ** (ps - 1.0) * ri ** (-b * ps))
    den = np.abs(f_t) + np.abs(src) + np.abs(flux[2:-2])
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(den > 0, np.abs(f_t + src) / den, 0.0)
    return float(np.max(rel))


def aubin_talenti_profile(dc: DerivedConstants, t_lo: float = -30.0, t_hi: float = 30.0,
                          dt: float = 0.005) -> RadialProfile:
    """Closed-form bubble ``(N(N-2))^((N-2)/4) (1+r^2)^(-(N-2)/2)``.

    It solves the limit equation when p = 2 and a = b = mu = 0 and has its
    y-peak at r = 1, matching the orbit normalisation.
    """
    pr = dc.params
    if not (pr.p == 2.0 and pr.a == 0.0 and pr.b == 0.0 and pr.mu == 0.0):
        raise ValueError("the bubble is a solution only for p = 2, a = b = mu = 0")
    N = pr.N
    t = uniform_t_grid(t_lo, t_hi, dt)
    r = np.exp(t)
    k = (N * (N - 2.0)) ** ((N - 2.0) / 4.0)
    u = k * (1.0 + r * r) ** (-(N - 2.0) / 2.0)
    du = k * (N - 2.0) * r * (1.0 + r * r) ** (-N / 2.0)
    return RadialProfile(t=t, r=r, u=u, du_abs=du, constants=dc)


def write_profile_csv(profile: RadialProfile, dest: str | Path | TextIO) -> None:
    rows = zip(profile.r, profile.u, profile.du_abs, profile.t)
    _write_csv(dest, ("r", "u", "du_abs", "t"), rows)
