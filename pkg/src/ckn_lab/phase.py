"""Emden-Fowler phase plane of the radial equation.

With ``t = log r``, ``y = r^delta u`` and ``z = r^((1+delta)(p-1)) |u'|^(p-2) u'``
the radial Euler-Lagrange equation becomes the autonomous system

    y' = delta y + |z|^((2-p)/(p-1)) z
    z' = -delta z - |y|^(p*-2) y - mu |y|^(p-2) y

whose first integral ``V`` vanishes on the extremal orbit.  The orbit is the
homoclinic loop through the origin; it is integrated outward from its peak
``y(0) = y_max`` in both time directions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, TextIO

import numpy as np

from .errors import ConservationDrift, DegenerateState, InsufficientDecay
from .params import DerivedConstants

__all__ = [
    "PhaseState",
    "Orbit",
    "OrbitOptions",
    "peak_state",
    "vector_field",
    "first_integral",
    "h_ratio",
    "integrate_orbit",
    "write_orbit_csv",
]


@dataclass(frozen=True)
class PhaseState:
    t: float
    y: float
    z: float


@dataclass(frozen=True)
class OrbitOptions:
    rtol: float = 1e-10
    atol: float = 1e-20
    y_floor_factor: float = 1e-6
    t_max: float = 200.0
    max_step: float = 0.02
    first_step: float = 1e-3
    # Keep the state on {V = 0} by correcting z after each accepted step.
    # Without it the tail leaves the stable manifold of the origin.
    project: bool = True
    conservation_tol: float | None = None

    @property
    def drift_limit(self) -> float:
        return self.conservation_tol if self.conservation_tol is not None else 100.0 * self.rtol


@dataclass
class Orbit:
    t: np.ndarray
    y: np.ndarray
    z: np.ndarray
    V: np.ndarray
    constants: DerivedConstants
    max_V_drift: float
    options: OrbitOptions = field(default_factory=OrbitOptions)
    n_rejected: int = 0
    n_projected: int = 0

    @property
    def t_span(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    @property
    def H(self) -> np.ndarray:
        p = self.constants.params.p
        return np.abs(self.z) ** (1.0 / (p - 1.0)) / self.y

    @property
    def peak_index(self) -> int:
        return int(np.searchsorted(self.t, 0.0))

    def derivatives(self) -> tuple[np.ndarray, np.ndarray]:
        return _field_arrays(self.y, self.z, self.constants)

    def states(self) -> Iterator[PhaseState]:
        for t, y, z in zip(self.t, self.y, self.z):
            yield PhaseState(float(t), float(y), float(z))

    def __len__(self) -> int:
        return len(self.t)


def peak_state(dc: DerivedConstants) -> PhaseState:
    """State at the maximum of y, placed at t = 0.

    ``dy/dt = 0`` forces ``|z|^(1/(p-1)) = delta y``; with ``y = y_max`` the
    point lies on ``V = 0``.
    """
    p = dc.params.p
    y = dc.y_max
    return PhaseState(0.0, y, -((dc.delta * y) ** (p - 1.0)))


def _signed_root(z: float, q: float) -> float:
    # |z|^(q-1) z with q = 1/(p-1); continuous at 0 because q > 0
    return math.copysign(abs(z) ** q, z)


def vector_field(s: PhaseState, dc: DerivedConstants) -> tuple[float, float]:
    pr = dc.params
    p, ps, mu, d = pr.p, dc.p_star, pr.mu, dc.delta
    y, z = s.y, s.z
    dy = d * y + _signed_root(z, 1.0 / (p - 1.0))
    dz = -d * z - _signed_root(y, ps - 1.0) - mu * _signed_root(y, p - 1.0)
    return dy, dz


def _field_arrays(y, z, dc: DerivedConstants):
    pr = dc.params
    p, ps, mu, d = pr.p, dc.p_star, pr.mu, dc.delta
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    dy = d * y + np.sign(z) * np.abs(z) ** (1.0 / (p - 1.0))
    dz = -d * z - np.sign(y) * np.abs(y) ** (ps - 1.0) - mu * np.sign(y) * np.abs(y) ** (p - 1.0)
    return dy, dz


def first_integral(y, z, dc: DerivedConstants):
    """V(y, z) = |y|^p*/p* + mu|y|^p/p + (p-1)/p |z|^(p/(p-1)) + delta y z.

    Works elementwise on arrays.
    """
    pr = dc.params
    p, ps = pr.p, dc.p_star
    ay = np.abs(y)
    return (ay ** ps / ps + pr.mu * ay ** p / p
            + (p - 1.0) / p * np.abs(z) ** (p / (p - 1.0)) + dc.delta * y * z)


def h_ratio(s: PhaseState, dc: DerivedConstants) -> float:
    """H = |z|^(1/(p-1)) / y; equals delta at the peak, tends to l1 / l2 at the ends."""
    if s.y <= 0.0:
        raise DegenerateState(f"H undefined for y = {s.y!r} <= 0")
    return abs(s.z) ** (1.0 / (dc.params.p - 1.0)) / s.y


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = (  # b5 - b4
    35 / 384 - 5179 / 57600,
    0.0,
    500 / 1113 - 7571 / 16695,
    125 / 192 - 393 / 640,
    -2187 / 6784 + 92097 / 339200,
    11 / 84 - 187 / 2100,
    -1 / 40,
)


def _make_rhs(dc: DerivedConstants):
    pr = dc.params
    p, ps, mu, d = pr.p, dc.p_star, pr.mu, dc.delta
    q = 1.0 / (p - 1.0)
    copysign = math.copysign

    def rhs(y: float, z: float) -> tuple[float, float]:
        ay = abs(y)
        return (d * y + copysign(abs(z) ** q, z),
                -d * z - copysign(ay ** (ps - 1.0), y) - mu * copysign(ay ** (p - 1.0), y))

    return rhs


def _project(y: float, z: float, dc: DerivedConstants, V) -> tuple[float, bool]:
    """Move z at fixed y back onto V = 0 when that direction is transversal.

    Near the peak the level set is tangent to {y = const}; the correction
    is skipped there.
    """
    pr = dc.params
    p, mu, d = pr.p, pr.mu, dc.delta
    q = 1.0 / (p - 1.0)
    vy = y ** (dc.p_star - 1.0) + mu * y ** (p - 1.0) + d * z
    vz = math.copysign(abs(z) ** q, z) + d * y
    if abs(vz) < 0.05 * math.hypot(vy, vz):
        return z, False
    z0 = z
    for _ in range(4):
        v = V(y, z)
        vz = math.copysign(abs(z) ** q, z) + d * y
        if vz == 0.0:
            break
        z_new = z - v / vz
        if z_new >= 0.0:
            break
        if z_new == z:
            break
        z = z_new
    # a large correction means a poorly conditioned root; keep the integrator's state
    if abs(z - z0) > 1e-6 * abs(z0):
        return z0, False
    return z, True


def _integrate_branch(dc: DerivedConstants, direction: int, opts: OrbitOptions):
    rhs = _make_rhs(dc)
    pr = dc.params
    p, ps, mu, d = pr.p, dc.p_star, pr.mu, dc.delta

    def V(y, z):
        return abs(y) ** ps / ps + mu * abs(y) ** p / p + (p - 1.0) / p * abs(z) ** (p / (p - 1.0)) + d * y * z

    s0 = peak_state(dc)
    t, y, z = 0.0, s0.y, s0.z
    floor = dc.y_max * opts.y_floor_factor
    h = opts.first_step
    ts, ys, zs = [t], [y], [z]
    max_drift = abs(V(y, z))
    rejected = projected = 0
    k1 = rhs(y, z)
    rtol, atol = opts.rtol, opts.atol
    a2, a3, a4, a5, a6, a7 = _A[1:]
    e1, _, e3, e4, e5, e6, e7 = _E

    while y > floor:
        if abs(t) >= opts.t_max:
            raise InsufficientDecay(
                f"y = {y:.3e} still above floor {floor:.3e} at |t| = {abs(t):.1f}; raise t_max")
        h = min(h, opts.max_step)
        hs = direction * h
        k2 = rhs(y + hs * a2[0] * k1[0], z + hs * a2[0] * k1[1])
        k3 = rhs(y + hs * (a3[0] * k1[0] + a3[1] * k2[0]),
                 z + hs * (a3[0] * k1[1] + a3[1] * k2[1]))
        k4 = rhs(y + hs * (a4[0] * k1[0] + a4[1] * k2[0] + a4[2] * k3[0]),
                 z + hs * (a4[0] * k1[1] + a4[1] * k2[1] + a4[2] * k3[1]))
        k5 = rhs(y + hs * (a5[0] * k1[0] + a5[1] * k2[0] + a5[2] * k3[0] + a5[3] * k4[0]),
                 z + hs * (a5[0] * k1[1] + a5[1] * k2[1] + a5[2] * k3[1] + a5[3] * k4[1]))
        k6 = rhs(y + hs * (a6[0] * k1[0] + a6[1] * k2[0] + a6[2] * k3[0] + a6[3] * k4[0] + a6[4] * k5[0]),
                 z + hs * (a6[0] * k1[1] + a6[1] * k2[1] + a6[2] * k3[1] + a6[3] * k4[1] + a6[4] * k5[1]))
        yn = y + hs * (a7[0] * k1[0] + a7[2] * k3[0] + a7[3] * k4[0] + a7[4] * k5[0] + a7[5] * k6[0])
        zn = z + hs * (a7[0] * k1[1] + a7[2] * k3[1] + a7[3] * k4[1] + a7[4] * k5[1] + a7[5] * k6[1])
        k7 = rhs(yn, zn)
        ey = hs * (e1 * k1[0] + e3 * k3[0] + e4 * k4[0] + e5 * k5[0] + e6 * k6[0] + e7 * k7[0])
        ez = hs * (e1 * k1[1] + e3 * k3[1] + e4 * k4[1] + e5 * k5[1] + e6 * k6[1] + e7 * k7[1])
        sy = atol + rtol * max(abs(y), abs(yn))
        sz = atol + rtol * max(abs(z), abs(zn))
        err = math.sqrt(0.5 * ((ey / sy) ** 2 + (ez / sz) ** 2))

        if err <= 1.0:
            t += hs
            y, z = yn, zn
            if y <= 0.0 or z >= 0.0:
                raise DegenerateState(
                    f"orbit left the open quadrant y > 0, z < 0 at t = {t:.4f} (y={y:.3e}, z={z:.3e})")
            max_drift = max(max_drift, abs(V(y, z)))
            if opts.project:
                z, did = _project(y, z, dc, V)
                if did:
                    projected += 1
                    k7 = rhs(y, z)
            k1 = k7
            ts.append(t)
            ys.append(y)
            zs.append(z)
        else:
            rejected += 1
        fac = 0.9 * err ** -0.2 if err > 0.0 else 5.0
        h *= min(5.0, max(0.2, fac))

    return ts, ys, zs, max_drift, rejected, projected


def integrate_orbit(dc: DerivedConstants, opts: OrbitOptions | None = None) -> Orbit:
    """Integrate the peak-normalised orbit forward and backward from t = 0.

    Each direction stops once ``y <= y_max * y_floor_factor``.  The largest
    |V| seen at any accepted step (before projection) is reported as
    ``max_V_drift``.

    Raises
    ------
    InsufficientDecay
        The floor was not reached before ``|t| = t_max``.
    ConservationDrift
        ``max_V_drift`` exceeds ``opts.drift_limit``.
    DegenerateState
        The state reached ``y <= 0`` or ``z >= 0`` away from the endpoints.
    """
    opts = opts or OrbitOptions()
    tf, yf, zf, drift_f, rej_f, proj_f = _integrate_branch(dc, +1, opts)
    tb, yb, zb, drift_b, rej_b, proj_b = _integrate_branch(dc, -1, opts)
    t = np.array(tb[::-1] + tf[1:])
    y = np.array(yb[::-1] + yf[1:])
    z = np.array(zb[::-1] + zf[1:])
    drift = max(drift_f, drift_b)
    if drift > opts.drift_limit:
        raise ConservationDrift(
            f"max |V| = {drift:.3e} exceeds {opts.drift_limit:.3e}; tighten rtol")
    return Orbit(t=t, y=y, z=z, V=first_integral(y, z, dc), constants=dc,
                 max_V_drift=drift, options=opts, n_rejected=rej_f + rej_b,
                 n_projected=proj_f + proj_b)


def write_orbit_csv(orbit: Orbit, dest: str | Path | TextIO) -> None:
    """Dump one row per accepted step: t, y, z, V, H."""
    rows = zip(orbit.t, orbit.y, orbit.z, orbit.V, orbit.H)
    _write_csv(dest, ("t", "y", "z", "V", "H"), rows)


def _write_csv(dest, header, rows) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            _write_csv(fh, header, rows)
        return
    w = csv.writer(dest, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([str(v) if isinstance(v, (int, np.integer)) else repr(float(v)) for v in row])
