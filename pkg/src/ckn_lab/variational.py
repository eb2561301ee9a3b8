"""Discrete radial minimisation: a brute-force oracle for the best constant,
the first eigenvalue of the weighted p-Laplacian on the unit ball, and the
energy along rays.

Functions live on a uniform grid in ``t = log r`` with zero Dirichlet values
at both ends.  Working with ``y = r^delta v`` makes every weight disappear:

    int |Dv|^p |x|^-ap        = omega int |y_t - delta y|^p dt
    int |v|^p |x|^-(a+1)p     = omega int |y|^p dt
    int |v|^p* |x|^-bp*       = omega int |y|^p* dt
    int |v|^p |x|^(c-(a+1)p)  = omega int |y|^p e^(ct) dt

The derivative term is evaluated on cells (difference quotient and midpoint
value); the others use the trapezoid rule on nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solveh_banded

from .errors import InvalidParams, NegativeQuotient, NonConvergence, ZeroFunction
from .params import DerivedConstants
from .profile import RadialProfile
from .quadrature import omega_n, quotient_parts
from .truncation import strict_inequality_witness

__all__ = [
    "DiscreteFunction",
    "GridOptions",
    "MinimizeResult",
    "EigenEstimate",
    "EnergyProfile",
    "LevelBound",
    "make_grid",
    "envelope_function",
    "from_profile",
    "discrete_terms",
    "discrete_rayleigh",
    "rayleigh_gradient",
    "minimize_best_constant",
    "lambda1",
    "energy_profile",
    "mountain_pass_bound",
]


def make_grid(t_lo: float, t_hi: float, nodes: int) -> np.ndarray:
    if nodes < 5 or not t_hi > t_lo:
        raise ValueError("need at least 5 nodes on a non-empty window")
    return np.linspace(t_lo, t_hi, nodes)


@dataclass
class DiscreteFunction:
    """Nodal values of a radial function ``v`` on a uniform t-grid."""

    t_grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.t_grid.shape != self.values.shape:
            raise ValueError("t_grid and values must have the same shape")

    @property
    def h(self) -> float:
        return float(self.t_grid[1] - self.t_grid[0])

    @property
    def r(self) -> np.ndarray:
        return np.exp(self.t_grid)

    def y(self, delta: float) -> np.ndarray:
        return np.exp(delta * self.t_grid) * self.values

    @classmethod
    def from_y(cls, t_grid, y, delta: float) -> "DiscreteFunction":
        t_grid = np.asarray(t_grid, dtype=float)
        return cls(t_grid, np.exp(-delta * t_grid) * np.asarray(y, dtype=float))

    def scaled(self, k: float) -> "DiscreteFunction":
        return DiscreteFunction(self.t_grid, k * self.values)


def envelope_function(dc: DerivedConstants, t_grid, centre: float | None = None,
                      dirichlet: bool = True) -> DiscreteFunction:
    """``(s^(l1/delta) + s^(l2/delta))^-delta`` with ``s = r / e^centre``."""
    t_grid = np.asarray(t_grid, dtype=float)
    if centre is None:
        centre = 0.5 * (t_grid[0] + t_grid[-1])
    d = dc.delta
    ls = t_grid - centre
    v = np.exp(-d * np.logaddexp(dc.l1 / d * ls, dc.l2 / d * ls))
    if dirichlet:
        v[0] = v[-1] = 0.0
    return DiscreteFunction(t_grid, v)


def from_profile(profile: RadialProfile, t_grid, dirichlet: bool = False) -> DiscreteFunction:
    """Sample a profile at ``r = e^t`` (optionally forcing zero end values)."""
    t_grid = np.asarray(t_grid, dtype=float)
    u, _ = profile.evaluate(np.exp(t_grid))
    if dirichlet:
        u = u.copy()
        u[0] = u[-1] = 0.0
    return DiscreteFunction(t_grid, u)


@dataclass(frozen=True)
class Terms:
    grad: float
    hardy: float
    norm: float
    lam: float  # zero when no weight shift is given


def _weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def discrete_terms(y: np.ndarray, t: np.ndarray, dc: DerivedConstants, c: float | None = None,
                   omega: float | None = None, grad: bool = False):
    """The four integrals (times omega) and optionally their y-gradients."""
    pr = dc.params
    p, ps, d = pr.p, dc.p_star, dc.delta
    omega = omega_n(pr.N) if omega is None else omega
    h = float(t[1] - t[0])
    tw = _weights(len(y), h)
    D = np.diff(y) / h
    M = 0.5 * (y[1:] + y[:-1])
    w = D - d * M
    aw = np.abs(w)
    ay = np.abs(y)
    G = h * np.sum(aw ** p)
    Hd = np.sum(tw * ay ** p)
    Nm = np.sum(tw * ay ** ps)
    ect = np.exp(c * t) if c is not None else None
    L = np.sum(tw * ay ** p * ect) if c is not None else 0.0
    terms = Terms(omega * G, omega * Hd, omega * Nm, omega * L)
    if not grad:
        return terms
    q = p * aw ** (p - 2.0) * w if p != 2.0 else 2.0 * w
    gG = np.zeros_like(y)
    gG[:-1] += h * q * (-1.0 / h - 0.5 * d)
    gG[1:] += h * q * (1.0 / h - 0.5 * d)
    sy = np.sign(y)
    gH = tw * p * ay ** (p - 1.0) * sy
    gN = tw * ps * ay ** (ps - 1.0) * sy
    gL = gH * ect if c is not None else np.zeros_like(y)
    return terms, (omega * gG, omega * gH, omega * gN, omega * gL)


def _quotient_and_grad(y, t, dc, lam, c, omega):
    pr = dc.params
    p, ps, mu = pr.p, dc.p_star, pr.mu
    T, (gG, gH, gN, gL) = discrete_terms(y, t, dc, c=c, omega=omega, grad=True)
    if T.norm <= 0.0:
        raise ZeroFunction("discrete function has zero L^p* norm")
    Q = T.grad - mu * T.hardy - lam * T.lam
    gQ = gG - mu * gH - lam * gL
    e = p / ps
    npow = T.norm ** e
    F = Q / npow
    gF = gQ / npow - e * Q * T.norm ** (-e - 1.0) * gN
    return F, gF


def discrete_rayleigh(v: DiscreteFunction, dc: DerivedConstants, lam: float = 0.0,
                      c: float | None = None, omega: float | None = None) -> float:
    """``Q_lam_mu(v) / ||v||^p`` on the grid.

    Raises
    ------
    ZeroFunction
        If ``v`` vanishes identically.
    """
    if lam and c is None:
        raise ValueError("a nonzero lam needs the weight shift c")
    if not np.any(v.values):
        raise ZeroFunction("discrete function is identically zero")
    y = v.y(dc.delta)
    T = discrete_terms(y, v.t_grid, dc, c=c, omega=omega)
    Q = T.grad - dc.params.mu * T.hardy - lam * T.lam
    return Q / T.norm ** (dc.params.p / dc.p_star)


def rayleigh_gradient(v: DiscreteFunction, dc: DerivedConstants, lam: float = 0.0,
                      c: float | None = None, omega: float | None = None) -> np.ndarray:
    """Gradient of :func:`discrete_rayleigh` with respect to the nodal y-values."""
    return _quotient_and_grad(v.y(dc.delta), v.t_grid, dc, lam, c, omega)[1]


@dataclass(frozen=True)
class GridOptions:
    t_lo: float = -18.0
    t_hi: float = 6.0
    nodes: int = 4096
    max_iter: int = 20000
    ftol: float = 1e-13
    patience: int = 20
    armijo: float = 1e-4
    max_halvings: int = 60


@dataclass
class MinimizeResult:
    value: float
    minimizer: DiscreteFunction
    iterations: int
    final_step: float
    grid_nodes: int
    converged: bool
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def S_est(self) -> float:
        return self.value

    def to_dict(self) -> dict:
        return {"s_est": self.value, "iterations": self.iterations,
                "final_step": self.final_step, "grid_nodes": self.grid_nodes,
                "converged": self.converged}


def _preconditioner(n_int: int, h: float, shift: float) -> np.ndarray:
    """Banded form of ``K + shift M`` (stiffness plus lumped mass) on interior nodes."""
    ab = np.empty((2, n_int))
    ab[0, :] = -1.0 / h
    ab[0, 0] = 0.0
    ab[1, :] = 2.0 / h + shift * h
    return ab


def _projected_descent(fun: Callable, y0: np.ndarray, h: float, shift: float,
                       renorm: Callable, opts: GridOptions):
    """Preconditioned projected gradient with Armijo backtracking.

    ``fun(y) -> (F, grad)`` is 0-homogeneous; ``renorm`` rescales an iterate
    onto the constraint sphere.  End values stay zero, interior values are
    clipped at zero after each step.
    """
    y = renorm(np.maximum(y0, 0.0))
    y[0] = y[-1] = 0.0
    ab = _preconditioner(len(y) - 2, h, shift)
    F, g = fun(y)
    step = 1.0
    history = [F]
    quiet = 0
    it = 0
    for it in range(1, opts.max_iter + 1):
        d = np.zeros_like(y)
        d[1:-1] = -solveh_banded(ab, g[1:-1])
        accepted = False
        for _ in range(opts.max_halvings):
            yn = np.maximum(y + step * d, 0.0)
            yn[0] = yn[-1] = 0.0
            if not np.any(yn):
                step *= 0.5
                continue
            Fn, gn = fun(yn)
            if Fn <= F + opts.armijo * float(g @ (yn - y)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no descent at the finest step: the iterate is stationary to rounding
            return y, F, it, step, True, history
        rel = (F - Fn) / abs(Fn)
        y = renorm(yn)
        F, g = fun(y)
        history.append(F)
        quiet = quiet + 1 if rel < opts.ftol else 0
        if quiet >= opts.patience:
            return y, F, it, step, True, history
        step = min(2.0 * step, 1e6)
    return y, F, it, step, False, history


def minimize_best_constant(dc: DerivedConstants, opts: GridOptions | None = None,
                           init: DiscreteFunction | None = None,
                           omega: float | None = None) -> MinimizeResult:
    """Minimise the discrete Rayleigh quotient over nonnegative grid functions.

    Starts from the envelope centred in the window and keeps the iterate on
    ``||v||_(L^p*) = 1``.

    Raises
    ------
    NonConvergence
        ``max_iter`` reached while the quotient was still decreasing; the
        exception's ``result`` holds the last iterate.
    """
    opts = opts or GridOptions()
    if opts.t_hi - opts.t_lo < 8.0 * math.log(10.0):
        raise InvalidParams("grid", "a window spanning at least 8 decades in r")
    t = make_grid(opts.t_lo, opts.t_hi, opts.nodes)
    h = float(t[1] - t[0])
    if init is None:
        init = envelope_function(dc, t)
    y0 = init.y(dc.delta)
    ps = dc.p_star

    def fun(y):
        return _quotient_and_grad(y, t, dc, 0.0, None, omega)

    def renorm(y):
        n = discrete_terms(y, t, dc, omega=omega).norm
        return y / n ** (1.0 / ps) if n > 0 else y

    shift = dc.delta ** 2 * (1.0 - dc.params.mu / dc.mu_bar)
    y, F, it, step, ok, hist = _projected_descent(fun, y0, h, shift, renorm, opts)
    res = MinimizeResult(value=F, minimizer=DiscreteFunction.from_y(t, y, dc.delta),
                         iterations=it, final_step=step, grid_nodes=opts.nodes,
                         converged=ok, history=hist)
    if not ok:
        err = NonConvergence(f"quotient still decreasing after {it} iterations (S = {F:.10g})")
        err.result = res
        raise err
    return res


@dataclass
class EigenEstimate:
    """Minimum of ``I_mu(u) = (Q_mu(u))/p`` on ``{J(u) = 1}``."""

    lambda1: float
    minimizer: DiscreteFunction
    grid_levels: list[dict]
    p: float

    @property
    def eigenvalue(self) -> float:
        """``p * lambda1``: the eigenvalue in the Euler-Lagrange equation."""
        return self.p * self.lambda1

    @property
    def refinement_change(self) -> float:
        """Relative change of lambda1 between the two finest levels."""
        if len(self.grid_levels) < 2:
            return float("nan")
        a, b = self.grid_levels[-2]["lambda1"], self.grid_levels[-1]["lambda1"]
        return abs(b - a) / abs(b)

    def to_dict(self) -> dict:
        return {"lambda1": self.lambda1, "eigenvalue": self.eigenvalue,
                "refinement_change": self.refinement_change,
                "convergence_table": self.grid_levels}


def _eigen_level(dc, c, t, omega, opts, init_y=None):
    pr = dc.params
    p, mu = pr.p, pr.mu
    h = float(t[1] - t[0])

    def fun(y):
        T, (gG, gH, _, gL) = discrete_terms(y, t, dc, c=c, omega=omega, grad=True)
        if T.lam <= 0.0:
            raise ZeroFunction("discrete function has zero weighted L^p norm")
        I = (T.grad - mu * T.hardy) / p
        gI = (gG - mu * gH) / p
        return I / T.lam, gI / T.lam - I / T.lam ** 2 * gL

    def renorm(y):
        J = discrete_terms(y, t, dc, c=c, omega=omega).lam
        return y / J ** (1.0 / p) if J > 0 else y

    if init_y is None:
        init_y = envelope_function(dc, t).y(dc.delta)
    shift = dc.delta ** 2 * (1.0 - mu / dc.mu_bar)
    return _projected_descent(fun, init_y, h, shift, renorm, opts)


def lambda1(dc: DerivedConstants, c: float, opts: GridOptions | None = None,
            levels: Sequence[int] = (512, 1024, 2048), omega: float | None = None) -> EigenEstimate:
    """First eigenvalue of the weighted problem on the unit ball.

    The window defaults to ``t in [-18, 0]`` (``r <= 1``).  Each level in
    ``levels`` doubles (or otherwise refines) the node count and is started
    from the previous minimiser interpolated onto the new grid.

    Raises
    ------
    NonConvergence
        A level hit ``max_iter`` while still decreasing.
    """
    gap = dc.decay_gap
    if not 0.0 < c < gap:
        raise InvalidParams("c", f"0 < c < (a+1+l2)p - N = {gap:.6g}")
    opts = opts or GridOptions(t_hi=0.0)
    table = []
    prev = None
    y = None
    for n in levels:
        t = make_grid(opts.t_lo, opts.t_hi, n)
        init = None if prev is None else np.interp(t, prev[0], prev[1])
        y, val, it, _, ok, _ = _eigen_level(dc, c, t, omega, opts, init)
        if not ok:
            raise NonConvergence(f"eigen minimisation on {n} nodes still decreasing after {it} iterations")
        table.append({"nodes": n, "lambda1": val, "iterations": it})
        prev = (t, y)
    return EigenEstimate(lambda1=table[-1]["lambda1"],
                         minimizer=DiscreteFunction.from_y(prev[0], prev[1], dc.delta),
                         grid_levels=table, p=dc.params.p)


@dataclass
class EnergyProfile:
    curve: list[tuple[float, float]]
    sup_formula: float
    sup_grid: float
    q_value: float

    @property
    def t_star(self) -> float:
        return max(self.curve, key=lambda te: te[1])[0]

    def to_dict(self) -> dict:
        return {"curve": [list(x) for x in self.curve], "sup_formula": self.sup_formula,
                "sup_grid": self.sup_grid, "q_value": self.q_value}


def _energy_terms(v, dc, lam, c, omega):
    """(Q_lam_mu, ||v||^p*) for a grid function or a sampled profile."""
    if isinstance(v, DiscreteFunction):
        T = discrete_terms(v.y(dc.delta), v.t_grid, dc, c=c, omega=omega)
        return T.grad - dc.params.mu * T.hardy - lam * T.lam, T.norm
    q, norm, *_ = quotient_parts(v, lam=lam, c=c, omega=omega)
    return q, norm


def energy_profile(v, dc: DerivedConstants, lam: float, c: float | None,
                   t_grid: Sequence[float] | None = None,
                   omega: float | None = None) -> EnergyProfile:
    """Energy ``E(t v)`` along the ray through ``v / ||v||``.

    ``v`` may be a :class:`DiscreteFunction` or a :class:`RadialProfile`.
    The energy is ``t^p Q / p - t^p* / p*`` once ``v`` is normalised, with
    maximum ``(1/p - 1/p*) Q^(p*/(p*-p))`` at ``t = Q^(1/(p*-p))``.

    Raises
    ------
    NegativeQuotient
        ``Q_lam_mu(v) <= 0``: the energy decreases along the whole ray.
    """
    pr = dc.params
    p, ps = pr.p, dc.p_star
    q, norm = _energy_terms(v, dc, lam, c, omega)
    if norm <= 0.0:
        raise ZeroFunction("v is identically zero")
    qn = q / norm ** (p / ps)
    if qn <= 0.0:
        raise NegativeQuotient(f"Q_lambda_mu(v) = {qn:.6g} <= 0; lambda is too large")
    t_star = qn ** (1.0 / (ps - p))
    if t_grid is None:
        t_grid = np.linspace(0.0, 2.0 * t_star, 2001)
    ts = np.asarray(t_grid, dtype=float)
    # Q is p-homogeneous and the norm term p*-homogeneous
    E = ts ** p / p * qn - ts ** ps / ps
    sup_formula = (1.0 / p - 1.0 / ps) * qn ** (ps / (ps - p))
    return EnergyProfile(curve=list(zip(ts.tolist(), E.tolist())), sup_formula=sup_formula,
                         sup_grid=float(E.max()), q_value=qn)


@dataclass
class LevelBound:
    beta_bound: float
    threshold: float
    margin: float
    error: float
    q_value: float
    witness: dict | None = None

    @property
    def strict(self) -> bool:
        return self.margin > 3.0 * self.error

    def to_dict(self) -> dict:
        return {"beta_bound": self.beta_bound, "threshold": self.threshold,
                "margin": self.margin, "error": self.error, "strict": self.strict,
                "q_value": self.q_value, "witness": self.witness}


def mountain_pass_bound(dc: DerivedConstants, S0: float, lam: float, c: float,
                        base: RadialProfile, h_grid: Sequence[float] = (3.0, 4.0, 6.0),
                        m_max: int = 64, s0_error: float = 0.0,
                        v1: RadialProfile | None = None,
                        lambda1_est: float | None = None) -> LevelBound:
    """Upper bound for the mountain-pass level from a normalised test function.

    ``beta <= (a+1-b)/N Q_lam_mu(v1)^(N/((a+1-b)p))`` for ``||v1|| = 1``.  By
    default ``v1`` is the truncated witness found for ``lam``; with
    ``lam = 0`` no witness exists and the untruncated extremal is used, which
    reproduces the threshold itself.

    Raises
    ------
    NoWitness
        ``lam > 0`` and the witness search failed (and no ``v1`` was given).
    """
    pr = dc.params
    if lam < 0.0:
        raise InvalidParams("lambda", "lambda >= 0")
    if lambda1_est is not None and not lam < lambda1_est:
        raise InvalidParams("lambda", f"lambda < lambda1 = {lambda1_est:.6g}")
    e = dc.energy_exponent
    kappa = (pr.a + 1.0 - pr.b) / pr.N
    witness = None
    if v1 is None and lam > 0.0:
        w = strict_inequality_witness(dc, S0, lam, c, h_grid, m_max, base, s0_error)
        v1 = w.profile.profile
        witness = {"m": w.m, "h": w.h, "ratio": w.ratio}
    elif v1 is None:
        v1 = base
    q, norm, q_err, n_err, _ = quotient_parts(v1, lam=lam, c=c if lam else None)
    qn = q / norm ** (pr.p / dc.p_star)
    if qn <= 0.0:
        raise NegativeQuotient(f"Q_lambda_mu(v1) = {qn:.6g} <= 0")
    q_rel = q_err / abs(q) + pr.p / dc.p_star * n_err / norm + s0_error / S0
    beta = kappa * qn ** e
    thr = kappa * S0 ** e
    return LevelBound(beta_bound=beta, threshold=thr, margin=thr - beta,
                      error=e * q_rel * max(beta, thr), q_value=qn, witness=witness)
