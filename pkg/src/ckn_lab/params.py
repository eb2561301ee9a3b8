"""Problem parameters and the closed-form constants derived from them.

The inequality is parametrised by the dimension ``N``, the exponent ``p``,
the weight exponents ``a``, ``b`` and the Hardy coefficient ``mu``; the
perturbed problems additionally carry ``lam`` and ``c``.  Everything that
has a closed form (or a one-dimensional root) lives here.
"""

from __future__ import annotations

import json
import math
import numbers
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Mapping

from .errors import BracketFailure, InvalidParams

__all__ = [
    "ProblemParams",
    "DerivedConstants",
    "PRESETS",
    "preset",
    "validate",
    "derive",
    "xi",
    "xi_prime",
    "xi_roots",
    "load_params",
]


@dataclass(frozen=True)
class ProblemParams:
    N: int
    p: float
    a: float
    b: float
    mu: float
    lam: float | None = None
    c: float | None = None
    oracle: bool = False

    @property
    def delta(self) -> float:
        return (self.N - (self.a + 1.0) * self.p) / self.p

    @property
    def mu_bar(self) -> float:
        return self.delta ** self.p

    @property
    def p_star(self) -> float:
        return self.N * self.p / (self.N - (self.a + 1.0 - self.b) * self.p)

    def with_(self, **changes) -> "ProblemParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = {"N": self.N, "p": self.p, "a": self.a, "b": self.b, "mu": self.mu}
        if self.lam is not None:
            d["lambda"] = self.lam
        if self.c is not None:
            d["c"] = self.c
        if self.oracle:
            d["oracle"] = True
        return d


@dataclass(frozen=True)
class DerivedConstants:
    params: ProblemParams
    delta: float
    mu_bar: float
    p_star: float
    k: float
    l1: float
    l2: float
    y_max: float

    @property
    def decay_gap(self) -> float:
        """(a+1+l2)p - N: upper end of the admissible window for c."""
        pr = self.params
        return (pr.a + 1.0 + self.l2) * pr.p - pr.N

    @property
    def energy_exponent(self) -> float:
        """N/((a+1-b)p) = p*/(p*-p)."""
        pr = self.params
        return pr.N / ((pr.a + 1.0 - pr.b) * pr.p)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = self.params.to_dict()
        d["decay_gap"] = self.decay_gap
        return d


def xi(s: float, params: ProblemParams) -> float:
    """xi(s) = (p-1) s^p - (N-(a+1)p) s^(p-1) + mu, for s >= 0."""
    p = params.p
    return (p - 1.0) * s ** p - (params.N - (params.a + 1.0) * p) * s ** (p - 1.0) + params.mu


def xi_prime(s: float, params: ProblemParams) -> float:
    p = params.p
    return p * (p - 1.0) * s ** (p - 1.0) - (p - 1.0) * (params.N - (params.a + 1.0) * p) * s ** (p - 2.0)


def _bisect_newton(f, df, lo: float, hi: float, width: float = 1e-8,
                   resid: float = 1e-14, max_newton: int = 50) -> float:
    """Bisect until the bracket is ``width`` wide relative to its upper end, then
    polish with Newton.  If Newton leaves the bracket without meeting ``resid``
    (steep roots near s = 0 when p < 2), bisection resumes to machine resolution.
    """
    flo = f(lo)

    def bisect(lo, hi, flo, rel):
        for _ in range(2000):
            if not hi - lo > rel * hi:
                break
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            fm = f(mid)
            if fm == 0.0:
                return mid, mid, fm
            if (fm > 0) == (flo > 0):
                lo, flo = mid, fm
            else:
                hi = mid
        return lo, hi, flo

    lo, hi, flo = bisect(lo, hi, flo, width)
    if lo == hi:
        return lo
    s = 0.5 * (lo + hi)
    fs = f(s)
    for _ in range(max_newton):
        if fs == 0.0:
            return s
        d = df(s)
        if d == 0.0:
            break
        s_new = s - fs / d
        # stay inside the bracket; a near-double root makes Newton wander
        if not lo <= s_new <= hi:
            break
        # iterate to a fixed point, an absolute residual stop is too loose when the
        # terms of f are small
        if abs(s_new - s) <= 4.0 * 2.0 ** -52 * abs(s):
            f_new = f(s_new)
            return s_new if abs(f_new) <= abs(fs) else s
        s, fs = s_new, f(s_new)
    if abs(fs) <= resid:
        return s
    lo, hi, _ = bisect(lo, hi, flo, 4.0 * 2.0 ** -52)
    return s if abs(fs) <= min(abs(f(lo)), abs(f(hi))) else min((lo, hi), key=lambda x: abs(f(x)))


def xi_roots(params: ProblemParams) -> tuple[float, float]:
    """Return the two nonnegative zeros ``l1 < delta < l2`` of xi.

    The brackets ``(0, delta)`` and ``(delta, upper)`` follow from
    ``xi(0) = mu > 0``, ``xi(delta) = mu - delta^p < 0`` and ``xi -> +inf``;
    the upper bound is found by doubling.  With ``mu = 0`` (oracle mode) the
    roots are ``0`` and ``p delta / (p-1)`` exactly.
    """
    d = params.delta
    p = params.p
    if params.mu == 0.0:
        return 0.0, p * d / (p - 1.0)
    f = lambda s: xi(s, params)
    df = lambda s: xi_prime(s, params)
    if not f(d) < 0.0:
        raise BracketFailure(f"xi(delta) = {f(d):.3e} is not negative; mu must be < mu_bar")
    hi = 2.0 * d
    for _ in range(200):
        if f(hi) > 0.0:
            break
        hi *= 2.0
    else:
        raise BracketFailure("no sign change above delta after bound doubling")
    l1 = _bisect_newton(f, df, 0.0, d)
    l2 = _bisect_newton(f, df, d, hi)
    return l1, l2


def _is_real(x) -> bool:
    return isinstance(x, numbers.Real) and not isinstance(x, bool) and math.isfinite(x)


def validate(raw: Mapping[str, Any] | ProblemParams) -> ProblemParams:
    """Check the standing hypotheses and return a :class:`ProblemParams`.

    Accepts a mapping using the JSON schema keys (``N, p, a, b, mu`` and the
    optional ``lambda``, ``c``, ``oracle``) or an existing instance.  Raises
    :class:`InvalidParams` naming the first violated inequality.
    """
    if isinstance(raw, ProblemParams):
        raw = {**raw.to_dict(), "oracle": raw.oracle}
    raw = dict(raw)
    if "lam" in raw and "lambda" not in raw:
        raw["lambda"] = raw.pop("lam")
    known = {"N", "p", "a", "b", "mu", "lambda", "c", "oracle"}
    for key in raw:
        if key not in known:
            raise InvalidParams(key, "a known parameter name " + str(sorted(known)))
    for key in ("N", "p", "a", "b", "mu"):
        if key not in raw or raw[key] is None:
            raise InvalidParams(key, "a value")

    N = raw["N"]
    if not isinstance(N, numbers.Integral) or isinstance(N, bool):
        raise InvalidParams("N", "an integer dimension")
    N = int(N)
    if N < 3:
        raise InvalidParams("N", "N >= 3")
    for key in ("p", "a", "b", "mu"):
        if not _is_real(raw[key]):
            raise InvalidParams(key, "a finite real number")
    p, a, b, mu = (float(raw[k]) for k in ("p", "a", "b", "mu"))
    oracle = bool(raw.get("oracle", False))

    if not 1.0 < p < N:
        raise InvalidParams("p", f"1 < p < N = {N}")
    if not 0.0 <= a < (N - p) / p:
        raise InvalidParams("a", f"0 <= a < (N-p)/p = {(N - p) / p:.6g}")
    if not a <= b < a + 1.0:
        raise InvalidParams("b", f"a <= b < a+1 = {a + 1.0:.6g}")
    mu_bar = ((N - (a + 1.0) * p) / p) ** p
    if mu == 0.0 and not oracle:
        raise InvalidParams("mu", "0 < mu (mu = 0 only with oracle=true)")
    if not 0.0 <= mu < mu_bar:
        raise InvalidParams("mu", f"mu < mu_bar = {mu_bar:.6g}" if mu >= mu_bar
                            else "0 < mu")

    params = ProblemParams(N=N, p=p, a=a, b=b, mu=mu, oracle=oracle)

    lam = raw.get("lambda")
    c = raw.get("c")
    if lam is not None:
        if not _is_real(lam) or not lam > 0.0:
            raise InvalidParams("lambda", "lambda > 0")
        lam = float(lam)
    if c is not None:
        if not _is_real(c):
            raise InvalidParams("c", "a finite real number")
        c = float(c)
        _, l2 = xi_roots(params)
        gap = (a + 1.0 + l2) * p - N
        if not 0.0 < c < gap:
            raise InvalidParams("c", f"0 < c < (a+1+l2)p - N = {gap:.6g}")
    return replace(params, lam=lam, c=c)


def derive(params: ProblemParams) -> DerivedConstants:
    """Compute delta, mu_bar, p*, k, l1, l2 and the peak value y_max."""
    N, p, a, b, mu = params.N, params.p, params.a, params.b, params.mu
    if mu < 0.0 or (mu == 0.0 and not params.oracle):
        raise InvalidParams("mu", "0 < mu (mu = 0 only with oracle=true)")
    delta = params.delta
    p_star = params.p_star
    l1, l2 = xi_roots(params)
    y_max = (N / (N - (a + 1.0 - b) * p) * (delta ** p - mu)) ** (1.0 / (p_star - p))
    return DerivedConstants(
        params=params,
        delta=delta,
        mu_bar=delta ** p,
        p_star=p_star,
        k=(N - p) / (N - (a + 1.0) * p),
        l1=l1,
        l2=l2,
        y_max=y_max,
    )


PRESETS: dict[str, ProblemParams] = {
    "R0": ProblemParams(N=3, p=2.0, a=0.0, b=0.0, mu=0.0, oracle=True),
    "R1": ProblemParams(N=3, p=2.0, a=0.0, b=0.0, mu=0.1),
    "R2": ProblemParams(N=5, p=3.0, a=0.25, b=0.5, mu=0.05),
}
# base set for flag overrides
PRESETS["R1-base"] = PRESETS["R1"]


def preset(name: str) -> ProblemParams:
    try:
        return PRESETS[name]
    except KeyError:
        raise InvalidParams("preset", "one of " + ", ".join(sorted(PRESETS))) from None


def load_params(path: str | Path) -> ProblemParams:
    with open(path, encoding="utf-8") as fh:
        return validate(json.load(fh))
