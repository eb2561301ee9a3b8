import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import eigh

from ckn_lab.errors import InvalidParams, NegativeQuotient, NonConvergence, ZeroFunction
from ckn_lab.params import derive, preset
from ckn_lab.profile import RadialProfile, dilate
from ckn_lab.quadrature import sobolev_constant, weighted_integral
from ckn_lab.variational import (DiscreteFunction, GridOptions, discrete_rayleigh,
                                 discrete_terms, energy_profile, envelope_function, from_profile,
                                 lambda1, make_grid, minimize_best_constant, mountain_pass_bound,
                                 rayleigh_gradient)

GRID = make_grid(-18.0, 6.0, 4096)


@pytest.fixture(scope="module")
def r1_min(ref):
    return minimize_best_constant(ref.constants("R1"))


@pytest.fixture(scope="module")
def r1_eigen(ref):
    return lambda1(ref.constants("R1"), 0.5)


def fd_gradient(F, y, idx, h=1e-6):
    out = []
    for i in idx:
        e = np.zeros_like(y)
        e[i] = h * max(1.0, abs(y[i]))
        out.append((F(y + e) - F(y - e)) / (2 * e[i]))
    return np.array(out)


def p2_eigen_oracle(dc, c, t):
    """Smallest generalised eigenvalue of the p = 2 discrete forms on interior nodes."""
    n = len(t)
    h = t[1] - t[0]
    d = dc.delta
    E = np.zeros((n - 1, n))
    i = np.arange(n - 1)
    E[i, i] = -1 / h - d / 2
    E[i, i + 1] = 1 / h - d / 2
    w = np.full(n, h)
    w[[0, -1]] = h / 2
    A = 0.5 * (h * E.T @ E - dc.params.mu * np.diag(w))
    B = np.diag(w * np.exp(c * t))
    vals = eigh(A[1:-1, 1:-1], B[1:-1, 1:-1], eigvals_only=True, subset_by_index=[0, 0])
    return vals[0]


# -- discrete quotient -----------------------------------------------------------

def test_zero_degree_homogeneity(ref):
    dc = ref.constants("R1")
    v = envelope_function(dc, GRID)
    assert discrete_rayleigh(v.scaled(7.0), dc) == pytest.approx(discrete_rayleigh(v, dc), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=1e-3, max_value=1e3))
def test_homogeneity_property(k):
    dc = derive(preset("R2"))
    v = envelope_function(dc, make_grid(-20, 10, 600))
    a = discrete_rayleigh(v, dc, lam=0.01, c=0.1)
    assert discrete_rayleigh(v.scaled(k), dc, lam=0.01, c=0.1) == pytest.approx(a, rel=1e-12)


def test_interpolated_extremal(ref):
    dc = ref.constants("R1")
    # centred in the window; forcing zero end values would add a jump cell
    v = from_profile(dilate(ref.profile("R1"), np.exp(-6.0)), GRID)
    assert discrete_rayleigh(v, dc) == pytest.approx(ref.best("R1").S, rel=0.02)


def test_envelope_bounds_constant(ref):
    dc = ref.constants("R1")
    val = discrete_rayleigh(envelope_function(dc, GRID), dc)
    assert np.isfinite(val) and val >= ref.best("R1").S * (1 - 0.02)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(min_value=-0.5, max_value=0.5), min_size=4, max_size=4),
       st.floats(min_value=-6.0, max_value=0.0))
def test_oracle_sandwich(coef, centre):
    from conftest import best, constants
    dc = constants("R1")
    t = make_grid(-18.0, 6.0, 1024)
    base = envelope_function(dc, t, centre=centre).values
    bump = 1 + sum(a * np.sin((k + 1) * np.pi * (t - t[0]) / (t[-1] - t[0]))
                   for k, a in enumerate(coef))
    v = DiscreteFunction(t, base * np.maximum(bump, 0.05))
    assert discrete_rayleigh(v, dc) >= best("R1").S * (1 - 0.02)


def test_terms_match_profile_quadrature(ref):
    # nodes of the profile grid, so the reference uses exact |u'| and Simpson
    prof = ref.profile("R2")
    keep = np.abs(prof.t) <= 30.0
    sub = RadialProfile(t=prof.t[keep], r=prof.r[keep], u=prof.u[keep],
                        du_abs=prof.du_abs[keep], constants=prof.constants)
    dc = prof.constants
    v = DiscreteFunction(sub.t, sub.u)
    T = discrete_terms(v.y(dc.delta), sub.t, dc, c=0.1)
    for kind, val in (("grad_p", T.grad), ("hardy_p", T.hardy), ("norm_pstar", T.norm),
                      ("lambda_term", T.lam)):
        ref_val = weighted_integral(sub, kind, tail=False, c=0.1).value
        assert val == pytest.approx(ref_val, rel=1e-4), kind


def test_zero_function(ref):
    dc = ref.constants("R1")
    with pytest.raises(ZeroFunction):
        discrete_rayleigh(DiscreteFunction(GRID, np.zeros_like(GRID)), dc)
    with pytest.raises(ValueError):
        discrete_rayleigh(envelope_function(dc, GRID), dc, lam=0.1)


@pytest.mark.parametrize("name, lam, c", [("R1", 0.0, None), ("R1", 0.3, 0.5), ("R2", 0.0, None),
                                          ("R2", 0.02, 0.1)])
def test_gradient_against_differences(name, lam, c):
    dc = derive(preset(name))
    t = make_grid(-12.0, 6.0, 160)
    rng = np.random.default_rng(7)
    v = envelope_function(dc, t, centre=-3.0)
    v = DiscreteFunction(t, v.values * rng.uniform(0.5, 1.5, len(t)))
    g = rayleigh_gradient(v, dc, lam=lam, c=c)

    def F(y):
        return discrete_rayleigh(DiscreteFunction.from_y(t, y, dc.delta), dc, lam=lam, c=c)

    y = v.y(dc.delta)
    idx = rng.choice(np.arange(1, len(t) - 1), size=25, replace=False)
    fd = fd_gradient(F, y, idx)
    assert np.linalg.norm(g[idx] - fd) <= 1e-6 * np.linalg.norm(fd)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_gradient_property(seed):
    dc = derive(preset("R2"))
    t = make_grid(-10.0, 5.0, 80)
    rng = np.random.default_rng(seed)
    y = envelope_function(dc, t, centre=-2.0).y(dc.delta) * rng.uniform(0.3, 2.0, len(t))
    v = DiscreteFunction.from_y(t, y, dc.delta)
    g = rayleigh_gradient(v, dc)

    def F(yy):
        return discrete_rayleigh(DiscreteFunction.from_y(t, yy, dc.delta), dc)

    idx = np.arange(1, len(t) - 1, 7)
    fd = fd_gradient(F, y, idx)
    assert np.linalg.norm(g[idx] - fd) <= 1e-6 * np.linalg.norm(fd)


# -- brute-force minimisation ---------------------------------------------------------

def test_minimizer_r1(ref, r1_min):
    assert r1_min.converged and r1_min.grid_nodes == 4096
    assert r1_min.S_est == pytest.approx(ref.best("R1").S, rel=0.02)
    v = r1_min.minimizer
    assert np.all(v.values >= 0) and v.values[0] == v.values[-1] == 0.0
    dc = ref.constants("R1")
    assert discrete_terms(v.y(dc.delta), v.t_grid, dc).norm == pytest.approx(1.0, rel=1e-12)
    assert discrete_rayleigh(v, dc) == pytest.approx(r1_min.S_est, rel=1e-12)


def test_minimizer_r0():
    dc = derive(preset("R0"))
    res = minimize_best_constant(dc)
    assert res.S_est == pytest.approx(sobolev_constant(3), rel=0.02)


def test_minimizer_peak_location(ref, r1_min):
    # the minimiser is a discretised dilate of the extremal: y = r^delta v peaks once
    dc = ref.constants("R1")
    y = r1_min.minimizer.y(dc.delta)
    k = int(np.argmax(y))
    assert np.all(np.diff(y[1:k + 1]) >= 0) and np.all(np.diff(y[k:-1]) <= 0)


def test_minimizer_refinement(ref):
    dc = ref.constants("R1")
    vals = [minimize_best_constant(dc, GridOptions(nodes=n)).S_est for n in (1024, 2048, 4096)]
    d1, d2 = abs(vals[1] - vals[0]), abs(vals[2] - vals[1])
    assert d2 < d1
    # the discrete values stay above the continuum infimum within the slack
    assert min(vals) >= ref.best("R1").S * (1 - 0.02)


def test_minimizer_rejects_short_window(ref):
    with pytest.raises(InvalidParams):
        minimize_best_constant(ref.constants("R1"), GridOptions(t_lo=-5.0, t_hi=5.0))


def test_minimizer_nonconvergence(ref):
    with pytest.raises(NonConvergence) as exc:
        minimize_best_constant(ref.constants("R1"), GridOptions(nodes=512, max_iter=2))
    assert exc.value.result.iterations == 2


# -- first eigenvalue -------------------------------------------------------------------

def test_lambda1_positive_and_stable(r1_eigen):
    assert r1_eigen.lambda1 > 0
    assert r1_eigen.refinement_change < 0.01
    assert [lv["nodes"] for lv in r1_eigen.grid_levels] == [512, 1024, 2048]
    assert r1_eigen.eigenvalue == pytest.approx(2 * r1_eigen.lambda1)
    assert r1_eigen.minimizer.t_grid[-1] == 0.0


def test_lambda1_matches_matrix_eigenvalue(ref):
    dc = ref.constants("R1")
    est = lambda1(dc, 0.5, levels=(512,))
    t = make_grid(-18.0, 0.0, 512)
    assert est.lambda1 == pytest.approx(p2_eigen_oracle(dc, 0.5, t), rel=1e-7)


def test_lambda1_decreases_towards_hardy_limit():
    base = preset("R1")
    lo = lambda1(derive(base.with_(mu=0.1)), 0.15, levels=(512, 1024)).lambda1
    hi = lambda1(derive(base.with_(mu=0.24)), 0.15, levels=(512, 1024)).lambda1
    assert 0 < hi < lo


def test_lambda1_rejects_c(ref):
    with pytest.raises(InvalidParams):
        lambda1(ref.constants("R1"), 0.9)


# -- energy along rays ------------------------------------------------------------------

def test_energy_exponent_identity():
    dc = derive(preset("R1"))
    pr = dc.params
    assert 1 / pr.p - 1 / dc.p_star == pytest.approx(1 / 3, rel=1e-15)
    assert 1 / pr.p - 1 / dc.p_star == pytest.approx((pr.a + 1 - pr.b) / pr.N, rel=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=3, max_value=8), st.floats(min_value=1.2, max_value=2.9),
       st.floats(min_value=0.0, max_value=1.0), st.floats(min_value=0.0, max_value=0.99))
def test_energy_exponent_identity_property(N, p, fa, db):
    a = fa * 0.9 * (N - p) / p
    b = a + db
    ps = N * p / (N - (a + 1 - b) * p)
    assert 1 / p - 1 / ps == pytest.approx((a + 1 - b) / N, rel=1e-12)


def test_energy_of_extremal(ref):
    dc = ref.constants("R1")
    S0 = ref.best("R1").S
    ep = energy_profile(ref.profile("R1"), dc, 0.0, None)
    assert ep.q_value == pytest.approx(S0, rel=1e-14)
    assert ep.sup_formula == pytest.approx(S0 ** 1.5 / 3, rel=1e-13)
    assert ep.curve[0] == (0.0, 0.0)
    assert ep.sup_grid <= ep.sup_formula * (1 + 1e-12)
    assert ep.t_star == pytest.approx(S0 ** 0.25, rel=2e-3)


def test_energy_grid_refinement(ref):
    dc = ref.constants("R1")
    gaps = []
    for n in (11, 101, 1001):
        ep = energy_profile(ref.profile("R1"), dc, 0.0, None, t_grid=np.linspace(0, 3, n))
        gaps.append(ep.sup_formula - ep.sup_grid)
    assert all(g >= -1e-12 for g in gaps)
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] <= 1e-5 * ep.sup_formula


def test_energy_normalises_internally(ref):
    dc = ref.constants("R1")
    v = envelope_function(dc, GRID)
    a = energy_profile(v, dc, 0.1, 0.5)
    b = energy_profile(v.scaled(3.0), dc, 0.1, 0.5)
    assert a.sup_formula == pytest.approx(b.sup_formula, rel=1e-12)


def test_energy_negative_quotient(ref):
    dc = ref.constants("R1")
    v = envelope_function(dc, make_grid(-18.0, 0.0, 512), centre=-2.0)
    with pytest.raises(NegativeQuotient):
        energy_profile(v, dc, 50.0, 0.5)


# -- mountain-pass level ------------------------------------------------------------------

def test_level_bound_strict(ref):
    dc = ref.constants("R1")
    rep = ref.best("R1")
    lb = mountain_pass_bound(dc, rep.S, 0.02, 0.5, ref.profile("R1"), s0_error=rep.s_error)
    assert lb.strict and lb.beta_bound < lb.threshold
    assert lb.threshold == pytest.approx(rep.S ** 1.5 / 3, rel=1e-15)
    assert lb.witness is not None


def test_level_bound_equality_without_lambda(ref):
    dc = ref.constants("R1")
    S0 = ref.best("R1").S
    lb = mountain_pass_bound(dc, S0, 0.0, 0.5, ref.profile("R1"))
    assert lb.beta_bound == pytest.approx(lb.threshold, rel=1e-12)
    assert not lb.strict


def test_level_bound_monotone_in_lambda(ref):
    dc = ref.constants("R1")
    S0 = ref.best("R1").S
    base = ref.profile("R1")
    first = mountain_pass_bound(dc, S0, 0.02, 0.5, base)
    from ckn_lab.truncation import build_truncation
    v1 = build_truncation(dc, S0, first.witness["m"], first.witness["h"], base).profile
    b02 = mountain_pass_bound(dc, S0, 0.02, 0.5, base, v1=v1).beta_bound
    b04 = mountain_pass_bound(dc, S0, 0.04, 0.5, base, v1=v1).beta_bound
    assert b02 == pytest.approx(first.beta_bound, rel=1e-14)
    assert b04 <= b02


@pytest.mark.parametrize("frac", [0.25, 0.5])
def test_level_bound_below_eigenvalue(ref, r1_eigen, frac):
    dc = ref.constants("R1")
    rep = ref.best("R1")
    lb = mountain_pass_bound(dc, rep.S, frac * r1_eigen.lambda1, 0.5, ref.profile("R1"),
                             s0_error=rep.s_error, lambda1_est=r1_eigen.lambda1)
    assert lb.strict


def test_level_bound_rejects_large_lambda(ref, r1_eigen):
    dc = ref.constants("R1")
    with pytest.raises(InvalidParams):
        mountain_pass_bound(dc, ref.best("R1").S, 1.2 * r1_eigen.lambda1, 0.5,
                            ref.profile("R1"), lambda1_est=r1_eigen.lambda1)
