import io

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from ckn_lab.errors import ConservationDrift, DegenerateState, InsufficientDecay
from ckn_lab.params import ProblemParams, derive, preset, xi
from ckn_lab.phase import (OrbitOptions, PhaseState, first_integral, h_ratio, integrate_orbit,
                           peak_state, vector_field, write_orbit_csv)


@st.composite
def moderate_params(draw):
    N = draw(st.integers(min_value=3, max_value=5))
    p = draw(st.floats(min_value=1.5, max_value=min(3.5, N - 0.8)))
    a = draw(st.floats(min_value=0.0, max_value=0.5 * (N - p) / p))
    b = a + draw(st.floats(min_value=0.0, max_value=0.8))
    delta = (N - (a + 1.0) * p) / p
    assume(delta > 0.2)
    mu = draw(st.floats(min_value=0.1, max_value=0.8)) * delta ** p
    return ProblemParams(N=N, p=p, a=a, b=b, mu=mu)


def h_oracle(dc, t_end, ts):
    """y(t) from the scalar equation for H and the zero-level identity.

    Along V = 0 one has ``y^(p*-p) = -(p*/p) xi(H)`` and
    ``H' = -(a+1-b)p / ((p-1)(N-(a+1-b)p)) H^(2-p) xi(H)``, with H(0) = delta.
    """
    pr = dc.params
    p, N = pr.p, pr.N
    kap = (pr.a + 1 - pr.b) * p / ((p - 1) * (N - (pr.a + 1 - pr.b) * p))
    sol = solve_ivp(lambda t, H: [-kap * H[0] ** (2 - p) * xi(H[0], pr)], (0.0, t_end),
                    [dc.delta], method="DOP853", rtol=1e-13, atol=1e-15, dense_output=True)
    H = sol.sol(ts)[0]
    y = (-(dc.p_star / p) * np.array([xi(h, pr) for h in H])) ** (1.0 / (dc.p_star - p))
    return y


# -- peak, field, first integral -----------------------------------------------

def test_peak_state_r1():
    dc = derive(preset("R1"))
    s = peak_state(dc)
    assert s.t == 0.0 and s.y == dc.y_max
    assert s.z == pytest.approx(-0.5 * dc.y_max, rel=1e-15)
    # rounded values quoted for R1
    assert (s.y, s.z) == pytest.approx((0.81898, -0.40949), abs=1e-4)


def test_peak_state_r2():
    dc = derive(preset("R2"))
    ps = 15 / 2.75
    y = ((ps / 3) * ((1.25 / 3) ** 3 - 0.05)) ** (1 / (ps - 3))
    assert peak_state(dc).y == pytest.approx(y, rel=1e-14)


@pytest.mark.parametrize("name", ["R0", "R1", "R2"])
def test_peak_on_zero_level(name):
    dc = derive(preset(name))
    s = peak_state(dc)
    assert abs(first_integral(s.y, s.z, dc)) <= 1e-15
    assert h_ratio(s, dc) == pytest.approx(dc.delta, rel=1e-15)


@settings(max_examples=200, deadline=None)
@given(moderate_params())
def test_peak_identity_property(pr):
    dc = derive(pr)
    s = peak_state(dc)
    terms = [s.y ** dc.p_star / dc.p_star, pr.mu * s.y ** pr.p / pr.p, abs(dc.delta * s.y * s.z)]
    assert abs(first_integral(s.y, s.z, dc)) <= 1e-13 * max(terms)
    dy, _ = vector_field(s, dc)
    assert abs(dy) <= 1e-14 * dc.delta * s.y


def test_vector_field_values():
    dc = derive(preset("R1"))
    assert vector_field(PhaseState(0.0, 0.0, 0.0), dc) == (0.0, 0.0)
    s = peak_state(dc)
    dy, dz = vector_field(s, dc)
    assert dy == pytest.approx(0.0, abs=1e-15)
    expected = -0.5 * s.z - s.y ** 5 - 0.1 * s.y
    assert dz == pytest.approx(expected, rel=1e-14)
    assert dz < 0.0


def test_vector_field_p3_continuous_at_zero():
    dc = derive(preset("R2"))
    a = vector_field(PhaseState(0.0, 0.1, -1e-12), dc)
    b = vector_field(PhaseState(0.0, 0.1, 0.0), dc)
    assert a == pytest.approx(b, abs=1e-5)


def test_first_integral_values():
    dc = derive(preset("R1"))
    assert first_integral(0.0, 0.0, dc) == 0.0
    y, z = 0.5, -0.1
    expected = y ** 6 / 6 + 0.1 * y ** 2 / 2 + 0.5 * z ** 2 + 0.5 * y * z
    assert first_integral(y, z, dc) == pytest.approx(expected, rel=1e-15)
    assert first_integral(y, z, dc) < 0.0


def test_first_integral_conserved_by_field():
    # dV/dt = V_y y' + V_z z' vanishes identically
    dc = derive(preset("R2"))
    rng = np.random.default_rng(0)
    for y, z in rng.uniform([0.05, -0.3], [0.4, -0.01], size=(20, 2)):
        dy, dz = vector_field(PhaseState(0.0, y, z), dc)
        h = 1e-7
        vy = (first_integral(y + h, z, dc) - first_integral(y - h, z, dc)) / (2 * h)
        vz = (first_integral(y, z + h, dc) - first_integral(y, z - h, dc)) / (2 * h)
        assert abs(vy * dy + vz * dz) <= 1e-7 * (abs(vy * dy) + abs(vz * dz))


def test_h_ratio_degenerate():
    dc = derive(preset("R1"))
    with pytest.raises(DegenerateState):
        h_ratio(PhaseState(0.0, 0.0, -0.1), dc)


# -- integrated orbit -------------------------------------------------------------

@pytest.mark.parametrize("name, limit", [("R1", 1e-8), ("R2", 1e-8), ("R0", 1e-8)])
def test_conservation(ref, name, limit):
    orb = ref.orbit(name)
    assert orb.max_V_drift <= limit
    assert np.max(np.abs(orb.V)) <= limit


@pytest.mark.parametrize("name", ["R0", "R1", "R2"])
def test_monotone_single_peak(ref, name):
    orb = ref.orbit(name)
    k = orb.peak_index
    assert orb.t[k] == 0.0
    assert np.all(np.diff(orb.y[: k + 1]) > 0)
    assert np.all(np.diff(orb.y[k:]) < 0)
    assert int(np.argmax(orb.y)) == k


@pytest.mark.parametrize("name", ["R0", "R1", "R2"])
def test_bounds(ref, name):
    orb = ref.orbit(name)
    dc = orb.constants
    p = dc.params.p
    assert np.all(orb.y > 0) and np.all(orb.y <= dc.y_max)
    z_bound = (dc.delta * dc.y_max) ** (p - 1) * (dc.l2 / dc.delta) ** (p - 1) * (1 + 1e-8)
    assert np.all(np.abs(orb.z) <= z_bound)
    assert np.all(orb.z < 0)


@pytest.mark.parametrize("name", ["R1", "R2"])
def test_h_monotone_with_limits(ref, name):
    orb = ref.orbit(name)
    dc = orb.constants
    H = orb.H
    assert np.all(np.diff(H) >= -1e-12)
    assert H[orb.peak_index] == pytest.approx(dc.delta, rel=1e-14)
    assert H[0] == pytest.approx(dc.l1, rel=0.01)
    assert H[-1] == pytest.approx(dc.l2, rel=0.01)


def test_r1_h_endpoints(ref):
    orb = ref.orbit("R1")
    assert orb.H[0] == pytest.approx(0.11270, rel=0.01)
    assert orb.H[-1] == pytest.approx(0.88730, rel=0.01)
    s = list(orb.states())
    assert h_ratio(s[0], orb.constants) == pytest.approx(0.11270, rel=0.01)
    assert h_ratio(s[-1], orb.constants) == pytest.approx(0.88730, rel=0.01)


@pytest.mark.parametrize("name, t_end", [("R1", 8.0), ("R1", -8.0), ("R2", 25.0), ("R2", -25.0)])
def test_against_h_equation(ref, name, t_end):
    orb = ref.orbit(name)
    sel = (orb.t * np.sign(t_end) >= 0) & (np.abs(orb.t) <= abs(t_end))
    y = h_oracle(orb.constants, t_end, orb.t[sel])
    assert sel.sum() > 100
    assert np.max(np.abs(orb.y[sel] / y - 1)) <= 1e-6


def test_floor_reached(ref):
    orb = ref.orbit("R1")
    dc = orb.constants
    floor = dc.y_max * orb.options.y_floor_factor
    assert orb.y[0] <= floor and orb.y[-1] <= floor
    assert orb.y[1] > floor and orb.y[-2] > floor


def test_insufficient_decay():
    with pytest.raises(InsufficientDecay):
        integrate_orbit(derive(preset("R1")), OrbitOptions(t_max=5.0))


def test_conservation_drift():
    with pytest.raises(ConservationDrift):
        integrate_orbit(derive(preset("R1")), OrbitOptions(conservation_tol=1e-30))


def test_drift_limit_default():
    assert OrbitOptions().drift_limit == pytest.approx(1e-8)
    assert OrbitOptions(rtol=1e-8).drift_limit == pytest.approx(1e-6)


@settings(max_examples=8, deadline=None)
@given(moderate_params())
def test_orbit_property(pr):
    dc = derive(pr)
    # y decays like exp(-|delta - l| |t|); a slow side cannot drop six decades by t_max
    assume(min(dc.delta - dc.l1, dc.l2 - dc.delta) > 0.1)
    orb = integrate_orbit(dc)
    assert orb.max_V_drift <= 1e-8
    k = orb.peak_index
    assert np.all(np.diff(orb.y[: k + 1]) > 0) and np.all(np.diff(orb.y[k:]) < 0)
    # H settles onto l1, l2 up to integration error near the floor
    tol = 1e-6 * dc.l2
    assert np.all(np.diff(orb.H) >= -tol)
    assert dc.l1 - tol <= orb.H[0] < dc.delta < orb.H[-1] <= dc.l2 + tol


def test_orbit_csv(ref):
    orb = ref.orbit("R1")
    buf = io.StringIO()
    write_orbit_csv(orb, buf)
    text = buf.getvalue()
    lines = text.split("\r\n")
    assert lines[0] == "t,y,z,V,H"
    assert len(lines) == len(orb) + 2 and lines[-1] == ""
    row = [float(x) for x in lines[1 + orb.peak_index].split(",")]
    assert row[0] == 0.0 and row[1] == orb.constants.y_max


def test_orbit_csv_to_path(ref, tmp_path):
    dest = tmp_path / "orbit.csv"
    write_orbit_csv(ref.orbit("R2"), dest)
    data = np.loadtxt(dest, delimiter=",", skiprows=1)
    assert data.shape == (len(ref.orbit("R2")), 5)
