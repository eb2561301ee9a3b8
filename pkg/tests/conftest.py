import numpy as np
import pytest

from ckn_lab.params import derive, preset
from ckn_lab.phase import integrate_orbit
from ckn_lab.profile import from_orbit
from ckn_lab.quadrature import best_constant


class _Cache:
    """Session-wide memo so each reference orbit is integrated once."""

    def __init__(self):
        self._store = {}

    def get(self, key, make):
        if key not in self._store:
            self._store[key] = make()
        return self._store[key]


_CACHE = _Cache()


def constants(name):
    return _CACHE.get(("dc", name), lambda: derive(preset(name)))


def orbit(name):
    return _CACHE.get(("orbit", name), lambda: integrate_orbit(constants(name)))


def profile(name):
    return _CACHE.get(("profile", name), lambda: from_orbit(orbit(name)))


def best(name):
    return _CACHE.get(("best", name), lambda: best_constant(constants(name), profile=profile(name)))


@pytest.fixture(scope="session")
def ref():
    class Ref:
        pass

    r = Ref()
    r.constants = constants
    r.orbit = orbit
    r.profile = profile
    r.best = best
    return r


def quadratic_roots(N, p, a, mu):
    """Roots of s^2 - (N - 2(a+1)) s + mu for p = 2."""
    assert p == 2.0
    k = N - (a + 1.0) * p
    disc = np.sqrt(k * k - 4.0 * mu)
    return (k - disc) / 2.0, (k + disc) / 2.0
