import math

import numpy as np
import pytest

from qfflow.errors import NotHyperbolic
from qfflow.orbits import find_orbit, orbit_integral


@pytest.mark.parametrize("word", ["a", "C", "ab"])
def test_geodesic_periods(group, B0, A0, word):
    o = find_orbit(B0, A0, word)
    ell = 2 * math.acosh(abs(group.eval(word).trace) / 2)
    assert abs(o.period - ell) < 1e-7
    assert abs(o.integral_v_lambda) < 1e-9


def test_orbit_at_t03(family3, B03, A03):
    o = find_orbit(B03, A03, "a", family=family3)
    om = find_orbit(B03, A03.negated(), "a", family=family3)
    assert o.residual < 1e-9
    assert abs(o.period - om.period) < 1e-6
    assert abs(o.integral_v_lambda) > 1e-3
    assert abs(o.integral_v_lambda + om.integral_v_lambda) < 1e-6
    ev = np.sort(np.abs(o.transverse_eigenvalues()))
    assert ev[0] < 1 < ev[1]
    assert abs(orbit_integral(o, "v_lambda") - o.integral_v_lambda) < 1e-12


def test_trivial_word_rejected(B0, A0):
    with pytest.raises(NotHyperbolic):
        find_orbit(B0, A0, "aA")
