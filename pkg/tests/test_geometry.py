import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfflow.errors import DomainError
from qfflow.geometry import (Mobius, apply, axis_base_point, classify, compose, conformal_factor,
                             distance, distance_to_axis, fixed_points)

coord = st.floats(-0.6, 0.6)
angle = st.floats(-math.pi, math.pi)
length = st.floats(0.05, 4.0)


def mobius(theta, ell, psi):
    return Mobius.rotation(theta) @ Mobius.translation(ell) @ Mobius.rotation(psi)


@given(coord, coord, angle, length, angle)
@settings(max_examples=60, deadline=None)
def test_isometry_preserves_distance(x, y, th, ell, ps):
    g = mobius(th, ell, ps)
    z, w = complex(x, y), complex(y, -x) * 0.9
    assert abs(distance(g(z), g(w)) - distance(z, w)) < 1e-9 * (1 + distance(z, w))


@given(angle, length, angle, angle, length, angle)
@settings(max_examples=40, deadline=None)
def test_compose_and_inverse(t1, l1, p1, t2, l2, p2):
    g, h = mobius(t1, l1, p1), mobius(t2, l2, p2)
    z = 0.3 - 0.2j
    assert abs(compose(g, h)(z) - g(h(z))) < 1e-10
    assert compose(g, g.inverse()).close_to(Mobius.identity(), 1e-10)
    assert abs(compose(g, h).det - 1) < 1e-12


@given(length, angle)
@settings(max_examples=40, deadline=None)
def test_translation_length_of_conjugate(ell, th):
    R = Mobius.rotation(th)
    g = R @ Mobius.translation(ell) @ R.inverse()
    c = classify(g)
    assert c.kind == "hyperbolic"
    assert abs(c.translation_length - ell) < 1e-9
    z0, _ = axis_base_point(g)
    assert distance_to_axis(g, z0) < 1e-7
    for p in fixed_points(g):
        assert abs(g(p) - p) < 1e-9


def test_classification_kinds():
    assert classify(Mobius.rotation(0.7)).kind == "elliptic"
    assert classify(Mobius.identity()).kind == "elliptic"
    assert classify(Mobius.translation(1.0)).kind == "hyperbolic"


def test_derivative_matches_finite_difference():
    g = mobius(0.3, 1.2, -0.4)
    z, h = 0.2 + 0.1j, 1e-6
    fd = (g(z + h) - g(z - h)) / (2 * h)
    _, d = apply(g, z)
    assert abs(fd - d) < 1e-8


def test_conformal_factor_origin():
    assert abs(conformal_factor(0.0) - math.log(2)) < 1e-15


def test_rejects_points_outside_disk():
    with pytest.raises(DomainError):
        distance(1.0 + 0j, 0j)
    with pytest.raises(ValueError):
        Mobius(0.1, 1.0)


def test_distance_from_origin():
    r = np.tanh(0.75)
    assert abs(distance(0j, complex(r)) - 1.5) < 1e-13
