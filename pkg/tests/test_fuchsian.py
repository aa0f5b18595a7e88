import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from qfflow.errors import NonTermination, ResourceError
from qfflow.fuchsian import (LETTERS, Word, build_octagon_group, enumerate_ball, interior_angle,
                             is_torsion_free_sample, octagon_area, parse_words, vertex_cycle)
from qfflow.geometry import Mobius, classify

GEN_LENGTH = 2 * math.acosh(1 + math.sqrt(2))


def test_generator_translation_lengths(group):
    for c, g in group.generators.items():
        assert abs(classify(g).translation_length - GEN_LENGTH) < 1e-12
    assert abs(GEN_LENGTH - 3.057141) < 1e-6


def test_octagon_angles_and_area(group):
    assert abs(sum(interior_angle(group, j) for j in range(8)) - 2 * math.pi) < 1e-12
    assert abs(octagon_area(group) - 4 * math.pi) < 1e-10


def test_vertex_cycle_is_identity(group):
    P, letters, angle = vertex_cycle(group)
    assert P.close_to(Mobius.identity(), 1e-9)
    assert len(letters) == 8
    assert abs(angle - 2 * math.pi) < 1e-10


def test_ball_sizes_and_torsion_free(group):
    assert [len(enumerate_ball(group, n)) for n in range(4)] == [1, 9, 65, 457]
    assert is_torsion_free_sample(group, 3)
    with pytest.raises(ResourceError):
        group.ball(99)


def test_words():
    assert Word("aAb") == "b"
    assert Word("ab").inverse() == "BA"
    assert parse_words("a, b;ab") == ["a", "b", "ab"]
    with pytest.raises(ValueError):
        Word("ax")


def test_side_pairing_maps_sides(group):
    from qfflow.qdiff import side_points

    for j in range(8):
        c, partner = group.side_pairings[j]
        img = group.generators[c](side_points(group, j, 20))
        other = side_points(group, partner, 400, np.linspace(0, 1, 400))
        assert np.max(np.min(np.abs(img[:, None] - other[None, :]), axis=1)) < 1e-2


GROUP = build_octagon_group()


@given(st.text(alphabet=LETTERS, min_size=1, max_size=5), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
@settings(max_examples=50, deadline=None)
def test_reduction_lands_in_octagon(letters, x, y):
    z0 = complex(x, y)
    assume(GROUP.contains(z0))
    z = GROUP.eval(letters)(z0)
    if abs(z) > 0.999999:
        # guard: reduction precision degrades like 1/(1 - |z|)^2 near the circle
        with pytest.raises(NonTermination):
            GROUP.reduce(z)
        return
    zr, w = GROUP.reduce(z)
    assert GROUP.contains(zr, tol=1e-9)
    assert abs(GROUP.eval(w)(z) - zr) < 1e-8
