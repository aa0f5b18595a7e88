import numpy as np
import pytest

from qfflow import qdiff
from qfflow.qdiff import (QuadraticDifferential, automorphy_residual, octagon_samples, project,
                          pullback_lambda, zero_count, zero_locations)


def test_projection_is_automorphic(group, A03):
    z = octagon_samples(group, 100, seed=3)
    for g in group.generators.values():
        assert np.max(automorphy_residual(A03, z, g)) < 1e-10
    assert A03.fit_residual < 1e-3


def test_truncated_series_residual_decreases_with_cutoff(group):
    med = qdiff.automorphy_study((1.0, 0.3, 0.1j), cutoffs=(2, 3, 4, 5), n=50, group=group)
    assert all(b < a for a, b in zip(med, med[1:]))


def test_normalization_fixes_sup_norm(group, A03):
    z = octagon_samples(group, 2000, seed=1, radius=0.99)
    a, _ = A03.evaluate(z)
    sup = np.max(np.abs(a) * ((1 - np.abs(z) ** 2) / 2) ** 2)
    assert 0.25 < sup <= 0.3 * 1.01


def test_negation_and_scaling(group, A03):
    z = octagon_samples(group, 10, seed=2)
    a, ap = A03.evaluate(z)
    an, apn = A03.negated().evaluate(z)
    assert np.allclose(an, -a) and np.allclose(apn, -ap)
    assert A03.scaled(0.0).is_zero
    assert np.allclose(A03.scaled(0.6).evaluate(z)[0], 2 * a)


def test_derivative_consistent(A03):
    z, h = 0.21 - 0.13j, 1e-6
    fd = (A03.evaluate(z + h)[0] - A03.evaluate(z - h)[0]) / (2 * h)
    assert abs(fd - A03.evaluate(z)[1]) < 1e-6 * (1 + abs(fd))


@pytest.mark.parametrize("seed", [(1.0, 0.3, 0.1j), (0.2, -1.0, 0.5)])
def test_four_zeros(seed):
    A = project(QuadraticDifferential(seed, 6, 0.3))
    assert zero_count(A) == 4


def test_zero_locations_are_zeros(A03):
    zs = zero_locations(A03)
    assert len(zs) == 4
    assert np.max(np.abs(A03.evaluate(zs)[0])) < 1e-9


def test_pullback_lambda_identity(A03):
    z, th, phi = 0.1 + 0.2j, 0.7, 0.4
    p = pullback_lambda(A03, z, th, phi)
    assert abs(p.v_lambda ** 2 / 4 + p.lam ** 2 - abs(p.a_value) ** 2 * np.exp(-4 * phi)) < 1e-14


def test_export_grid(tmp_path, A03):
    n = qdiff.export_grid_csv(A03, tmp_path / "a.csv", n=11)
    assert n == len((tmp_path / "a.csv").read_text().splitlines()) - 1
