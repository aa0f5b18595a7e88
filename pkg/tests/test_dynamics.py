import numpy as np
import pytest

from qfflow import dynamics as dy
from qfflow.qdiff import octagon_samples


def states(group, n, seed):
    rng = np.random.default_rng(seed)
    z = octagon_samples(group, n, seed=seed)
    return [dy.UnitTangentState(complex(w), float(t)) for w, t in zip(z, rng.uniform(0, 2 * np.pi, n))]


def test_structure_equations(group, B03, A03):
    for s in states(group, 10, 1):
        r = dy.structure_residuals(B03, A03, s)
        assert max(r.bracket_VX, r.bracket_XH, r.bracket_HV) < 1e-4
        assert max(r.holomorphy_1, r.holomorphy_2) < 1e-4
        assert r.norm_identity < 1e-12


def test_stable_and_unstable_bundles(group, B03, A03):
    for s in states(group, 3, 2):
        r = dy.weak_bundle_residual(B03, A03, s, 5.0)
        assert r.stable_residual < 1e-4
        assert r.unstable_alignment_rate > 0


def test_corrupted_rs_is_detected(group, B03, A03):
    s = states(group, 1, 3)[0]
    assert dy.weak_bundle_residual(B03, A03, s, 5.0, corrupt_rs=True).stable_residual > 1e-2


def test_ru_is_minus_rs_of_negated(group, B03, A03):
    for s in states(group, 20, 4):
        assert dy.frames(B03, A03, s).r_u == -dy.frames(B03, A03.negated(), s).r_s


def test_volume_form(group, B03, A03):
    s = states(group, 1, 5)[0]
    det, expected = dy.liouville_determinant(B03, A03, s, 2.0)
    assert abs(det - expected) < 1e-6 * expected


def test_flow_is_equivariant(group, B03, A03):
    s = states(group, 1, 6)[0]
    g = group.generators["b"]
    t1 = dy.unlift(dy.integrate(B03, A03, s, 1.5, 1e-12))
    t2 = dy.unlift(dy.integrate(B03, A03, s.moved(g), 1.5, 1e-12))
    img = t1.moved(g)
    assert abs(img.z - t2.z) < 1e-8
    assert abs(np.angle(np.exp(1j * (img.theta - t2.theta)))) < 1e-8


def test_geodesic_flow_speed(group, B0, A0):
    s = dy.UnitTangentState(0j, 0.0)
    tr = dy.unlift(dy.integrate(B0, A0, s, 1.0, 1e-12))
    assert abs(tr.z - np.tanh(0.5)) < 1e-9


def test_integrate_rejects_bad_tolerance(B0, A0):
    with pytest.raises(ValueError):
        dy.integrate(B0, A0, dy.UnitTangentState(0j, 0.0), 1.0, tol=1e-3)


def test_dense_export(tmp_path, B03, A03):
    tr = dy.integrate(B03, A03, dy.UnitTangentState(0.1j, 0.3), 1.0, samples=np.linspace(0, 1, 21))
    assert dy.export_dense_csv(tr, tmp_path / "t.csv") == 21
