import numpy as np

from qfflow import conjugacy as cj
from qfflow.dynamics import UnitTangentState
from qfflow.qdiff import octagon_samples


def states(group, n, seed):
    rng = np.random.default_rng(seed)
    z = octagon_samples(group, n, seed=seed)
    return [UnitTangentState(complex(w), float(t)) for w, t in zip(z, rng.uniform(0, 2 * np.pi, n))]


def test_a_operator(group, B03, A03):
    for z in octagon_samples(group, 10, seed=1):
        op = cj.a_operator(B03, A03, z)
        assert abs(op.trace) < 1e-14
        assert op.square_residual() < 1e-13


def test_bundle_map_lands_on_h_circle(group, B03, A03):
    for s in states(group, 50, 2):
        b = cj.i_map(B03, A03, s)
        assert abs(b.h_norm - 1) < 1e-12
        assert b.inverse_residual < 1e-12
        assert cj.rotation_commutation(B03, A03, s, 0.9) < 1e-10


def test_coframe_pullback(group, B03, A03):
    for s in states(group, 5, 3):
        c = cj.coframe_residuals(B03, A03, s)
        assert max(c.res_alpha, c.res_beta) < 1e-5
        assert c.res_psi < 1e-4
        assert c.res_volume < 1e-4 and c.volume_factor > 0
        assert abs(c.alpha_F - c.alpha_F_expected) < 1e-5


def test_identity_at_zero_differential(B0, A0):
    s = UnitTangentState(0.2 + 0.1j, 0.4)
    P, _, _ = cj.pulled_back_coframe(B0, A0, s)
    assert np.allclose(P, np.eye(3), atol=1e-8)


def test_connection_crosscheck(B03, A03):
    assert cj.connection_crosscheck(B03, A03, 0.3 - 0.1j) < 1e-6
