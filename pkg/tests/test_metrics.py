import numpy as np
import pytest

from qfflow import metrics as me
from qfflow.errors import Degenerate
from qfflow.qdiff import octagon_samples


def test_h_tensor_invariants(group, B03, A03):
    z = octagon_samples(group, 50, seed=8)
    for s in (1, -1):
        h = me.h_tensor(B03, A03, s)
        K = -1 + h.g_norm_sq_A(z)
        assert np.allclose(h.determinant_ratio(z), K ** 2, rtol=1e-12)
        assert np.allclose(h.half_trace_ratio(z), 1 + h.g_norm_sq_A(z), rtol=1e-12)
        assert np.all(np.linalg.eigvalsh(h.matrix(z)) > 0)


def test_h_plus_minus_average_is_conformal(group, B03, A03):
    z = octagon_samples(group, 10, seed=9)
    hp, hm = me.h_tensor(B03, A03, 1).matrix(z), me.h_tensor(B03, A03, -1).matrix(z)
    avg = 0.5 * (hp + hm)
    assert np.allclose(avg[:, 0, 1], 0) and np.allclose(avg[:, 0, 0], avg[:, 1, 1])


def test_quadratic_gradient(group, B03, A03):
    h = me.h_tensor(B03, A03, 1)
    z, d, eps = np.array([0.2 + 0.1j]), np.array([0.3 - 0.5j]), 1e-6
    q, hd, qx, qy = h.quadratic(z, d, gradient=True)
    M = h.matrix(z)[0]
    v = np.array([d[0].real, d[0].imag])
    assert abs(q[0] - v @ M @ v) < 1e-12
    fx = (h.quadratic(z + eps, d) - h.quadratic(z - eps, d)) / (2 * eps)
    fy = (h.quadratic(z + 1j * eps, d) - h.quadratic(z - 1j * eps, d)) / (2 * eps)
    assert abs(fx[0] - qx[0]) < 1e-6 and abs(fy[0] - qy[0]) < 1e-6


def test_reA_pairings(group, B03, A03):
    from qfflow.dynamics import UnitTangentState, frames

    z, th = 0.15 - 0.2j, 1.1
    vv, viv, _ = me.reA_pairings(B03, A03, z, th)
    fr = frames(B03, A03, UnitTangentState(z, th))
    assert abs(vv - 0.5 * fr.v_lambda) < 1e-13
    assert abs(viv + fr.lam) < 1e-13


def test_loop_shorten_hyperbolic(group, B0, A0):
    L, loop = me.loop_shorten(me.h_tensor(B0, A0), "a", 128)
    ell = 2 * np.arccosh(abs(group.eval("a").trace) / 2)
    assert abs(L - ell) < 1e-8
    assert loop.closure_residual() < 1e-12


def test_mls_residual_formulas():
    r = me.mls_residuals("a", 3.0, 0.4, 3.2, 2.8)
    assert r.max_residual() < 1e-15
    r = me.mls_residuals("a", 3.0, 0.4, 3.5, 2.8)
    assert r.residual_14 > 0.09


def test_inadmissible_scale_rejected(mesh2, A03):
    from qfflow.blaschke import solve_vortex

    big = A03.scaled(0.99)
    B = solve_vortex(mesh2, big)
    h = me.h_tensor(B, big)  # still admissible: |A|_g <= |A|_sigma < 1
    assert np.max(h.g_norm_sq_A(octagon_samples(mesh2.group, 100))) < 1
    with pytest.raises(Degenerate):
        me.h_tensor(solve_vortex(mesh2, A03.scaled(0.0)), A03.scaled(1.2))
