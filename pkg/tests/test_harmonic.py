import numpy as np
import pytest

from qfflow import harmonic as hm
from qfflow.metrics import h_tensor


def test_klein_roundtrip_and_jacobian():
    z = np.array([0.3 + 0.2j, -0.5j])
    k = hm.to_klein(z)
    assert np.allclose(hm.from_klein(k), z)
    eps = 1e-7
    J = hm.klein_jacobian(k)
    for i, d in enumerate((1, 1j)):
        col = (hm.from_klein(k + eps * d) - hm.from_klein(k - eps * d)) / (2 * eps)
        assert np.allclose(J[:, 0, i], col.real, atol=1e-7) and np.allclose(J[:, 1, i], col.imag, atol=1e-7)


def test_identity_energy_is_area(mesh3, B0, A0, B03, A03):
    f = hm.DiscreteMap.identity(mesh3)
    assert abs(hm.dirichlet_energy(mesh3, f, h_tensor(B0, A0)) / (4 * np.pi) - 1) < 1e-8
    E = hm.dirichlet_energy(mesh3, f, h_tensor(B03, A03))
    assert abs(E - hm.area_integral(B03, A03)) < 1e-7 * E
    assert f.equivariance_residual() < 1e-12


def test_hopf_of_identity(mesh3, B03, A03):
    hs = hm.hopf_extract(mesh3, hm.DiscreteMap.identity(mesh3), h_tensor(B03, A03))
    assert hs.relative_l2(A03) < 1e-10


def test_heat_flow_returns_to_identity(mesh2, family2):
    B0 = family2.metric(0.0)
    h0 = h_tensor(B0, family2.A.scaled(0.0))
    f0 = hm.DiscreteMap.identity(mesh2).perturbed(0.25, 1)
    r = hm.heat_flow(mesh2, h0, f0)
    assert np.all(np.diff(r.energies) <= 0)
    assert r.map.distance_to_identity() < 0.1 * f0.distance_to_identity() + 1e-6


def test_wolf_identities(mesh3, B03, A03):
    z = mesh3.vertices[mesh3.representatives]
    w = hm.wolf_identities(B03, A03, z)
    assert w.residual_HL < 1e-8
    assert w.densities.identity_residual() < 1e-12


def test_orientation_reversal_detected(mesh2, B2, A03):
    f = hm.DiscreteMap(mesh2, np.conj(hm.DiscreteMap.identity(mesh2).values))
    from qfflow.errors import Degenerate

    with pytest.raises(Degenerate):
        hm.dirichlet_energy(mesh2, f, h_tensor(B2, A03))
