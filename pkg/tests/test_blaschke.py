import numpy as np

from qfflow import blaschke
from qfflow.qdiff import octagon_samples


def test_mesh_topology(mesh2, mesh3):
    for m in (mesh2, mesh3):
        assert m.euler_characteristic() == -2
        assert abs(m.total_area() - 4 * np.pi) < 1e-9


def test_zero_differential_gives_hyperbolic_metric(B0):
    assert np.max(np.abs(B0.u)) <= 1e-10
    assert np.allclose(B0.vertex_curvature(), -1)


def test_newton_and_curvature_range(B03):
    rec = B03.newton
    assert rec.residuals[-1] <= 1e-10 and rec.iterations <= 10
    K = B03.vertex_curvature()
    assert K.min() >= -1 - 1e-12 and K.max() < 0
    assert B03.u.min() > 0  # maximum principle for A != 0


def test_gauss_bonnet(B03):
    assert abs(blaschke.gauss_bonnet(B03) + 4 * np.pi) < 1e-3 * 4 * np.pi


def test_curvature_identity_and_equivariance(group, B03):
    z = octagon_samples(group, 50, seed=4)
    assert np.max(blaschke.curvature_residual(B03, z)) < 1e-6
    for g in group.generators.values():
        assert np.max(blaschke.equivariance_residual(B03, z, g)) < 1e-9


def test_smooth_and_mesh_agree(group, B03):
    z = octagon_samples(group, 50, seed=5)
    us = B03.u_reduced(z, mode="smooth")[0]
    um = B03.u_reduced(z, mode="mesh")[0]
    assert np.max(np.abs(us - um)) < 1e-2 * np.max(np.abs(us))


def test_fem_converges(group, A03):
    """Error in u against a level-4 reference drops under refinement."""
    ref = blaschke.solve_vortex(blaschke.build_mesh(group, 4), A03)
    B4 = ref
    z = B4.mesh.vertices[B4.mesh.representatives]
    errs = []
    for lev in (1, 2):
        B = blaschke.solve_vortex(blaschke.build_mesh(group, lev), A03)
        ucoarse = B.u_reduced(group.reduce_many(z)[0], mode="mesh")[0]
        errs.append(np.max(np.abs(ucoarse - B4.u)))
    assert errs[1] < errs[0]


def test_export(tmp_path, B03):
    n = blaschke.export_csv(B03, tmp_path / "m.csv")
    assert n == B03.mesh.n_ids == len((tmp_path / "m.csv").read_text().splitlines()) - 1
