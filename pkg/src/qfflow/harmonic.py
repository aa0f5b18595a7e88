"""Discrete harmonic maps into (M, h), Dirichlet energy, Hopf differentials and
the pointwise energy identities for the identity map onto h₊.

Maps are piecewise affine in the Klein model, in which the geodesic mesh
triangles are straight; f = id is therefore represented exactly.  Image
points live in the Poincaré disk and are carried between the two models by
k = 2z / (1 + |z|²).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .blaschke import BlaschkeMetric, SurfaceMesh, _lumped_mass
from .errors import Degenerate, StepCollapse
from .fuchsian import boundary_radius
from .metrics import TensorMetric


# --- Klein model ---------------------------------------------------------------

def to_klein(z):
    return 2 * z / (1 + np.abs(z) ** 2)


def from_klein(k):
    return k / (1 + np.sqrt(1 - np.abs(k) ** 2))


def klein_jacobian(k) -> np.ndarray:
    """Real Jacobian ∂z/∂k, shape (..., 2, 2)."""
    k = np.asarray(k, dtype=complex)
    s = np.sqrt(1 - np.abs(k) ** 2)
    f = 1 / (1 + s)
    fp = 1 / (2 * s * (1 + s) ** 2)
    kv = np.stack([k.real, k.imag], -1)
    return f[..., None, None] * np.eye(2) + 2 * fp[..., None, None] * kv[..., :, None] * kv[..., None, :]


def _duffy_rule(n: int = 6):
    """Collapsed Gauss rule on the reference triangle: barycentrics and weights
    (weights sum to 1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    x, w = 0.5 * (x + 1), 0.5 * w
    U, V = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w) * (1 - U)
    l1, l2 = U.ravel(), (V * (1 - U)).ravel()
    lam = np.stack([1 - l1 - l2, l1, l2], -1)
    return lam, 2 * W.ravel()


def mesh_resolution(mesh: SurfaceMesh) -> float:
    """Shortest hyperbolic edge length."""
    e = mesh.vertices[mesh.edges]
    d = np.abs((e[:, 0] - e[:, 1]) / (1 - np.conj(e[:, 1]) * e[:, 0]))
    return float(np.min(2 * np.arctanh(d)))


# --- maps ----------------------------------------------------------------------

@dataclass
class DiscreteMap:
    """Images of the seam-identified mesh vertices; seam copies follow by
    equivariance, f(δ rep) = δ f(rep)."""

    mesh: SurfaceMesh
    values: np.ndarray  # complex, one per vertex id

    @classmethod
    def identity(cls, mesh: SurfaceMesh) -> "DiscreteMap":
        return cls(mesh, mesh.vertices[mesh.representatives].astype(complex))

    def perturbed(self, amplitude: float, seed: int = 0) -> "DiscreteMap":
        """Random displacement of hyperbolic size about ``amplitude`` times the
        shortest mesh edge."""
        rng = np.random.default_rng(seed)
        z = self.values
        d = rng.normal(size=len(z)) + 1j * rng.normal(size=len(z))
        size = amplitude * mesh_resolution(self.mesh)
        return DiscreteMap(self.mesh, z + size * 0.5 * (1 - np.abs(z) ** 2) * d / np.sqrt(2))

    def corner_images(self, values=None) -> np.ndarray:
        m = self.mesh
        w = self.values if values is None else values
        tri = m.triangles
        a, b = m.rep_a[tri], m.rep_b[tri]
        x = w[m.ident[tri]]
        return (a * x + b) / (np.conj(b) * x + np.conj(a))

    def equivariance_residual(self) -> float:
        """Seam copies are imaged through their representative, so f(δ rep) = δ f(rep)
        holds by construction; what remains is the domain relation copy = δ(rep)."""
        m = self.mesh
        own = m.vertices[m.representatives[m.ident]]
        copies = (m.rep_a * own + m.rep_b) / (np.conj(m.rep_b) * own + np.conj(m.rep_a))
        return float(np.max(np.abs(copies - m.vertices)))

    def distance_to_identity(self) -> float:
        """Max hyperbolic distance between f(v) and v over vertex ids."""
        z = self.mesh.vertices[self.mesh.representatives]
        w = self.values
        d = np.abs((w - z) / (1 - np.conj(z) * w))
        return float(np.max(2 * np.arctanh(np.minimum(d, 1 - 1e-16))))


class _Geometry:
    """Per-triangle domain data in Klein coordinates."""

    def __init__(self, mesh: SurfaceMesh, order: int = 6):
        self.mesh = mesh
        K = to_klein(mesh.vertices[mesh.triangles])
        self.K = K
        e1, e2 = K[:, 1] - K[:, 0], K[:, 2] - K[:, 0]
        E = np.stack([np.stack([e1.real, e2.real], -1), np.stack([e1.imag, e2.imag], -1)], -2)
        self.Einv = np.linalg.inv(E)
        self.area = 0.5 * np.abs(np.linalg.det(E))
        lam, w = _duffy_rule(order)
        self.lam, self.w = lam, w
        self.P = K @ lam.T  # quadrature points (nT, Q) in Klein coordinates
        Jd = klein_jacobian(self.P)
        JtJ = np.einsum("...ki,...kj->...ij", Jd, Jd)
        # conformal domain: (J^T J)^{-1} |det J|, integrated for the frozen energy
        dens = np.linalg.inv(JtJ) * np.abs(np.linalg.det(Jd))[..., None, None]
        self.Wt = np.einsum("q,tqij->tij", w, dens) * self.area[:, None, None]
        self.Jd = Jd
        self.bary = K.mean(axis=1)
        self.Jb = klein_jacobian(self.bary)


def _affine(geo: _Geometry, Kimg: np.ndarray) -> np.ndarray:
    """Df in Klein coordinates, shape (nT, 2, 2)."""
    d1, d2 = Kimg[:, 1] - Kimg[:, 0], Kimg[:, 2] - Kimg[:, 0]
    D = np.stack([np.stack([d1.real, d2.real], -1), np.stack([d1.imag, d2.imag], -1)], -2)
    return D @ geo.Einv


def _h_klein(h: TensorMetric, k) -> np.ndarray:
    J = klein_jacobian(k)
    hz = h.matrix(from_klein(k))
    return np.einsum("...ki,...kl,...lj->...ij", J, hz, J)


def _check_orientation(Df):
    if np.any(np.linalg.det(Df) <= 0):
        raise Degenerate("an image triangle is degenerate or reversed")


def _domain_factor(domain: str, B: BlaschkeMetric, z):
    """e^{2ψ} of the conformal domain metric at disk points z."""
    if domain == "sigma":
        return 4.0 / (1 - np.abs(z) ** 2) ** 2
    if domain == "g":
        return np.exp(2 * B.phi_derivatives(z.ravel())[0]).reshape(z.shape)
    raise ValueError("domain must be 'sigma' or 'g'")


def dirichlet_energy(mesh: SurfaceMesh, f: DiscreteMap, h: TensorMetric, domain: str = "g",
                     order: int = 6, geometry: Optional[_Geometry] = None) -> float:
    """E(f) = ∫ ½ Tr_dom(f*h) dvol_dom by collapsed Gauss quadrature per
    geodesic triangle, with the domain metric σ or g written out explicitly."""
    geo = geometry or _Geometry(mesh, order)
    Kimg = to_klein(f.corner_images())
    Df = _affine(geo, Kimg)
    _check_orientation(Df)
    dP = geo.P - geo.K[:, 0, None]
    iv = np.einsum("tij,tqj->tqi", Df, np.stack([dP.real, dP.imag], -1))
    img = Kimg[:, 0, None] + iv[..., 0] + 1j * iv[..., 1]
    hK = _h_klein(h, img)
    pull = np.einsum("tki,tqkl,tlj->tqij", Df, hK, Df)
    zq = from_klein(geo.P)
    c = _domain_factor(domain, h.B, zq)
    JtJ = np.einsum("...ki,...kj->...ij", geo.Jd, geo.Jd)
    dom = c[..., None, None] * JtJ
    e = 0.5 * np.trace(np.linalg.solve(dom, pull), axis1=-2, axis2=-1)
    dvol = np.sqrt(np.linalg.det(dom))
    return float(np.sum(e * dvol * geo.w * geo.area[:, None]))


def area_integral(B: BlaschkeMetric, A, nodes: int = 48) -> float:
    """∫ (1 + |A|²_g) dA_g over the octagon in polar coordinates (independent of the mesh)."""
    group = B.group
    ang = np.angle(group.octagon_vertices)
    x, w = np.polynomial.legendre.leggauss(nodes)
    total = 0.0
    for k in range(8):
        lo, hi = ang[(k - 1) % 8], ang[k]
        if hi < lo:
            hi += 2 * np.pi
        th = lo + (hi - lo) * 0.5 * (x + 1)
        wt = (hi - lo) * 0.5 * w
        R = boundary_radius(group, th, k)
        r = R[:, None] * 0.5 * (x[None, :] + 1)
        wr = R[:, None] * 0.5 * w[None, :]
        z = r * np.exp(1j * th[:, None])
        phi = B.phi_derivatives(z.ravel())[0].reshape(z.shape)
        if A.is_zero:
            dens = np.exp(2 * phi)
        else:
            a, _ = A.evaluate(z.ravel())
            dens = np.exp(2 * phi) + np.abs(a.reshape(z.shape)) ** 2 * np.exp(-2 * phi)
        total += float(np.sum(wt[:, None] * wr * r * dens))
    return total


# --- heat flow -------------------------------------------------------------------

class _DiscreteEnergy:
    """Σ_T ∫_T ½ tr((J^T J)^{-1}|det J| Df^T h_K(F) Df) over each domain triangle.

    ``order=None`` freezes h_K at the image barycenter; an integer uses the
    collapsed Gauss rule of that order with h_K at the images of the nodes."""

    def __init__(self, mesh, h, order: Optional[int] = 2):
        self.mesh, self.h, self.order = mesh, h, order
        self.geo = _Geometry(mesh, order or 2)
        if order is not None:
            JtJ = np.einsum("...ki,...kj->...ij", self.geo.Jd, self.geo.Jd)
            dens = np.linalg.inv(JtJ) * np.abs(np.linalg.det(self.geo.Jd))[..., None, None]
            self.dens = dens * (self.geo.w * self.geo.area[:, None])[..., None, None]

    def per_triangle(self, corners):
        geo = self.geo
        Kimg = to_klein(corners)
        Df = _affine(geo, Kimg)
        if self.order is None:
            hK = _h_klein(self.h, Kimg.mean(axis=1))
            M = np.einsum("tki,tkl,tlj->tij", Df, hK, Df)
            return 0.5 * np.einsum("tij,tji->t", geo.Wt, M), Df
        dP = geo.P - geo.K[:, 0, None]
        iv = np.einsum("tij,tqj->tqi", Df, np.stack([dP.real, dP.imag], -1))
        hK = _h_klein(self.h, Kimg[:, 0, None] + iv[..., 0] + 1j * iv[..., 1])
        M = np.einsum("tki,tqkl,tlj->tqij", Df, hK, Df)
        return 0.5 * np.einsum("tqij,tqji->t", self.dens, M), Df

    def energy(self, fm: DiscreteMap, values):
        E, Df = self.per_triangle(fm.corner_images(values))
        return float(E.sum()), Df

    def gradient(self, fm: DiscreteMap, values, eps=1e-7):
        m = self.mesh
        tri = m.triangles
        ids = m.ident[tri]
        a, b = m.rep_a[tri], m.rep_b[tri]
        base = values[ids]
        g = np.zeros(len(values), complex)
        for c in range(3):
            for d in (1.0, 1j):
                out = []
                for sgn in (1, -1):
                    x = base.copy()
                    x[:, c] += sgn * eps * d
                    corners = (a * x + b) / (np.conj(b) * x + np.conj(a))
                    out.append(self.per_triangle(corners)[0])
                part = (out[0] - out[1]) / (2 * eps)
                np.add.at(g, ids[:, c], part * d)
        return g


def _preconditioner(mesh: SurfaceMesh, h: TensorMetric):
    """Hermitian model Hessian Σ_T (cot/2) c_T |δ'_i dw_i - δ'_j dw_j|² with c_T
    the conformal part of h at the triangle barycenter and δ' the deck
    derivative carrying a representative to its seam copy."""
    v = mesh.vertices[mesh.triangles]
    ids = mesh.ident[mesh.triangles]
    a, b = mesh.rep_a[mesh.triangles], mesh.rep_b[mesh.triangles]
    rep = mesh.vertices[mesh.representatives[ids]]
    dp = 1.0 / (np.conj(b) * rep + np.conj(a)) ** 2
    c = 0.5 * np.trace(h.matrix(v.mean(axis=1)), axis1=-2, axis2=-1)
    area2 = ((v[:, 1] - v[:, 0]).conjugate() * (v[:, 2] - v[:, 0])).imag
    rows, cols, vals = [], [], []
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        cot = ((v[:, j] - v[:, i]).conjugate() * (v[:, k] - v[:, i])).real / area2
        wgt = 0.5 * cot * c
        p, q = ids[:, j], ids[:, k]
        dj, dk = dp[:, j], dp[:, k]
        rows += [p, q, p, q]
        cols += [q, p, p, q]
        vals += [-wgt * np.conj(dj) * dk, -wgt * np.conj(dk) * dj, wgt * np.abs(dj) ** 2, wgt * np.abs(dk) ** 2]
    n = mesh.n_ids
    S = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    reg = sp.diags(1e-3 * _lumped_mass(mesh) * 4.0 / (1 - np.abs(mesh.vertices[mesh.representatives]) ** 2) ** 2)
    return (S + reg).tocsc()


@dataclass
class HeatFlowResult:
    map: DiscreteMap
    energies: List[float]
    gradient_norms: List[float]
    steps: List[float]


def heat_flow(mesh: SurfaceMesh, h: TensorMetric, f0: DiscreteMap, tol: float = 1e-6,
              max_iter: int = 500, step: float = 1.0, order: Optional[int] = 2) -> HeatFlowResult:
    """Gradient descent on the discrete energy (see _DiscreteEnergy for
    ``order``), preconditioned by a metric-weighted cotangent Laplacian;
    steps halve until the energy does not increase and grow after each
    accepted step."""
    en = _DiscreteEnergy(mesh, h, order)
    solve = spla.factorized(_preconditioner(mesh, h))
    w = f0.values.copy()
    E, Df = en.energy(f0, w)
    _check_orientation(Df)
    energies, norms, steps = [E], [], []
    tau = step
    for _ in range(max_iter):
        g = en.gradient(f0, w)
        gn = float(np.max(np.abs(g)))
        norms.append(gn)
        if gn <= tol:
            return HeatFlowResult(DiscreteMap(mesh, w), energies, norms, steps)
        d = -solve(g)
        while True:
            wn = w + tau * d
            try:
                En, Dfn = en.energy(f0, wn)
                ok = En <= E and np.all(np.linalg.det(Dfn) > 0)
            except (FloatingPointError, ValueError, Degenerate):
                ok = False
            if ok:
                break
            tau *= 0.5
            if tau < 1e-14:
                raise StepCollapse(f"heat-flow step underflow at gradient {gn:.2e}", DiscreteMap(mesh, w))
        w, E = wn, En
        energies.append(E)
        steps.append(tau)
        tau = min(2 * tau, 4 * step)
    raise StepCollapse(f"heat flow did not reach tolerance in {max_iter} steps (gradient {gn:.2e})",
                       DiscreteMap(mesh, w))


# --- Hopf differential and energy densities --------------------------------------

@dataclass
class HopfSamples:
    z: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    dbar_residual: float

    def relative_l2(self, A) -> float:
        """Relative σ-weighted L² distance to the coefficient of A."""
        a, _ = A.evaluate(self.z)
        rho = (1 - np.abs(self.z) ** 2) ** 4 / 16
        num = np.sum(self.weights * rho * np.abs(self.values - a) ** 2)
        den = np.sum(self.weights * rho * np.abs(a) ** 2)
        return float(np.sqrt(num / den))


def _pullback_z(geo: _Geometry, f: DiscreteMap, h: TensorMetric):
    """(f*h) in the disk chart of the domain at triangle barycenters, with det Df."""
    Kimg = to_klein(f.corner_images())
    Df = _affine(geo, Kimg)
    _check_orientation(Df)
    db = geo.bary - geo.K[:, 0]
    iv = np.einsum("tij,tj->ti", Df, np.stack([db.real, db.imag], -1))
    img = Kimg[:, 0] + iv[:, 0] + 1j * iv[:, 1]
    hK = _h_klein(h, img)
    Jinv = np.linalg.inv(geo.Jb)
    m = np.einsum("tki,tkl,tlj->tij", Df @ Jinv, hK, Df @ Jinv)
    return m


def _dbar_residual(mesh: SurfaceMesh, z, q) -> float:
    """RMS of the ∂̄ coefficient in local fits q ≈ c0 + c1 (z - z_v) + c2 conj(z - z_v)
    over interior vertex stars, relative to RMS |q|."""
    tri = mesh.triangles
    out = []
    for v in range(len(mesh.vertices)):
        star = np.nonzero(np.any(tri == v, axis=1))[0]
        if len(star) < 5 or mesh.ident[v] != mesh.ident[mesh.representatives[mesh.ident[v]]] or \
                np.sum(mesh.ident == mesh.ident[v]) > 1:
            continue
        dz = z[star] - mesh.vertices[v]
        M = np.stack([np.ones_like(dz), dz, np.conj(dz)], -1)
        c = np.linalg.lstsq(M, q[star], rcond=None)[0]
        out.append(abs(c[2]))
    return float(np.sqrt(np.mean(np.square(out))) / np.sqrt(np.mean(np.abs(q) ** 2)))


def hopf_extract(mesh: SurfaceMesh, f: DiscreteMap, h: TensorMetric) -> HopfSamples:
    """¼[(f*h)₁₁ - (f*h)₂₂ - 2i(f*h)₁₂] at triangle barycenters."""
    geo = _Geometry(mesh, order=2)
    m = _pullback_z(geo, f, h)
    q = 0.25 * (m[:, 0, 0] - m[:, 1, 1] - 2j * m[:, 0, 1])
    z = from_klein(geo.bary)
    return HopfSamples(z, q, mesh.sigma_areas, _dbar_residual(mesh, z, q))


@dataclass
class EnergyDensities:
    e: np.ndarray
    J: np.ndarray
    Hq: np.ndarray
    Lq: np.ndarray

    @classmethod
    def from_e_J(cls, e, J):
        return cls(e, J, 0.5 * (e + J), 0.5 * (e - J))

    def identity_residual(self) -> float:
        return float(max(np.max(np.abs(self.e - self.Hq - self.Lq)), np.max(np.abs(self.J - self.Hq + self.Lq))))


def energy_densities(mesh: SurfaceMesh, f: DiscreteMap, h: TensorMetric, domain: str = "sigma") -> EnergyDensities:
    """e = ½ Tr_dom(f*h) and J = det(df) sqrt(det h / det dom) at triangle barycenters."""
    geo = _Geometry(mesh, order=2)
    m = _pullback_z(geo, f, h)
    z = from_klein(geo.bary)
    c = _domain_factor(domain, h.B, z)
    e = 0.5 * (m[:, 0, 0] + m[:, 1, 1]) / c
    J = np.sqrt(np.linalg.det(m)) / c
    return EnergyDensities.from_e_J(e, J)


@dataclass
class WolfResidual:
    residual_HL: float
    residual_H: float
    solver_error: Optional[float]
    densities: EnergyDensities

    @property
    def passes(self) -> bool:
        ok = self.residual_HL <= 1e-8
        if self.solver_error is not None:
            ok = ok and self.residual_H <= 2 * self.solver_error
        return ok


def wolf_identities(B: BlaschkeMetric, A, z, solver_error: Optional[float] = None,
                    reference_u=None) -> WolfResidual:
    """Pointwise 𝓗, 𝓛 of id: (M, σ) -> (M, h₊) at disk points z.

    residual_HL = max|𝓗𝓛 - |A|²_σ|; residual_H = max|𝓗 - e^{2u}| where u is
    ``reference_u`` (values at z from an independent solve) or the FEM
    interpolant of B."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    h = TensorMetric(B, A, +1)
    hz = h.matrix(z)
    c = 4.0 / (1 - np.abs(z) ** 2) ** 2
    e = 0.5 * np.trace(hz, axis1=-2, axis2=-1) / c
    J = np.sqrt(np.linalg.det(hz)) / c
    dens = EnergyDensities.from_e_J(e, J)
    if A.is_zero:
        a2 = np.zeros(len(z))
    else:
        a, _ = A.evaluate(z)
        a2 = np.abs(a) ** 2 / c**2
    if reference_u is None:
        zr, _, _ = B.group.reduce_many(z)
        reference_u = B.u_reduced(zr, mode="mesh")[0]
    return WolfResidual(float(np.max(np.abs(dens.Hq * dens.Lq - a2))),
                        float(np.max(np.abs(dens.Hq - np.exp(2 * np.asarray(reference_u))))),
                        solver_error, dens)
