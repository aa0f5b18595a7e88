"""Blaschke metric g = e^{2u} sigma solving the vortex equation

    Delta_sigma u = e^{2u} - e^{-2u} |A|^2_sigma - 1,
    Delta_sigma = e^{-2 phi_0} (d_xx + d_yy),   phi_0 = log(2 / (1 - |z|^2)).

Two discretizations are provided.

* A P1 finite-element solver on an equivariant triangulation of the octagon
  (cotangent stiffness, lumped mass from geodesic-triangle areas, Newton).
* A smooth spectral solution (Chebyshev tensor polynomials on the octagon,
  collocation plus periodicity conditions on the paired sides).  The flow,
  its linearization and the coframe checks need second derivatives of u,
  which the P1 solution cannot supply, so ``BlaschkeMetric`` evaluates the
  smooth field when it is attached.

Curvature is always taken from the vortex identity K = -1 + |a|^2 e^{-4 phi}.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import IndefiniteLinearization, MeshError, NonConvergence
from .fuchsian import LETTERS, SurfaceGroup, Word
from .geometry import Mobius, compose
from .qdiff import default_group, side_points

MAX_LEVEL = 5
SEAM_TOL = 1e-10


# ---------------------------------------------------------------------------
# mesh


def geodesic_midpoint(z1, z2):
    z1 = np.asarray(z1, dtype=complex)
    z2 = np.asarray(z2, dtype=complex)
    w = (z2 - z1) / (1 - np.conj(z1) * z2)
    r = np.abs(w)
    with np.errstate(invalid="ignore", divide="ignore"):
        wm = np.where(r > 0, w / r * np.tanh(np.arctanh(r) / 2), 0)
    return (wm + z1) / (1 + np.conj(z1) * wm)


def geodesic_triangle_area(z1, z2, z3):
    """pi minus the angle sum, from the hyperbolic law of cosines."""
    def d(p, q):
        return 2 * np.arctanh(np.abs((p - q) / (1 - np.conj(p) * q)))

    a, b, c = d(z2, z3), d(z1, z3), d(z1, z2)

    def ang(opp, s1, s2):
        cosv = (np.cosh(s1) * np.cosh(s2) - np.cosh(opp)) / (np.sinh(s1) * np.sinh(s2))
        return np.arccos(np.clip(cosv, -1, 1))

    return np.pi - ang(a, b, c) - ang(b, a, c) - ang(c, a, b)


@dataclass
class SurfaceMesh:
    """Triangulation of the closed octagon.  Every triangle lives in the
    octagon chart (empty chart word); seam copies of a vertex are tied to
    one representative by ``ident`` and the deck transform ``rep_a/rep_b``
    with delta(rep) = copy."""

    vertices: np.ndarray
    triangles: np.ndarray
    ident: np.ndarray
    rep_a: np.ndarray
    rep_b: np.ndarray
    seam_identifications: List[Tuple[int, int, str]]
    refinement_level: int
    group: SurfaceGroup = field(repr=False)

    @property
    def chart_words(self) -> List[Word]:
        return [Word("")] * len(self.triangles)

    @property
    def n_ids(self) -> int:
        return int(self.ident.max()) + 1

    @functools.cached_property
    def representatives(self) -> np.ndarray:
        rep = np.full(self.n_ids, -1)
        for i in range(len(self.vertices) - 1, -1, -1):
            rep[self.ident[i]] = i
        return rep

    @functools.cached_property
    def edges(self) -> np.ndarray:
        e = np.sort(np.vstack([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]]), axis=1)
        return np.unique(e, axis=0)

    def euler_characteristic(self) -> int:
        E = self.edges
        mid = geodesic_midpoint(self.vertices[E[:, 0]], self.vertices[E[:, 1]])
        viol = self.group.side_violation(mid)
        seam = np.any(np.abs(viol[:, 4:]) < 1e-9, axis=1)
        return self.n_ids - (len(E) - int(seam.sum())) + len(self.triangles)

    @functools.cached_property
    def sigma_areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        return geodesic_triangle_area(v[:, 0], v[:, 1], v[:, 2])

    def total_area(self) -> float:
        return float(self.sigma_areas.sum())

    @functools.cached_property
    def _locator(self):
        v = self.vertices[self.triangles]
        e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
        M = np.stack([np.stack([e1.real, e2.real], -1), np.stack([e1.imag, e2.imag], -1)], -2)
        return v[:, 0], np.linalg.inv(M)

    def locate(self, z):
        """Containing triangle and barycentric coordinates for reduced points."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        v0, Minv = self._locator
        d = z[:, None] - v0[None, :]
        l1 = Minv[None, :, 0, 0] * d.real + Minv[None, :, 0, 1] * d.imag
        l2 = Minv[None, :, 1, 0] * d.real + Minv[None, :, 1, 1] * d.imag
        lam = np.stack([1 - l1 - l2, l1, l2], -1)
        tri = np.argmax(lam.min(-1), axis=1)
        return tri, lam[np.arange(len(z)), tri]


def build_mesh(group: Optional[SurfaceGroup] = None, refinement_level: int = 3) -> SurfaceMesh:
    if group is None:
        group = default_group()
    if not 0 <= refinement_level <= MAX_LEVEL:
        raise MeshError(f"refinement level {refinement_level} outside 0..{MAX_LEVEL}")
    verts = [0j] + list(group.octagon_vertices)
    tris = [(0, 1 + (k - 1) % 8, 1 + k) for k in range(8)]
    for _ in range(refinement_level):
        verts, tris = _refine(verts, tris)
    V = np.array(verts)
    T = np.array(tris)
    v = V[T]
    cross = ((v[:, 1] - v[:, 0]).conjugate() * (v[:, 2] - v[:, 0])).imag
    if np.any(cross <= 0):
        raise MeshError("negatively oriented triangle")
    ident, ra, rb, seams = _identify(group, V)
    mesh = SurfaceMesh(V, T, ident, ra, rb, seams, refinement_level, group)
    if mesh.euler_characteristic() != -2:
        raise MeshError(f"Euler characteristic {mesh.euler_characteristic()} != -2")
    return mesh


def _refine(verts, tris):
    verts = list(verts)
    cache: Dict[Tuple[int, int], int] = {}

    def mid(i, j):
        key = (min(i, j), max(i, j))
        if key not in cache:
            verts.append(complex(geodesic_midpoint(verts[i], verts[j])))
            cache[key] = len(verts) - 1
        return cache[key]

    out = []
    for a, b, c in tris:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        out += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    return verts, out


def _identify(group: SurfaceGroup, V: np.ndarray):
    n = len(V)
    viol = group.side_violation(V)
    on_side = np.abs(viol) < SEAM_TOL
    # graph edges: copy on side k+4 --g_k--> copy on side k
    adj: Dict[int, List[Tuple[int, Mobius]]] = {i: [] for i in range(n)}
    seams = []
    for k in range(4):
        g = group.generators[LETTERS[k]]
        src = np.nonzero(on_side[:, k + 4])[0]
        dst = np.nonzero(on_side[:, k])[0]
        for i in src:
            img = g(V[i])
            j = dst[np.argmin(np.abs(V[dst] - img))] if len(dst) else -1
            if j < 0 or abs(V[j] - img) > SEAM_TOL:
                raise MeshError(f"seam vertex {i} on side {k + 4} has no partner")
            adj[i].append((j, g))
            adj[j].append((i, g.inverse()))
            seams.append((int(i), int(j), LETTERS[k]))
    ident = np.full(n, -1)
    ra = np.ones(n, complex)
    rb = np.zeros(n, complex)
    nid = 0
    for s in range(n):
        if ident[s] >= 0:
            continue
        ident[s] = nid
        stack = [(s, Mobius.identity())]
        while stack:
            i, d = stack.pop()
            for j, g in adj[i]:
                if ident[j] < 0:
                    ident[j] = nid
                    dj = compose(g, d)
                    ra[j], rb[j] = dj.a, dj.b
                    stack.append((j, dj))
        nid += 1
    return ident, ra, rb, seams


# ---------------------------------------------------------------------------
# finite elements


def _cot_stiffness(mesh: SurfaceMesh) -> sp.csr_matrix:
    v = mesh.vertices[mesh.triangles]
    ids = mesh.ident[mesh.triangles]
    rows, cols, vals = [], [], []
    area2 = ((v[:, 1] - v[:, 0]).conjugate() * (v[:, 2] - v[:, 0])).imag
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        e1 = v[:, j] - v[:, i]
        e2 = v[:, k] - v[:, i]
        cot = (e1.conjugate() * e2).real / area2
        w = 0.5 * cot  # weight of edge (j, k)
        a, b = ids[:, j], ids[:, k]
        rows += [a, b, a, b]
        cols += [b, a, a, b]
        vals += [-w, -w, w, w]
    n = mesh.n_ids
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def _lumped_mass(mesh: SurfaceMesh) -> np.ndarray:
    m = np.zeros(mesh.n_ids)
    np.add.at(m, mesh.ident[mesh.triangles].ravel(), np.repeat(mesh.sigma_areas / 3, 3))
    return m


def sigma_norm_sq(A, z) -> np.ndarray:
    """|A|^2_sigma = |a|^2 e^{-4 phi_0} = |a|^2 (1 - |z|^2)^4 / 16."""
    a, _ = A.evaluate(z)
    return np.abs(a) ** 2 * (1 - np.abs(z) ** 2) ** 4 / 16


@dataclass
class NewtonRecord:
    iterations: int
    residuals: List[float]
    damping: List[float]


def solve_vortex(mesh: SurfaceMesh, A, tol: float = 1e-11, u0=None, max_iter: int = 50,
                 smooth_degree: Optional[int] = None) -> "BlaschkeMetric":
    """Newton iteration for the P1 system S u + M (e^{2u} - e^{-2u} w - 1) = 0.

    The residual reported is max |M^{-1} G(u)|, a pointwise PDE residual.
    ``smooth_degree`` attaches the spectral solution (see module docstring)."""
    if tol < 1e-12:
        raise ValueError("tol must be >= 1e-12")
    S = _cot_stiffness(mesh).toarray()
    M = _lumped_mass(mesh)
    zr = mesh.vertices[mesh.representatives]
    w = sigma_norm_sq(A, zr) if not A.is_zero else np.zeros(len(zr))
    u = np.zeros(mesh.n_ids) if u0 is None else np.array(u0, dtype=float)

    def resid(u):
        return S @ u + M * (np.exp(2 * u) - np.exp(-2 * u) * w - 1)

    G = resid(u)
    hist = [float(np.max(np.abs(G / M)))]
    damp = []
    it = 0
    while hist[-1] > tol:
        if it >= max_iter:
            raise NonConvergence(f"vortex Newton did not converge in {max_iter} steps (residual {hist[-1]:.3e})")
        J = S + np.diag(M * (2 * np.exp(2 * u) + 2 * np.exp(-2 * u) * w))
        try:
            cf = sla.cho_factor(J)
        except np.linalg.LinAlgError as exc:
            raise IndefiniteLinearization("linearized vortex operator is not definite") from exc
        du = -sla.cho_solve(cf, G)
        step = 1.0
        while True:
            G_new = resid(u + step * du)
            r_new = float(np.max(np.abs(G_new / M)))
            if r_new < hist[-1] or step < 1e-4:
                break
            step /= 2
        u = u + step * du
        G = G_new
        hist.append(r_new)
        damp.append(step)
        it += 1
    B = BlaschkeMetric(mesh, u, A, NewtonRecord(it, hist, damp))
    K = B.vertex_curvature()
    if np.any(K >= 0) or np.any(K < -1 - 1e-12):
        raise IndefiniteLinearization("K_g outside [-1, 0): the differential is too large")
    if smooth_degree:
        B.smooth = solve_vortex_spectral(A, smooth_degree)
    return B


# ---------------------------------------------------------------------------
# smooth (spectral) solution


def _cheb_all(x, n):
    """T_k, T_k', T_k'' for k = 0..n at |x| < 1 via the trigonometric form."""
    x = np.asarray(x, dtype=float)
    th = np.arccos(x)[..., None]
    k = np.arange(n + 1)
    s = np.sin(th)
    T = np.cos(k * th)
    dT = k * np.sin(k * th) / s
    ddT = (x[..., None] * dT - k**2 * T) / (1 - x[..., None] ** 2)
    return T, dT, ddT


@dataclass
class SpectralField:
    """u(x, y) = sum_{i+j<=n} C_ij T_i(x/rho) T_j(y/rho) on the octagon."""

    coefficients: np.ndarray  # (n+1, n+1), zero for i+j > n
    rho: float
    pde_residual: float = float("nan")
    periodicity_residual: float = float("nan")
    iterations: int = 0

    @property
    def degree(self) -> int:
        return self.coefficients.shape[0] - 1

    def derivatives(self, z):
        """u, u_x, u_y, u_xx, u_xy, u_yy at reduced points."""
        z = np.asarray(z, dtype=complex)
        n = self.degree
        Tx, dTx, ddTx = _cheb_all(z.real / self.rho, n)
        Ty, dTy, ddTy = _cheb_all(z.imag / self.rho, n)
        C = self.coefficients
        r = self.rho
        CTy, CdTy, CddTy = Ty @ C.T, dTy @ C.T, ddTy @ C.T
        u = np.sum(Tx * CTy, -1)
        ux = np.sum(dTx * CTy, -1) / r
        uy = np.sum(Tx * CdTy, -1) / r
        uxx = np.sum(ddTx * CTy, -1) / r**2
        uxy = np.sum(dTx * CdTy, -1) / r**2
        uyy = np.sum(Tx * CddTy, -1) / r**2
        return u, ux, uy, uxx, uxy, uyy


def _index(n):
    I, J = np.array([(i, j) for i in range(n + 1) for j in range(n + 1 - i)]).T
    return I, J


def _spectral_basis(z, n, rho, second=True):
    I, J = _index(n)
    Tx, dTx, ddTx = _cheb_all(z.real / rho, n)
    Ty, dTy, ddTy = _cheb_all(z.imag / rho, n)
    B = Tx[:, I] * Ty[:, J]
    Bx = dTx[:, I] * Ty[:, J] / rho
    By = Tx[:, I] * dTy[:, J] / rho
    L = (ddTx[:, I] * Ty[:, J] + Tx[:, I] * ddTy[:, J]) / rho**2 if second else None
    return B, Bx, By, L


@functools.lru_cache(maxsize=2)
def _spectral_system(degree: int):
    """Collocation points, basis matrices and the pseudo-inverse of the
    linearization at u = 0, A = 0 (reused by a chord iteration)."""
    group = default_group()
    rho = abs(group.octagon_vertices[0]) * 1.0005
    n = degree
    Nb = (n + 1) * (n + 2) // 2
    from .qdiff import octagon_samples

    zi = octagon_samples(group, 2 * Nb, seed=2024, radius=rho)
    m = n + 10
    zb = np.concatenate([side_points(group, s, m) for s in range(8)])
    zc = np.concatenate([zi, zb])
    B, _, _, L = _spectral_basis(zc, n, rho)
    e2p0 = (2 / (1 - np.abs(zc) ** 2)) ** 2
    Lg = L / e2p0[:, None]
    prow = []
    for k in range(4):
        z = side_points(group, k + 4, m)
        g = group.generators[LETTERS[k]]
        B0, Bx0, By0, _ = _spectral_basis(z, n, rho, False)
        B1, Bx1, By1, _ = _spectral_basis(g(z), n, rho, False)
        prow.append(B0 - B1)
        cz = (Bx0 - 1j * By0) - g.derivative(z)[:, None] * (Bx1 - 1j * By1)
        prow += [cz.real, cz.imag]
    P = np.vstack(prow)
    J0 = np.vstack([Lg - 2 * B, P])
    U, s, Vt = sla.svd(J0, full_matrices=False, lapack_driver="gesdd")
    keep = s > s[0] * 1e-13
    pinv = (Vt[keep].T / s[keep]) @ U[:, keep].T
    return zc, B, Lg, P, pinv, rho


def solve_vortex_spectral(A, degree: int = 60, tol: float = 1e-12, max_iter: int = 60) -> SpectralField:
    """Chord iteration with the frozen linearization at u = 0, A = 0.

    The contraction factor is about max(4|u| + 2|A|^2_sigma) / 2, far below 1
    for admissible differentials of moderate size."""
    zc, B, Lg, P, pinv, rho = _spectral_system(degree)
    n = degree
    Nb = B.shape[1]
    w = sigma_norm_sq(A, zc) if not A.is_zero else np.zeros(len(zc))
    c = np.zeros(Nb)
    it = 0
    prev = np.inf
    while True:
        u = B @ c
        R = np.concatenate([Lg @ c - (np.exp(2 * u) - 1) + np.exp(-2 * u) * w, P @ c])
        dc = -pinv @ R
        c += dc
        it += 1
        step = float(np.max(np.abs(B @ dc)))
        if step < tol:
            break
        if it >= max_iter or (it > 5 and step > prev):
            raise NonConvergence(f"spectral vortex iteration stalled (update {step:.2e})")
        prev = step
    C = np.zeros((n + 1, n + 1))
    I, J = _index(n)
    C[I, J] = c
    field_ = SpectralField(C, rho, iterations=it)
    field_.pde_residual = spectral_pde_residual(field_, A)
    field_.periodicity_residual = float(np.max(np.abs(P @ c)))
    return field_


def spectral_pde_residual(F: SpectralField, A, npts: int = 400) -> float:
    """Max pointwise vortex residual at points not used for collocation."""
    from .qdiff import octagon_samples

    z = octagon_samples(default_group(), npts, seed=777)
    u, _, _, uxx, _, uyy = F.derivatives(z)
    w = sigma_norm_sq(A, z) if not A.is_zero else 0.0
    e2p0 = (2 / (1 - np.abs(z) ** 2)) ** 2
    return float(np.max(np.abs((uxx + uyy) / e2p0 - np.exp(2 * u) + np.exp(-2 * u) * w + 1)))


# ---------------------------------------------------------------------------
# the metric


@dataclass
class BlaschkeMetric:
    mesh: SurfaceMesh
    u: np.ndarray
    A: object
    newton: Optional[NewtonRecord] = None
    smooth: Optional[SpectralField] = None
    gradient: np.ndarray = field(init=False)

    def __post_init__(self):
        self.gradient = self._recover_gradient()

    @property
    def group(self) -> SurfaceGroup:
        return self.mesh.group

    @staticmethod
    def sigma_log_factor(z):
        return np.log(2.0 / (1.0 - np.abs(z) ** 2))

    def _recover_gradient(self) -> np.ndarray:
        """Area-weighted per-vertex average of triangle gradients, as the
        complex number u_x - i u_y in the representative's chart."""
        mesh = self.mesh
        v = mesh.vertices[mesh.triangles]
        uu = self.u[mesh.ident[mesh.triangles]]
        e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
        det = (e1.real * e2.imag - e1.imag * e2.real)
        du1, du2 = uu[:, 1] - uu[:, 0], uu[:, 2] - uu[:, 0]
        gx = (du1 * e2.imag - du2 * e1.imag) / det
        gy = (-du1 * e2.real + du2 * e1.real) / det
        Gt = gx - 1j * gy
        acc = np.zeros(mesh.n_ids, complex)
        wsum = np.zeros(mesh.n_ids)
        area = mesh.sigma_areas
        for c in range(3):
            vi = mesh.triangles[:, c]
            rep = mesh.vertices[mesh.representatives[mesh.ident[vi]]]
            dprime = 1.0 / (np.conj(mesh.rep_b[vi]) * rep + np.conj(mesh.rep_a[vi])) ** 2
            np.add.at(acc, mesh.ident[vi], area * Gt * dprime)
            np.add.at(wsum, mesh.ident[vi], area)
        return acc / wsum

    def vertex_curvature(self) -> np.ndarray:
        zr = self.mesh.vertices[self.mesh.representatives]
        if self.A.is_zero:
            return -np.ones(len(zr))
        return -1 + sigma_norm_sq(self.A, zr) * np.exp(-4 * self.u)

    # -- evaluation ---------------------------------------------------------
    def u_reduced(self, z, mode: Optional[str] = None):
        """u and its derivatives (u, ux, uy, uxx, uxy, uyy) at reduced points."""
        z = np.asarray(z, dtype=complex)
        mode = mode or ("smooth" if self.smooth is not None else "mesh")
        if mode == "smooth":
            return self.smooth.derivatives(z)
        zz = np.atleast_1d(z)
        tri, lam = self.mesh.locate(zz)
        corners = self.mesh.triangles[tri]
        ids = self.mesh.ident[corners]
        u = np.sum(lam * self.u[ids], -1)
        # recovered gradient carried to the chart of each corner copy
        rep = self.mesh.vertices[self.mesh.representatives[ids]]
        dprime = 1.0 / (np.conj(self.mesh.rep_b[corners]) * rep + np.conj(self.mesh.rep_a[corners])) ** 2
        G = np.sum(lam * self.gradient[ids] / dprime, -1)
        zero = np.zeros_like(u)
        out = (u, G.real, -G.imag, zero, zero, zero)
        if z.ndim == 0:
            out = tuple(o[0] for o in out)
        return out

    def phi_derivatives(self, z, mode: Optional[str] = None):
        """phi = phi_0 + u and its first and second derivatives at arbitrary
        disk points, using u(z) = u(delta z) for the reducing deck map delta."""
        z = np.asarray(z, dtype=complex)
        scalar = z.ndim == 0
        z = np.atleast_1d(z)
        zr, da, db = self.group.reduce_many(z)
        out = cover_phi(z, da, db, self.u_reduced(zr, mode))
        return tuple(o[0] for o in out) if scalar else out


def cover_phi(z, da, db, ud):
    """Carry reduced u-derivatives ud = (u, ux, uy, uxx, uxy, uyy) at delta(z)
    back to z and add phi_0.  (da, db) are the SU(1,1) entries of delta."""
    u, ux, uy, uxx, uxy, uyy = ud
    den = np.conj(db) * z + np.conj(da)
    d1 = 1.0 / den**2
    d2 = -2.0 * np.conj(db) * d1 / den
    uw = 0.5 * (ux - 1j * uy)
    uww = 0.25 * (uxx - uyy - 2j * uxy)
    uwb = 0.25 * (uxx + uyy)
    uz = uw * d1
    uzz = uww * d1**2 + uw * d2
    uzb = uwb * np.abs(d1) ** 2
    # phi_0 = log 2 - log(1 - z zbar)
    r2 = np.abs(z) ** 2
    zc = np.conj(z)
    phz = uz + zc / (1 - r2)
    phzz = uzz + zc**2 / (1 - r2) ** 2
    phzb = uzb + 1.0 / (1 - r2) ** 2
    phi = u + np.log(2.0 / (1 - r2))
    return (phi, 2 * phz.real, -2 * phz.imag, 2 * phzz.real + 2 * phzb,
            -2 * phzz.imag, 2 * phzb - 2 * phzz.real)


def eval_metric(B: BlaschkeMetric, z, mode: Optional[str] = None):
    """(phi, grad phi, K) with K = -1 + |a|^2 e^{-4 phi}."""
    phi, px, py, *_ = B.phi_derivatives(z, mode)
    if B.A.is_zero:
        K = -1.0 + 0 * phi
    else:
        a, _ = B.A.evaluate(z)
        K = -1.0 + np.abs(a) ** 2 * np.exp(-4 * phi)
    return phi, np.stack([px, py], -1), K


def equivariance_residual(B: BlaschkeMetric, z, g: Mobius, mode: Optional[str] = None):
    """|phi(gz) - phi(z) + log|g'(z)||."""
    p1 = B.phi_derivatives(g(z), mode)[0]
    p0 = B.phi_derivatives(z, mode)[0]
    return np.abs(p1 - p0 + np.log(np.abs(g.derivative(z))))


def curvature_residual(B: BlaschkeMetric, z, mode: Optional[str] = None) -> np.ndarray:
    """|K from -e^{-2 phi} Lap(phi) minus (-1 + |a|^2 e^{-4 phi})| at disk points,
    i.e. the vortex equation written as a curvature identity."""
    phi, _, _, pxx, _, pyy = B.phi_derivatives(z, mode)
    K_geom = -np.exp(-2 * phi) * (pxx + pyy)
    return np.abs(K_geom - eval_metric(B, z, mode)[2])


def gauss_bonnet(B: BlaschkeMetric) -> float:
    """Lumped quadrature of int K_g dA_g = sum_v M_v K_v e^{2 u_v}."""
    M = _lumped_mass(B.mesh)
    return float(np.sum(M * B.vertex_curvature() * np.exp(2 * B.u)))


def export_csv(B: BlaschkeMetric, path) -> int:
    mesh = B.mesh
    z = mesh.vertices[mesh.representatives]
    K = B.vertex_curvature()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y", "u", "K"])
        for i, (zi, ui, ki) in enumerate(zip(z, B.u, K)):
            w.writerow([i, f"{zi.real:.12g}", f"{zi.imag:.12g}", f"{ui:.12g}", f"{ki:.12g}"])
    return len(z)


def default_degree(level: int) -> int:
    """Spectral degree paired with a mesh level (refining one refines both)."""
    return 40 + 10 * int(level)


class MetricFamily:
    """Blaschke metrics for a differential at several scales, solved on
    demand and cached.  The metric only depends on |A|, so A and -A share it."""

    def __init__(self, mesh: SurfaceMesh, A, degree: Optional[int] = None, tol: float = 1e-11):
        self.mesh, self.A, self.tol = mesh, A, tol
        self.degree = default_degree(mesh.refinement_level) if degree is None else degree
        self._cache: Dict[float, BlaschkeMetric] = {}

    def metric(self, scale: float) -> BlaschkeMetric:
        key = round(abs(float(scale)), 14)
        if key not in self._cache:
            self._cache[key] = solve_vortex(self.mesh, self.A.scaled(key), self.tol, smooth_degree=self.degree)
        return self._cache[key]
