"""Hyperbolic representatives h± = ±2Re A + (1 + |A|²_g) g and their marked lengths.

Lengths are obtained by shortening a Γ-equivariant polyline in the disk
chart, started on the σ-axis of the class, and compared with the period and
∫Vλ of the closed thermostat orbit in the same class.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .blaschke import BlaschkeMetric, MetricFamily
from .dynamics import local_data
from .errors import Degenerate, LineSearchFailure, NonConvergence, NotHyperbolic
from .fuchsian import Word
from .geometry import Mobius, axis_base_point, classify
from .orbits import ClosedOrbit, find_orbit

GAUSS_S = np.array([0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)])


@dataclass
class TensorMetric:
    """h = sign 2Re(a dz²) + (e^{2φ} + |a|² e^{-2φ}) |dz|², evaluated in the cover."""

    B: BlaschkeMetric
    A: object
    sign: int
    mode: Optional[str] = None

    def _data(self, z):
        d = local_data(self.B, self.A, z, self.mode)
        e2 = np.exp(2 * d.phi)
        c = e2 + np.abs(d.a) ** 2 / e2
        return d, c

    def matrix(self, z) -> np.ndarray:
        """Chart matrices, shape (..., 2, 2)."""
        z = np.asarray(z, dtype=complex)
        d, c = self._data(z.ravel())
        s = 2.0 * self.sign
        h = np.empty(d.a.shape + (2, 2))
        h[:, 0, 0] = s * d.a.real + c
        h[:, 1, 1] = -s * d.a.real + c
        h[:, 0, 1] = h[:, 1, 0] = -s * d.a.imag
        return h.reshape(z.shape + (2, 2))

    def quadratic(self, z, delta, gradient: bool = False):
        """h_z(δ, δ) for complex-coded δ; with ``gradient`` also returns the
        chart vector h_z δ (complex-coded) and ∂_x, ∂_y of h_z(δ, δ)."""
        d, c = self._data(z)
        s = 2.0 * self.sign
        q = s * np.real(d.a * delta**2) + c * np.abs(delta) ** 2
        if not gradient:
            return q
        hd = s * np.conj(d.a * delta) + c * delta
        e2 = np.exp(2 * d.phi)
        a2 = np.abs(d.a) ** 2
        cx = 2 * d.px * e2 + (2 * np.real(np.conj(d.a) * d.ap) - 2 * d.px * a2) / e2
        cy = 2 * d.py * e2 + (2 * np.real(np.conj(d.a) * 1j * d.ap) - 2 * d.py * a2) / e2
        n2 = np.abs(delta) ** 2
        qx = s * np.real(d.ap * delta**2) + cx * n2
        qy = s * np.real(1j * d.ap * delta**2) + cy * n2
        return q, hd, qx, qy

    def g_norm_sq_A(self, z):
        d = local_data(self.B, self.A, z, self.mode)
        return np.abs(d.a) ** 2 * np.exp(-4 * d.phi)

    def determinant_ratio(self, z):
        """det h / det g (equals K_g²)."""
        d = local_data(self.B, self.A, z, self.mode)
        return np.linalg.det(self.matrix(z)) * np.exp(-4 * d.phi)

    def half_trace_ratio(self, z):
        """½ Tr_g h (equals 1 + |A|²_g)."""
        d = local_data(self.B, self.A, z, self.mode)
        return 0.5 * np.trace(self.matrix(z), axis1=-2, axis2=-1) * np.exp(-2 * d.phi)


def h_tensor(B: BlaschkeMetric, A, sign: int = 1, mode: Optional[str] = None,
             probe: int = 200) -> TensorMetric:
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    h = TensorMetric(B, A, sign, mode)
    if not A.is_zero:
        from .qdiff import octagon_samples

        z = octagon_samples(B.group, probe)
        if np.max(h.g_norm_sq_A(z)) >= 1.0:
            raise Degenerate("|A|_g >= 1 on the probe set; the scale is inadmissible")
    return h


def reA_pairings(B: BlaschkeMetric, A, z, theta, mode: Optional[str] = None):
    """Re A paired with the horizontal frame (v, iv), v = e^{-φ} e^{iθ}.

    Returns (Re A(v,v), Re A(v,iv), Re A(iv,iv)) from the chart matrix."""
    d = local_data(B, A, z, mode)
    v = np.exp(-d.phi + 1j * np.asarray(theta))
    M = np.stack([np.stack([d.a.real, -d.a.imag], -1), np.stack([-d.a.imag, -d.a.real], -1)], -2)

    def pair(p, q):
        pv = np.stack([p.real, p.imag], -1)
        qv = np.stack([q.real, q.imag], -1)
        return np.einsum("...i,...ij,...j->...", pv, M, qv)

    return pair(v, v), pair(v, 1j * v), pair(1j * v, 1j * v)


@dataclass
class EquivariantLoop:
    """Polyline z_0 … z_n in the cover with z_n = γ(z_0)."""

    word: Word
    gamma: Mobius
    vertices: np.ndarray

    @property
    def n(self) -> int:
        return len(self.vertices) - 1

    def closure_residual(self) -> float:
        return float(abs(self.vertices[-1] - self.gamma(self.vertices[0])))


def _axis_polyline(gamma: Mobius, n: int) -> np.ndarray:
    z0, psi = axis_base_point(gamma)
    ell = classify(gamma).translation_length
    w = np.tanh(np.linspace(0.0, ell, n + 1) / 2) * np.exp(1j * psi)
    return (w + z0) / (1 + np.conj(z0) * w)


def _segments(h: TensorMetric, P, Q, gradient=False):
    """Per-segment Gauss length L and, optionally, complex-coded dL/dP, dL/dQ."""
    dlt = Q - P
    L = np.zeros(len(P))
    gP = np.zeros(len(P), complex)
    gQ = np.zeros(len(P), complex)
    for s in GAUSS_S:
        x = P + s * dlt
        if gradient:
            q, hd, qx, qy = h.quadratic(x, dlt, gradient=True)
        else:
            q = h.quadratic(x, dlt)
        r = np.sqrt(q)
        L += 0.5 * r
        if gradient:
            gd = 0.5 * hd / r
            gx = 0.25 * (qx + 1j * qy) / r
            gP += -gd + (1 - s) * gx
            gQ += gd + s * gx
    return (L, gP, gQ) if gradient else L


class _Shortener:
    """Discrete energy n Σ L_k² over vertices z_0 … z_{n-1}; z_0 may only move
    normal to the initial axis direction, which removes the sliding mode."""

    def __init__(self, h: TensorMetric, gamma: Mobius, z_init: np.ndarray):
        self.h, self.gamma = h, gamma
        self.n = len(z_init) - 1
        t = z_init[1] - z_init[0]
        self.normal = 1j * t / abs(t)
        self.z0_base = z_init[0]

    def unpack(self, x):
        n = self.n
        z = np.empty(n + 1, complex)
        z[0] = self.z0_base + x[0] * self.normal
        z[1:n] = x[1:n] + 1j * x[n:2 * n - 1]
        z[n] = self.gamma(z[0])
        return z

    def pack(self, z):
        n = self.n
        x = np.empty(2 * n - 1)
        x[0] = np.real((z[0] - self.z0_base) * np.conj(self.normal))
        x[1:n] = z[1:n].real
        x[n:2 * n - 1] = z[1:n].imag
        return x

    def energy(self, x):
        z = self.unpack(x)
        L = _segments(self.h, z[:-1], z[1:])
        return self.n * float(np.sum(L**2)), float(np.sum(L))

    def _vertex_gradient(self, z):
        """Complex-coded gradient of the energy w.r.t. the free vertices z_0 … z_{n-1},
        with segment contributions split into (P-part, Q-part)."""
        L, gP, gQ = _segments(self.h, z[:-1], z[1:], gradient=True)
        w = 2 * self.n * L
        gP, gQ = w * gP, w * gQ
        # Q of the last segment is γ(z_0): pull back by conj(γ')
        gQ_last = np.conj(self.gamma.derivative(z[0])) * gQ[-1]
        return gP, gQ, gQ_last

    def gradient(self, x):
        """Reduced gradient and the size of the one-sided segment terms that
        cancel in it (the scale for a relative optimality test)."""
        z = self.unpack(x)
        gP, gQ, gQ_last = self._vertex_gradient(z)
        G = gP.copy()
        G[1:] += gQ[:-1]
        G[0] += gQ_last
        return self._reduce(G), float(np.max(np.abs(gP)))

    def _reduce(self, G):
        n = self.n
        out = np.empty(2 * n - 1)
        out[0] = np.real(G[0] * np.conj(self.normal))
        out[1:n] = G[1:n].real
        out[n:] = G[1:n].imag
        return out

    def hessian(self, x, eps: float = 1e-7):
        """Sparse Hessian from central differences of per-segment gradients."""
        n = self.n
        z = self.unpack(x)
        P, Qs = z[:-1].copy(), z[1:].copy()
        Qs[-1] = z[0]  # the last segment's Q is parametrised by z_0

        def seg_grad(P, Qs):
            Q = Qs.copy()
            Q[-1] = self.gamma(Qs[-1])
            L, gP, gQ = _segments(self.h, P, Q, gradient=True)
            w = 2 * n * L
            gQ = w * gQ
            gQ[-1] = np.conj(self.gamma.derivative(Qs[-1])) * gQ[-1]
            return w * gP, gQ

        # local variable index of each segment's 4 real unknowns: (Px, Py, Qx, Qy)
        blocks = np.zeros((n, 4, 4))
        for j, (which, unit) in enumerate([(0, 1.0), (0, 1j), (1, 1.0), (1, 1j)]):
            dP = eps * unit if which == 0 else 0.0
            dQ = eps * unit if which == 1 else 0.0
            gp1, gq1 = seg_grad(P + dP, Qs + dQ)
            gp0, gq0 = seg_grad(P - dP, Qs - dQ)
            dgp, dgq = (gp1 - gp0) / (2 * eps), (gq1 - gq0) / (2 * eps)
            blocks[:, :, j] = np.stack([dgp.real, dgp.imag, dgq.real, dgq.imag], -1)
        blocks = 0.5 * (blocks + blocks.transpose(0, 2, 1))
        # map vertex real coordinates to reduced unknowns
        vk = np.arange(n)
        pv = vk
        qv = (vk + 1) % n
        rows, cols, vals = [], [], []
        nrm = np.array([self.normal.real, self.normal.imag])

        def coord_map(v):
            """(index, coefficient) pairs of real coords (x, y) of vertex v."""
            if v == 0:
                return [[(0, nrm[0])], [(0, nrm[1])]]
            return [[(v, 1.0)], [(n - 1 + v, 1.0)]]

        maps = [coord_map(v) for v in range(n)]
        for k in range(n):
            loc = maps[pv[k]] + maps[qv[k]]
            for i in range(4):
                for j in range(4):
                    for ri, ci in loc[i]:
                        for rj, cj in loc[j]:
                            rows.append(ri)
                            cols.append(rj)
                            vals.append(ci * cj * blocks[k, i, j])
        return sp.csc_matrix((vals, (rows, cols)), shape=(2 * n - 1, 2 * n - 1))


def _minimize(sh: _Shortener, x, tol: float, max_iter: int = 60):
    """Newton with Armijo line search; once the predicted decrease is below
    the round-off level of the energy, full steps are judged by the gradient."""
    E, _ = sh.energy(x)
    g, scale = sh.gradient(x)
    gn = float(np.max(np.abs(g))) / scale
    for it in range(max_iter):
        if gn <= tol:
            return x, gn, it
        step = -spla.spsolve(sh.hessian(x), g)
        if not np.all(np.isfinite(step)) or g @ step >= 0:
            step = -g
        if -(g @ step) < 1e-11 * abs(E):
            xn = x + step
            gn_new, scale = sh.gradient(xn)
            gn_new = float(np.max(np.abs(gn_new))) / scale
            if gn_new >= gn:
                if gn <= 1e3 * tol:
                    return x, gn, it
                raise LineSearchFailure(f"shortening stalled at relative gradient {gn:.2e}")
            x = xn
            E, _ = sh.energy(x)
        else:
            t = 1.0
            while True:
                En, _ = sh.energy(x + t * step)
                if En <= E + 1e-4 * t * (g @ step):
                    break
                t *= 0.5
                if t < 1e-10:
                    raise LineSearchFailure(f"no descent along the shortening step (gradient {gn:.2e})")
            x, E = x + t * step, En
        g, scale = sh.gradient(x)
        gn = float(np.max(np.abs(g))) / scale
    if gn <= tol:
        return x, gn, max_iter
    raise NonConvergence(f"loop shortening hit the iteration cap (gradient {gn:.2e})")


def _shorten_at(h, gamma, z_init, tol):
    sh = _Shortener(h, gamma, z_init)
    x, gn, _ = _minimize(sh, sh.pack(z_init), tol)
    _, L = sh.energy(x)
    return L, sh.unpack(x)


def loop_shorten(h: TensorMetric, word, n_vertices: int = 512, tol: float = 1e-10):
    """Extrapolated h-length of the closed geodesic in the class of ``word``.

    Minimises the discrete energy n Σ L_k² (constant-speed parametrisation of
    the length minimiser) at n and 2n vertices and combines the two lengths by
    one Richardson step for the O(n^-2) polyline error.  ``tol`` bounds the
    gradient relative to its one-sided segment terms."""
    if n_vertices < 64:
        raise ValueError("n_vertices must be at least 64")
    word = Word(word)
    gamma = h.B.group.eval(word)
    if classify(gamma).kind != "hyperbolic":
        raise NotHyperbolic(f"word {word!r} is not hyperbolic")
    z = _axis_polyline(gamma, n_vertices)
    L1, z1 = _shorten_at(h, gamma, z, tol)
    zf = np.empty(2 * n_vertices + 1, complex)
    zf[0::2] = z1
    zf[1::2] = 0.5 * (z1[:-1] + z1[1:])
    L2, z2 = _shorten_at(h, gamma, zf, tol)
    return L2 + (L2 - L1) / 3.0, EquivariantLoop(word, gamma, z2)


@dataclass
class MLSRecord:
    word: str
    T: float
    int_v_lambda: float
    l_g1: float
    l_g2: float
    residual_14: float
    residual_15: float
    residual_mean: float
    residual_flip: float

    def as_dict(self) -> dict:
        return asdict(self)

    def max_residual(self) -> float:
        return max(self.residual_14, self.residual_15, self.residual_mean, self.residual_flip)


def mls_residuals(word, T, ivl, l1, l2) -> MLSRecord:
    return MLSRecord(str(word), float(T), float(ivl), float(l1), float(l2),
                     abs(l1 - T - 0.5 * ivl) / T, abs(l2 - T + 0.5 * ivl) / T,
                     abs(T - 0.5 * (l1 + l2)) / T, abs(ivl - (l1 - l2)) / T)


def mls_report(B: BlaschkeMetric, A, word, orbit: Optional[ClosedOrbit] = None,
               n_vertices: int = 512, family: Optional[MetricFamily] = None,
               tol: float = 1e-10) -> MLSRecord:
    """Period, ∫Vλ and both marked lengths of one class with the four relative residuals."""
    if orbit is None:
        orbit = find_orbit(B, A, word, family=family)
    l1, _ = loop_shorten(h_tensor(B, A, +1), word, n_vertices, tol)
    l2, _ = loop_shorten(h_tensor(B, A, -1), word, n_vertices, tol)
    return mls_residuals(word, orbit.period, orbit.integral_v_lambda, l1, l2)
