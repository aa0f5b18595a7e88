"""Holomorphic quadratic differentials on the octagon surface.

Two representations share one interface (``evaluate``, ``scale``, ``scaled``):

``QuadraticDifferential``
    the truncated weight-4 Poincare series ``t * c * sum gamma'(z)^2 P(gamma z)``
    over the word ball of length N.  Its automorphy defect decays with N.

``AutomorphicDifferential``
    the least-squares projection of a truncated series onto the 3-dimensional
    space of exactly automorphic holomorphic quadratic differentials.  That
    space is computed once as the numerical null space of the automorphy
    conditions on the paired octagon sides, in a polynomial basis built by
    Arnoldi orthogonalization.  All dynamics use this representation.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .errors import BoundaryZero, DomainError
from .fuchsian import LETTERS, SurfaceGroup, build_octagon_group

RAW_SAFE_RADIUS = 0.99
PROBE_POINTS = 400


@functools.lru_cache(maxsize=None)
def default_group() -> SurfaceGroup:
    return build_octagon_group()


def series_terms(group: SurfaceGroup, cutoff: int, z):
    """Seed-basis sums S_j = sum gamma'(z)^2 (gamma z)^j, j = 0, 1, 2, and
    their z-derivatives.  Returns arrays of shape (3, len(z)) each."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    ball = group.ball(cutoff)
    A, B = ball.a, ball.b
    cA, cB = np.conj(A), np.conj(B)
    S = np.zeros((3, len(z)), dtype=complex)
    dS = np.zeros((3, len(z)), dtype=complex)
    # one point at a time keeps the temporaries to a few ball-sized vectors
    for i, zz in enumerate(z):
        r = 1.0 / (cB * zz + cA)
        w = (A * zz + B) * r
        gp = r * r
        gp2 = gp * gp
        t = gp2 * w
        # d/dz [gamma'^2] = -4 conj(b) gamma'^2 / den
        e = gp2 * (cB * r)
        S[0, i] = gp2.sum()
        S[1, i] = t.sum()
        S[2, i] = np.dot(t, w)
        dS[0, i] = -4 * e.sum()
        dS[1, i] = -4 * np.dot(e, w) + np.dot(gp2, gp)
        dS[2, i] = -4 * np.dot(e * w, w) + 2 * np.dot(t, gp)
    return S, dS


def octagon_samples(group: SurfaceGroup, n: int, seed: int = 12345, radius: float = 0.85) -> np.ndarray:
    """Deterministic pseudo-random points of the open octagon."""
    rng = np.random.default_rng(seed)
    out = []
    while sum(len(o) for o in out) < n:
        p = rng.uniform(-radius, radius, (4 * n, 2))
        z = p[:, 0] + 1j * p[:, 1]
        z = z[np.abs(z) < radius]
        out.append(z[group.contains(z, tol=-1e-9)])
    return np.concatenate(out)[:n]


def side_points(group: SurfaceGroup, side: int, m: int, t=None) -> np.ndarray:
    """Points on the geodesic arc of ``side``; Chebyshev-spaced unless t given."""
    lo = group.octagon_vertices[(side - 1) % 8]
    hi = group.octagon_vertices[side]
    c = group.side_centers[side]
    a0, a1 = np.angle(lo - c), np.angle(hi - c)
    d = (a1 - a0 + np.pi) % (2 * np.pi) - np.pi
    if t is None:
        t = (1 - np.cos(np.pi * (np.arange(m) + 0.5) / m)) / 2
    return c + group.side_radius * np.exp(1j * (a0 + d * np.asarray(t)))


def boundary_loop(group: SurfaceGroup, m: int) -> np.ndarray:
    """Counterclockwise closed sampling of the octagon boundary (m points per side)."""
    t = np.arange(m) / m
    return np.concatenate([side_points(group, s, m, t) for s in range(8)])


@functools.lru_cache(maxsize=8)
def _probe_terms(cutoff: int):
    group = default_group()
    z = np.concatenate([octagon_samples(group, PROBE_POINTS), boundary_loop(group, 8)])
    S, dS = series_terms(group, cutoff, z)
    return z, S, dS


@dataclass(frozen=True)
class QuadraticDifferential:
    seed_coefficients: Tuple[complex, complex, complex] = (1.0, 0.3, 0.1j)
    cutoff: int = 6
    scale: float = 1.0
    group: SurfaceGroup = field(default_factory=default_group, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "seed_coefficients", tuple(complex(c) for c in self.seed_coefficients))

    @property
    def seed(self) -> np.ndarray:
        return np.array(self.seed_coefficients, dtype=complex)

    @functools.cached_property
    def normalization(self) -> float:
        """1 / max |series|_sigma over a fixed probe set, so scale = sup |A|_sigma."""
        if not np.any(self.seed):
            return 1.0
        z, S, _ = _probe_terms(self.cutoff)
        a = self.seed @ S
        return float(1.0 / np.max(np.abs(a) * ((1 - np.abs(z) ** 2) / 2) ** 2))

    def scaled(self, t: float) -> "QuadraticDifferential":
        return replace(self, scale=float(t))

    def negated(self) -> "QuadraticDifferential":
        return replace(self, scale=-self.scale)

    @property
    def is_zero(self) -> bool:
        return self.scale == 0 or not np.any(self.seed)

    def evaluate(self, z):
        """Truncated series a(z) and a'(z)."""
        z = np.asarray(z, dtype=complex)
        scalar = z.ndim == 0
        z = np.atleast_1d(z)
        if np.any(np.abs(z) >= 1.0):
            raise DomainError("evaluation point outside the disk")
        if self.is_zero:
            out = np.zeros_like(z), np.zeros_like(z)
        else:
            far = np.abs(z) > RAW_SAFE_RADIUS
            zr, da, db = z.copy(), np.ones_like(z), np.zeros_like(z)
            if np.any(far):
                zr[far], da[far], db[far] = self.group.reduce_many(z[far])
            S, dS = series_terms(self.group, self.cutoff, zr)
            c = self.scale * self.normalization * self.seed
            a, ap = c @ S, c @ dS
            if np.any(far):
                a, ap = _pull_back(a, ap, z, da, db)
            out = a, ap
        return (out[0][0], out[1][0]) if scalar else out


def _pull_back(a_red, ap_red, z, da, db):
    """Given a, a' at delta(z), return a(z) = a(delta z) delta'(z)^2 and its derivative."""
    den = np.conj(db) * z + np.conj(da)
    dp = 1.0 / den**2
    ldp = -2.0 * np.conj(db) / den  # delta''/delta'
    a = a_red * dp**2
    ap = ap_red * dp**3 + a_red * 2 * dp**2 * ldp
    return a, ap


def automorphy_residual(A, z, g) -> np.ndarray:
    """|a(gz) g'(z)^2 - a(z)| / (1 + |a(z)|)."""
    a0, _ = A.evaluate(z)
    a1, _ = A.evaluate(g(z))
    return np.abs(a1 * g.derivative(z) ** 2 - a0) / (1 + np.abs(a0))


def automorphy_study(seed_coefficients, cutoffs=(4, 5, 6, 7), n: int = 100, sample_seed: int = 12345,
                     group: Optional[SurfaceGroup] = None) -> List[float]:
    """Median automorphy residual over ``n`` octagon samples for each cutoff,
    maximised over the generators a, b, c, d."""
    group = group or default_group()
    z = octagon_samples(group, n, seed=sample_seed)
    gens = [group.generators[c] for c in LETTERS[:4]]
    zg = np.concatenate([z] + [g(z) for g in gens])
    out = []
    for N in cutoffs:
        A = QuadraticDifferential(tuple(seed_coefficients), N, 1.0, group=group)
        a, _ = A.evaluate(zg)
        a0 = a[:n]
        med = [np.median(np.abs(a[(k + 1) * n:(k + 2) * n] * g.derivative(z) ** 2 - a0) / (1 + np.abs(a0)))
               for k, g in enumerate(gens)]
        out.append(float(max(med)))
    return out


# ---------------------------------------------------------------------------
# exactly automorphic space


def _arnoldi(Z, n):
    M = len(Z)
    Q = np.zeros((M, n + 1), complex)
    H = np.zeros((n + 1, n), complex)
    Q[:, 0] = 1
    for k in range(n):
        q = Z * Q[:, k]
        for _ in range(2):
            h = Q[:, :k + 1].conj().T @ q / M
            q = q - Q[:, :k + 1] @ h
            H[:k + 1, k] += h
        H[k + 1, k] = np.linalg.norm(q) / np.sqrt(M)
        Q[:, k + 1] = q / H[k + 1, k]
    return H


def _arnoldi_eval(H, S):
    n = H.shape[1]
    W = np.zeros((len(S), n + 1), complex)
    W[:, 0] = 1
    for k in range(n):
        W[:, k + 1] = (S * W[:, k] - W[:, :k + 1] @ H[:k + 1, k]) / H[k + 1, k]
    return W


@dataclass(frozen=True)
class AutomorphicBasis:
    """Three exactly automorphic polynomials, stored as monomial coefficients
    of z/r (r slightly larger than the octagon's vertex radius)."""
    coefficients: np.ndarray  # (3, degree+1)
    radius: float
    singular_values: np.ndarray
    residual: float


@functools.lru_cache(maxsize=4)
def automorphic_basis(degree: int = 110) -> AutomorphicBasis:
    group = default_group()
    m = 3 * degree // 4 + 20
    Zs = np.concatenate([side_points(group, s, m) for s in range(8)])
    H = _arnoldi(Zs, degree)
    rows = []
    for k in range(4):
        z = side_points(group, k + 4, m)
        g = group.generators[LETTERS[k]]
        rows.append(_arnoldi_eval(H, g(z)) * (g.derivative(z) ** 2)[:, None] - _arnoldi_eval(H, z))
    _, s, Vh = np.linalg.svd(np.vstack(rows))
    null = Vh[-3:].conj().T  # (degree+1, 3)
    # monomial conversion by FFT on a circle just outside the octagon
    r = abs(group.octagon_vertices[0]) * 1.01
    nfft = 2 * (degree + 1)
    circle = r * np.exp(2j * np.pi * np.arange(nfft) / nfft)
    vals = _arnoldi_eval(H, circle) @ null  # (nfft, 3)
    coef = np.fft.fft(vals, axis=0).T[:, :degree + 1] / nfft
    return AutomorphicBasis(coef, r, s, float(s[-1] / s[0]))


def _monomial_eval(coef, r, z):
    """Evaluate sum c_k (z/r)^k and its z-derivative for coef of shape (..., n)."""
    n = coef.shape[-1]
    w = np.asarray(z)[..., None] / r
    k = np.arange(n)
    pw = w ** k
    val = pw @ coef.T if coef.ndim == 2 else pw @ coef
    dpw = np.zeros_like(pw)
    dpw[..., 1:] = k[1:] * pw[..., :-1] / r
    dval = dpw @ coef.T if coef.ndim == 2 else dpw @ coef
    return val, dval


@dataclass(frozen=True)
class AutomorphicDifferential:
    coefficients: np.ndarray = field(repr=False)  # monomial coefficients in z/r, unit scale
    radius: float = 1.0
    scale: float = 1.0
    source: Optional[QuadraticDifferential] = None
    fit_residual: float = 0.0
    group: SurfaceGroup = field(default_factory=default_group, repr=False, compare=False)

    @property
    def is_zero(self) -> bool:
        return self.scale == 0 or not np.any(self.coefficients)

    def scaled(self, t: float) -> "AutomorphicDifferential":
        return replace(self, scale=float(t))

    def negated(self) -> "AutomorphicDifferential":
        return replace(self, scale=-self.scale)

    def evaluate_reduced(self, z):
        """a, a' for points already inside the closed octagon (no reduction)."""
        a, ap = _monomial_eval(self.coefficients, self.radius, z)
        return self.scale * a, self.scale * ap

    def evaluate(self, z):
        z = np.asarray(z, dtype=complex)
        scalar = z.ndim == 0
        z = np.atleast_1d(z)
        if self.is_zero:
            out = np.zeros_like(z), np.zeros_like(z)
        else:
            zr, da, db = self.group.reduce_many(z)
            a, ap = self.evaluate_reduced(zr)
            out = _pull_back(a, ap, z, da, db)
        return (out[0][0], out[1][0]) if scalar else out


def project(A: QuadraticDifferential, degree: int = 110, samples: int = 300) -> AutomorphicDifferential:
    """Least-squares projection of a truncated series onto the exact space.

    The returned differential keeps the normalization of A, so ``scale`` has
    the same meaning for both."""
    basis = automorphic_basis(degree)
    if not np.any(A.seed):
        return AutomorphicDifferential(np.zeros(degree + 1, complex), basis.radius, A.scale, A)
    z, S, _ = _probe_terms(A.cutoff)
    z, S = z[:samples], S[:, :samples]
    target = A.normalization * (A.seed @ S)
    Bv, _ = _monomial_eval(basis.coefficients, basis.radius, z)  # (n, 3)
    beta, *_ = np.linalg.lstsq(Bv, target, rcond=None)
    fit = np.linalg.norm(Bv @ beta - target) / np.linalg.norm(target)
    coef = beta @ basis.coefficients
    return AutomorphicDifferential(coef, basis.radius, A.scale, A, float(fit), A.group)


# ---------------------------------------------------------------------------


def zero_count(A, m: int = 64) -> int:
    """Number of zeros of A on the quotient by the argument principle.

    Each pair of glued sides is counted once: a is evaluated on sides 0..3
    and carried to the partner sides k+4 by the automorphy rule.  A truncated
    series is first projected to the exact space; its defect near the
    octagon vertices is large enough to add spurious winding."""
    if isinstance(A, QuadraticDifferential):
        A = project(A)
    group = A.group
    t = np.arange(m) / m
    vals = []
    for s in range(8):
        if s < 4:
            z = side_points(group, s, m, t)
            a, _ = A.evaluate(z)
        else:
            z = side_points(group, s, m, t)
            g = group.generators[LETTERS[s - 4]]
            a, _ = A.evaluate(g(z))
            a = a * g.derivative(z) ** 2
        vals.append(a)
    a = np.concatenate(vals)
    mag = np.abs(a)
    if np.min(mag) < 1e-6 * np.max(mag):
        raise BoundaryZero("a zero of A lies on (or next to) the octagon boundary")
    dph = np.diff(np.angle(np.append(a, a[0])))
    dph = (dph + np.pi) % (2 * np.pi) - np.pi
    if np.max(np.abs(dph)) > np.pi / 2 and m < 512:
        return zero_count(A, 2 * m)
    return int(round(np.sum(dph) / (2 * np.pi)))


def zero_locations(A, n: int = 48, tol: float = 1e-12) -> np.ndarray:
    """Zeros of A in the octagon: grid minima of |a| polished by Newton and
    de-duplicated on the quotient (points are returned reduced)."""
    if isinstance(A, QuadraticDifferential):
        A = project(A)
    group = A.group
    r = abs(group.octagon_vertices[0])
    xs = np.linspace(-r, r, n)
    X, Y = np.meshgrid(xs, xs)
    z = (X + 1j * Y).ravel()
    z = z[group.contains(z, tol=1e-3)]
    a, _ = A.evaluate(z)
    # keep the smallest grid values as seeds
    seeds = z[np.argsort(np.abs(a))[: 8 * 8]]
    found = []
    for w in seeds:
        for _ in range(50):
            aw, dw = A.evaluate(np.array([w]))
            if dw[0] == 0:
                break
            step = aw[0] / dw[0]
            w = w - step
            if abs(w) > 0.999:
                break
            if abs(step) < tol:
                break
        if abs(w) > 0.999 or abs(A.evaluate(np.array([w]))[0][0]) > 1e-9:
            continue
        wr, _ = group.reduce(w)
        if all(abs(wr - f) > 1e-6 for f in found):
            found.append(wr)
    return np.array(sorted(found, key=lambda c: (round(c.real, 9), round(c.imag, 9))))


@dataclass(frozen=True)
class SMPullback:
    lam: float
    v_lambda: float
    a_value: complex


def pullback_lambda(A, z, theta, phi) -> SMPullback:
    """lambda = Im(a e^{2i theta} e^{-2 phi}), V lambda = 2 Re(same)."""
    a, _ = A.evaluate(z)
    q = a * np.exp(2j * np.asarray(theta) - 2 * np.asarray(phi))
    return SMPullback(np.imag(q), 2 * np.real(q), a)


def export_grid_csv(A, path, n: int = 41) -> int:
    """Dump a on a square grid restricted to the octagon; returns row count."""
    import csv

    r = abs(A.group.octagon_vertices[0])
    xs = np.linspace(-r, r, n)
    X, Y = np.meshgrid(xs, xs)
    z = (X + 1j * Y).ravel()
    z = z[A.group.contains(z)]
    a, ap = A.evaluate(z)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "re_a", "im_a", "re_da", "im_da"])
        for zi, ai, api in zip(z, a, ap):
            w.writerow([f"{zi.real:.12g}", f"{zi.imag:.12g}", f"{ai.real:.12g}", f"{ai.imag:.12g}",
                        f"{api.real:.12g}", f"{api.imag:.12g}"])
    return len(z)
