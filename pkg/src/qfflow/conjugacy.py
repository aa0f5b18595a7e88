"""The bundle map I: SM_g -> SM_h, I_x = -K_g(x)^{-1}(id - 𝔸_x), and its coframe pullbacks.

h = h₊ = 2Re A + (1 + |A|²_g) g.  Chart vectors are complex-coded
(x + iy); g = e^{2φ}|dz|² and 𝔸 = e^{-2φ}[[Re a, -Im a], [-Im a, -Re a]].
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .blaschke import BlaschkeMetric
from .dynamics import UnitTangentState, frames, local_data
from .errors import Degenerate, StepTooLarge

FD_STEP = 1e-5


@dataclass
class AOperator:
    """Chart matrix of 𝔸 at one point together with |A|²_g."""

    matrix: np.ndarray
    norm_sq: float

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))

    def square_residual(self) -> float:
        return float(np.max(np.abs(self.matrix @ self.matrix - self.norm_sq * np.eye(2))))


def _point(B, A, z, mode=None):
    d = local_data(B, A, np.atleast_1d(complex(z)), mode)
    return (float(d.phi[0]), float(d.px[0]), float(d.py[0]), complex(d.a[0]), complex(d.ap[0]))


def a_operator(B: BlaschkeMetric, A, z, mode: Optional[str] = None) -> AOperator:
    phi, _, _, a, _ = _point(B, A, z, mode)
    R = np.array([[a.real, -a.imag], [-a.imag, -a.real]])
    return AOperator(np.exp(-2 * phi) * R, abs(a) ** 2 * np.exp(-4 * phi))


def _h_matrix(phi, a, sign=1):
    c = np.exp(2 * phi) + abs(a) ** 2 * np.exp(-2 * phi)
    return 2 * sign * np.array([[a.real, -a.imag], [-a.imag, -a.real]]) + c * np.eye(2)


def _h_derivatives(phi, px, py, a, ap, sign=1):
    """(∂_x h, ∂_y h) chart matrices."""
    e2 = np.exp(2 * phi)
    a2 = abs(a) ** 2
    out = []
    for dphi, da in ((px, ap), (py, 1j * ap)):
        dc = 2 * dphi * e2 + (2 * (np.conj(a) * da).real - 2 * dphi * a2) / e2
        out.append(2 * sign * np.array([[da.real, -da.imag], [-da.imag, -da.real]]) + dc * np.eye(2))
    return out


def christoffel(phi, px, py, a, ap, sign=1) -> np.ndarray:
    """Γ[k, i, j] of h in the disk chart."""
    h = _h_matrix(phi, a, sign)
    dh = _h_derivatives(phi, px, py, a, ap, sign)
    hinv = np.linalg.inv(h)
    first = np.empty((2, 2, 2))  # Γ_{l i j}
    for i in range(2):
        for j in range(2):
            for l in range(2):
                first[l, i, j] = 0.5 * (dh[i][j, l] + dh[j][i, l] - dh[l][i, j])
    return np.einsum("kl,lij->kij", hinv, first)


def _vec(w: complex) -> np.ndarray:
    return np.array([w.real, w.imag])


def _rot_h(h: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Rotation by +π/2 in the metric h."""
    hw = h @ w
    return np.array([-hw[1], hw[0]]) / np.sqrt(np.linalg.det(h))


def _i_vector(B, A, z, theta, mode=None) -> np.ndarray:
    phi, _, _, a, _ = _point(B, A, z, mode)
    v = np.exp(-phi) * np.array([np.cos(theta), np.sin(theta)])
    M = np.exp(-2 * phi) * np.array([[a.real, -a.imag], [-a.imag, -a.real]])
    K = -1.0 + abs(a) ** 2 * np.exp(-4 * phi)
    if K >= 0:
        raise Degenerate(f"K_g = {K:.3g} >= 0 at z = {z}")
    return -(v - M @ v) / K


@dataclass
class BundleMapSample:
    state: UnitTangentState
    g_vector: np.ndarray
    h_vector: np.ndarray
    h_norm: float
    inverse_residual: float
    K: float


def i_map(B: BlaschkeMetric, A, s: UnitTangentState, mode: Optional[str] = None) -> BundleMapSample:
    """I_x(v) for v = e^{-φ} e^{iθ}, with its h-norm and |(id + 𝔸) I v - v|."""
    phi, _, _, a, _ = _point(B, A, s.z, mode)
    v = np.exp(-phi) * np.array([np.cos(s.theta), np.sin(s.theta)])
    M = np.exp(-2 * phi) * np.array([[a.real, -a.imag], [-a.imag, -a.real]])
    K = -1.0 + abs(a) ** 2 * np.exp(-4 * phi)
    if K >= 0:
        raise Degenerate(f"K_g = {K:.3g} >= 0 at z = {s.z}")
    w = -(v - M @ v) / K
    h = _h_matrix(phi, a)
    norm = float(np.sqrt(w @ h @ w))
    back = w + M @ w
    scale = max(1.0, float(np.max(np.abs(v))))
    return BundleMapSample(s, v, w, norm, float(np.max(np.abs(back - v))) / scale, K)


def rotation_commutation(B: BlaschkeMetric, A, s: UnitTangentState, angle: float,
                         mode: Optional[str] = None) -> float:
    """|I(rot_g(angle) v) - rot_h(angle) I(v)| in units of the chart scale of v."""
    phi, _, _, a, _ = _point(B, A, s.z, mode)
    h = _h_matrix(phi, a)
    w = _i_vector(B, A, s.z, s.theta, mode)
    lhs = _i_vector(B, A, s.z, s.theta + angle, mode)
    rhs = np.cos(angle) * w + np.sin(angle) * _rot_h(h, w)
    return float(np.max(np.abs(lhs - rhs)) * np.exp(phi))


@dataclass
class CoframeResiduals:
    res_alpha: float
    res_beta: float
    res_psi: float
    res_volume: float
    volume_factor: float
    alpha_F: float
    alpha_F_expected: float
    kernel_F: float
    kernel_stable: float
    fd_error: float

    def as_dict(self) -> dict:
        return asdict(self)


def pulled_back_coframe(B: BlaschkeMetric, A, s: UnitTangentState, mode: Optional[str] = None,
                        step: float = FD_STEP, budget: float = 1e-7):
    """Rows I*α₁, I*β₁, I*ψ₁ evaluated on the columns X, H, V at s.

    dI is taken by central differences along coordinate curves in (x, y, θ)
    at steps ``step`` and ``step``/2 and Richardson-combined; the difference
    is the error estimate, which must stay below ``budget``."""
    fr = frames(B, A, s, mode)
    phi, px, py, a, ap = _point(B, A, s.z, mode)
    h = _h_matrix(phi, a)
    Gam = christoffel(phi, px, py, a, ap)
    w = _i_vector(B, A, s.z, s.theta, mode)
    iw = _rot_h(h, w)
    out = np.zeros((3, 3))
    err = 0.0
    for col, xi in enumerate((fr.X, fr.H, fr.V)):
        def wdot(e):
            zp = s.z + e * complex(xi[0], xi[1])
            zm = s.z - e * complex(xi[0], xi[1])
            return (_i_vector(B, A, zp, s.theta + e * xi[2], mode)
                    - _i_vector(B, A, zm, s.theta - e * xi[2], mode)) / (2 * e)

        d1, d2 = wdot(step), wdot(step / 2)
        dw = d2 + (d2 - d1) / 3
        scale = max(1.0, float(np.max(np.abs(d2))))
        err = max(err, float(np.max(np.abs(d2 - d1))) / scale)
        base = xi[:2]
        Dw = dw + np.einsum("kij,i,j->k", Gam, base, w)
        out[0, col] = w @ h @ base
        out[1, col] = iw @ h @ base
        out[2, col] = iw @ h @ Dw
    if err > budget:
        raise StepTooLarge(f"finite-difference error estimate {err:.2e} exceeds {budget:.1e}")
    return out, fr, err


def coframe_residuals(B: BlaschkeMetric, A, s: UnitTangentState, mode: Optional[str] = None,
                      step: float = FD_STEP, budget: float = 1e-7) -> CoframeResiduals:
    P, fr, err = pulled_back_coframe(B, A, s, mode, step, budget)
    lam, vl = fr.lam, fr.v_lambda
    exp_alpha = np.array([1 + 0.5 * vl, -lam, 0.0])
    exp_beta = np.array([-lam, 1 - 0.5 * vl, 0.0])
    exp_psi = np.array([0.0, 0.0, 1.0])
    vol = float(np.linalg.det(P))
    # I*α₁(F) and the kernel of I*(β₁ + ψ₁) on F = X + λV and H + r_s V
    on_F = P @ np.array([1.0, 0.0, lam])
    on_stable = P @ np.array([0.0, 1.0, fr.r_s])
    return CoframeResiduals(
        res_alpha=float(np.max(np.abs(P[0] - exp_alpha))),
        res_beta=float(np.max(np.abs(P[1] - exp_beta))),
        res_psi=float(np.max(np.abs(P[2] - exp_psi))),
        res_volume=abs(vol + fr.K),
        volume_factor=vol,
        alpha_F=float(on_F[0]),
        alpha_F_expected=1 + 0.5 * vl,
        kernel_F=abs(float(on_F[1] + on_F[2])),
        kernel_stable=abs(float(on_stable[1] + on_stable[2])),
        fd_error=err,
    )


def connection_crosscheck(B: BlaschkeMetric, A, z, mode: Optional[str] = None,
                          step: float = 1e-5) -> float:
    """Compare the connection form of an h-orthonormal frame computed from
    Christoffel symbols with the one recovered from Cartan's equations
    dθ¹ = ω ∧ θ², dθ² = -ω ∧ θ¹ (exterior derivatives by central differences)."""

    def frame(zz):
        phi, _, _, a, _ = _point(B, A, zz, mode)
        h = _h_matrix(phi, a)
        e1 = np.array([1.0, 0.0]) / np.sqrt(h[0, 0])
        e2 = _rot_h(h, e1)
        E = np.column_stack([e1, e2])
        return h, E, np.linalg.inv(E)  # rows of E^{-1} are the coframe θ¹, θ²

    h, E, C = frame(z)
    phi, px, py, a, ap = _point(B, A, z, mode)
    Gam = christoffel(phi, px, py, a, ap)
    e1, e2 = E[:, 0], E[:, 1]
    # ω(e_i) = h(∇_{e_i} e1, e2), with ∂e1 by central differences
    dE = []
    dC = []
    for d in (1.0, 1j):
        _, Ep, Cp = frame(z + step * d)
        _, Em, Cm = frame(z - step * d)
        dE.append((Ep - Em) / (2 * step))
        dC.append((Cp - Cm) / (2 * step))
    chris = []
    for ei in (e1, e2):
        de1 = ei[0] * dE[0][:, 0] + ei[1] * dE[1][:, 0]
        nabla = de1 + np.einsum("kij,i,j->k", Gam, ei, e1)
        chris.append(nabla @ h @ e2)
    # dθ^k(e1, e2) = Σ_ij (∂_i θ^k_j - ∂_j θ^k_i) e1^i e2^j
    dtheta = []
    for k in range(2):
        curl = dC[0][k, 1] - dC[1][k, 0]
        dtheta.append(curl * (e1[0] * e2[1] - e1[1] * e2[0]))
    # dθ¹(e1,e2) = ω(e1)·0 - ... : dθ¹ = ω∧θ² gives dθ¹(e1,e2) = ω(e1); dθ² = -ω∧θ¹ gives dθ²(e1,e2) = ω(e2)
    cartan = [dtheta[0], dtheta[1]]
    return float(max(abs(chris[0] - cartan[0]), abs(chris[1] - cartan[1])))
