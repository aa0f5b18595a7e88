"""The thermostat flow F = X + lambda V on the unit circle bundle of the
Blaschke metric, in universal-cover coordinates (x, y, theta).

A state (z, theta) represents the g-unit vector e^{-phi(z)} e^{i theta}.
The frame:

    X = e^{-phi} (cos t, sin t, cos t phi_y - sin t phi_x)
    H = e^{-phi} (-sin t, cos t, -(sin t phi_y + cos t phi_x))
    V = (0, 0, 1)

with lambda = Im(a e^{2i t} e^{-2 phi}) and V lambda = 2 Re(a e^{2i t} e^{-2 phi}).
Trajectories are re-centered by deck transformations whenever |z| exceeds
``RECENTER_RADIUS``; the accumulated transform is kept so that the lifted
trajectory can always be recovered.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .blaschke import BlaschkeMetric, cover_phi
from .errors import StepFailure
from .fuchsian import Word
from .geometry import Mobius, compose

RECENTER_RADIUS = 0.9


@dataclass(frozen=True)
class UnitTangentState:
    z: complex
    theta: float
    deck_word: Word = Word("")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.z.real, self.z.imag, self.theta])

    @staticmethod
    def from_vector(v, deck_word: Word = Word("")) -> "UnitTangentState":
        return UnitTangentState(complex(v[0], v[1]), float(v[2]), Word(deck_word))

    def moved(self, g: Mobius) -> "UnitTangentState":
        """Image under the isometry g: (z, theta) -> (gz, theta + arg g'(z))."""
        return UnitTangentState(complex(g(self.z)), float(self.theta + np.angle(g.derivative(self.z))), self.deck_word)


def act(g: Mobius, v) -> np.ndarray:
    z = complex(v[0], v[1])
    w = g(z)
    return np.array([w.real, w.imag, v[2] + np.angle(g.derivative(z))])


def act_jacobian(g: Mobius, v) -> np.ndarray:
    """Derivative of (z, theta) -> (gz, theta + arg g'(z)) in (x, y, theta)."""
    z = complex(v[0], v[1])
    d = g.derivative(z)
    c = g.log_derivative(z)  # d/dz log g'; d/dx arg g' = Im c, d/dy arg g' = Re c
    return np.array([[d.real, -d.imag, 0.0], [d.imag, d.real, 0.0], [c.imag, c.real, 1.0]])


@dataclass
class LocalData:
    phi: np.ndarray
    px: np.ndarray
    py: np.ndarray
    pxx: np.ndarray
    pxy: np.ndarray
    pyy: np.ndarray
    a: np.ndarray
    ap: np.ndarray


def local_data(B: BlaschkeMetric, A, z, mode: Optional[str] = None) -> LocalData:
    """phi with two derivatives and a, a' at cover points z (arrays)."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    zr, da, db = B.group.reduce_many(z)
    ph = cover_phi(z, da, db, B.u_reduced(zr, mode))
    if A.is_zero:
        a = ap = np.zeros_like(z)
    elif hasattr(A, "evaluate_reduced"):
        ar, apr = A.evaluate_reduced(zr)
        den = np.conj(db) * z + np.conj(da)
        dp = 1.0 / den**2
        a = ar * dp**2
        ap = apr * dp**3 + ar * 2 * dp**2 * (-2.0 * np.conj(db) / den)
    else:
        a, ap = A.evaluate(z)
    return LocalData(*ph, a, ap)


@dataclass
class FrameValues:
    X: np.ndarray
    H: np.ndarray
    V: np.ndarray
    F: np.ndarray
    lam: float
    v_lambda: float
    r_s: float
    r_u: float
    K: float


def _frames_from(d: LocalData, th):
    c, s = np.cos(th), np.sin(th)
    e = np.exp(-d.phi)
    X = np.stack([e * c, e * s, e * (c * d.py - s * d.px)], -1)
    H = np.stack([-e * s, e * c, -e * (s * d.py + c * d.px)], -1)
    q = d.a * np.exp(2j * th - 2 * d.phi)
    return X, H, q.imag, 2 * q.real


def frames(B: BlaschkeMetric, A, s: UnitTangentState, mode: Optional[str] = None) -> FrameValues:
    d = local_data(B, A, s.z, mode)
    X, H, lam, vl = _frames_from(d, s.theta)
    X, H, lam, vl = X[0], H[0], float(lam[0]), float(vl[0])
    V = np.array([0.0, 0.0, 1.0])
    K = float(-1 + np.abs(d.a[0]) ** 2 * np.exp(-4 * d.phi[0]))
    return FrameValues(X, H, V, X + lam * V, lam, vl, -1 + vl / 2, 1 + vl / 2, K)


def frames_many(B, A, z, theta, mode=None):
    """Vectorized (X, H, lambda, V lambda, K) at arrays of states."""
    d = local_data(B, A, z, mode)
    X, H, lam, vl = _frames_from(d, np.asarray(theta))
    K = -1 + np.abs(d.a) ** 2 * np.exp(-4 * d.phi)
    return X, H, lam, vl, K


class ThermostatField:
    """Vector field F and its Jacobian in (x, y, theta)."""

    def __init__(self, B: BlaschkeMetric, A, mode: Optional[str] = None):
        self.B, self.A, self.mode = B, A, mode
        self.evaluations = 0

    def _data(self, v):
        self.evaluations += 1
        return local_data(self.B, self.A, complex(v[0], v[1]), self.mode)

    def __call__(self, v):
        d = self._data(v)
        X, _, lam, _ = _frames_from(d, v[2])
        out = X[0].copy()
        out[2] += lam[0]
        return out

    def with_jacobian(self, v):
        d = self._data(v)
        th = v[2]
        c, s = np.cos(th), np.sin(th)
        e = np.exp(-d.phi[0])
        px, py, pxx, pxy, pyy = d.px[0], d.py[0], d.pxx[0], d.pxy[0], d.pyy[0]
        E = np.exp(2j * th - 2 * d.phi[0])
        q = d.a[0] * E
        lam, vl = q.imag, 2 * q.real
        w = c * py - s * px
        F = np.array([e * c, e * s, e * w + lam])
        lx = ((d.ap[0] - 2 * d.a[0] * px) * E).imag
        ly = ((1j * d.ap[0] - 2 * d.a[0] * py) * E).imag
        J = np.array([
            [-px * e * c, -py * e * c, -e * s],
            [-px * e * s, -py * e * s, e * c],
            [-px * e * w + e * (c * pxy - s * pxx) + lx,
             -py * e * w + e * (c * pyy - s * pxy) + ly,
             -e * (s * py + c * px) + vl],
        ])
        return F, J


@dataclass
class Trajectory:
    """Result of ``integrate``.  ``deck`` is the accumulated re-centering
    transform D: the lifted (un-recentered) state at any time is D^{-1}
    applied to the stored state; ``deck_times`` lists when D changed."""

    state: UnitTangentState
    t: np.ndarray
    samples: np.ndarray  # (n, 3) stored (recentered) states
    lam: np.ndarray
    v_lambda: np.ndarray
    deck: Mobius
    jacobian: Optional[np.ndarray] = None
    recenterings: int = 0
    steps: int = 0

    @property
    def final(self) -> np.ndarray:
        return self.state.vector


def integrate(B: BlaschkeMetric, A, s0: UnitTangentState, T: float, tol: float = 1e-10,
              samples: Optional[Sequence[float]] = None, variational: bool = False,
              mode: Optional[str] = None, force_recenter_at: Optional[float] = None,
              recenter_radius: float = RECENTER_RADIUS, max_step: float = np.inf) -> Trajectory:
    """Integrate F for time T (negative T runs backwards).

    ``samples`` are times (between 0 and T) at which states are recorded.
    With ``variational`` the derivative of the time-T map is returned in
    ``jacobian``, expressed in the stored coordinates at both ends.
    ``force_recenter_at`` re-centers at that time even if |z| is small."""
    if not 1e-13 <= tol <= 1e-5:
        raise ValueError("tol outside [1e-13, 1e-5]")
    field_ = ThermostatField(B, A, mode)
    group = B.group
    direction = 1.0 if T >= 0 else -1.0

    def rhs(t, y):
        if not variational:
            return field_(y)
        F, J = field_.with_jacobian(y[:3])
        return np.concatenate([F, (J @ y[3:].reshape(3, 3)).ravel()])

    def leave(t, y):
        return y[0] ** 2 + y[1] ** 2 - recenter_radius**2

    leave.terminal = True
    leave.direction = 1

    sample_t = np.array([] if samples is None else samples, dtype=float)
    taken = np.zeros(len(sample_t), bool)
    out_t: List[float] = []
    out_y: List[np.ndarray] = []
    y = s0.vector.copy()
    if variational:
        y = np.concatenate([y, np.eye(3).ravel()])
    deck = Mobius.identity()
    word = Word(s0.deck_word)
    t = 0.0
    nrec = nsteps = 0
    pending_force = force_recenter_at is not None
    while direction * (T - t) > 0:
        t_end = T
        if pending_force and direction * (force_recenter_at - t) > 0:
            t_end = force_recenter_at
        sol = solve_ivp(rhs, (t, t_end), y, method="DOP853", rtol=tol, atol=tol * 1e-2,
                        dense_output=True, events=leave, max_step=max_step)
        if sol.status == -1:
            raise StepFailure(sol.message)
        nsteps += len(sol.t) - 1
        t_new = float(sol.t[-1])
        lo, hi = min(t, t_new), max(t, t_new)
        sel = ~taken & (sample_t >= lo - 1e-14) & (sample_t <= hi + 1e-14)
        if np.any(sel):
            ts = np.clip(sample_t[sel], lo, hi)
            out_t.extend(sample_t[sel].tolist())
            out_y.extend(list(sol.sol(ts)[:3].T))
            taken |= sel
        y = sol.y[:, -1].copy()
        t = t_new
        moves = []
        if pending_force and t == force_recenter_at:
            pending_force = False
            moves.append(group.generators["a"])
        if sol.status == 1 or moves:
            z = complex(y[0], y[1])
            if moves:
                z = moves[0](z)
            _, w = group.reduce(z)
            g = group.eval(w)
            if moves:
                g = compose(g, moves[0])
                w = Word(str(w) + "a")
            if len(w):
                if variational:
                    y[3:] = (act_jacobian(g, y[:3]) @ y[3:].reshape(3, 3)).ravel()
                y[:3] = act(g, y[:3])
                deck = compose(g, deck)
                word = Word(str(w) + str(word))
                nrec += 1
    final = UnitTangentState.from_vector(y[:3], word)
    order = np.argsort(direction * np.array(out_t)) if out_t else np.array([], int)
    ts = np.array(out_t)[order] if out_t else np.zeros(0)
    ys = np.array(out_y)[order] if out_y else np.zeros((0, 3))
    if len(ts):
        _, _, lam, vl, _ = frames_many(B, A, ys[:, 0] + 1j * ys[:, 1], ys[:, 2], mode)
    else:
        lam = vl = np.zeros(0)
    J = y[3:].reshape(3, 3) if variational else None
    return Trajectory(final, ts, ys, lam, vl, deck, J, nrec, nsteps)


def transport_jacobian(B, A, s0: UnitTangentState, T: float, tol: float = 1e-10, mode=None) -> np.ndarray:
    """Derivative of the time-T flow map, from the variational equations.
    Re-centerings conjugate it by the deck derivative."""
    if T == 0:
        return np.eye(3)
    return integrate(B, A, s0, T, tol, variational=True, mode=mode).jacobian


def unlift(traj: Trajectory) -> UnitTangentState:
    """The final state in the chart of the initial state (undo re-centering)."""
    return UnitTangentState.from_vector(act(traj.deck.inverse(), traj.final))


def coordinate_volume_factor(B, s: UnitTangentState, mode=None) -> float:
    """e^{2 phi}: density of the Liouville volume in (x, y, theta)."""
    return float(np.exp(2 * B.phi_derivatives(s.z, mode)[0]))


def liouville_determinant(B, A, s0: UnitTangentState, T: float, tol: float = 1e-10, mode=None):
    """(det of the flow Jacobian w.r.t. Liouville volume, exp(int_0^T V lambda)).

    The coordinate Jacobian carries the ratio of the conformal densities at
    the two ends, which is divided out here."""
    n = max(256, int(np.ceil(256 * abs(T))) + 1)
    ts = np.linspace(0, T, n)
    tr = integrate(B, A, s0, T, tol, samples=ts, variational=True, mode=mode)
    det = np.linalg.det(tr.jacobian)
    det *= coordinate_volume_factor(B, tr.state, mode) / coordinate_volume_factor(B, s0, mode)
    from scipy.integrate import simpson

    integral = simpson(tr.v_lambda, x=tr.t)
    return det, float(np.exp(integral))


@dataclass
class StructureResiduals:
    """Frame brackets, holomorphy of A on SM and the pointwise norm identity.
    Bracket residuals are measured in (X, H, V) frame coefficients."""

    bracket_VX: float
    bracket_XH: float
    bracket_HV: float
    holomorphy_1: float
    holomorphy_2: float
    norm_identity: float


def structure_residuals(B, A, s: UnitTangentState, step: float = 1e-5, mode=None) -> StructureResiduals:
    """[V,X] - H, [X,H] - K V, [H,V] - X by central differences of the frame
    fields; X Vλ - 2Hλ and H Vλ + 2Xλ by central differences along the flows
    of X and H to first order; (Vλ)²/4 + λ² - |A|²_g algebraically."""
    v0 = s.vector

    def fields(v):
        fr = frames(B, A, UnitTangentState.from_vector(v), mode)
        return fr

    def jac(name):
        cols = []
        for k in range(3):
            e = np.zeros(3)
            e[k] = step
            cols.append((getattr(fields(v0 + e), name) - getattr(fields(v0 - e), name)) / (2 * step))
        return np.column_stack(cols)

    fr = fields(v0)
    DX, DH, DV = jac("X"), jac("H"), np.zeros((3, 3))

    def br(DP, P, DQ, Q):
        return DQ @ P - DP @ Q

    def coef(w):
        return float(np.max(np.abs(frame_coefficients(fr, w))))

    r_vx = coef(br(DV, fr.V, DX, fr.X) - fr.H)
    r_xh = coef(br(DX, fr.X, DH, fr.H) - fr.K * fr.V)
    r_hv = coef(br(DH, fr.H, DV, fr.V) - fr.X)

    def deriv(direction, name):
        p = fields(v0 + step * direction)
        m = fields(v0 - step * direction)
        return (getattr(p, name) - getattr(m, name)) / (2 * step)

    hol1 = abs(deriv(fr.X, "v_lambda") - 2 * deriv(fr.H, "lam"))
    hol2 = abs(deriv(fr.H, "v_lambda") + 2 * deriv(fr.X, "lam"))
    d = local_data(B, A, np.array([s.z]), mode)
    a2 = float(np.abs(d.a[0]) ** 2 * np.exp(-4 * d.phi[0]))
    ident = abs(fr.v_lambda**2 / 4 + fr.lam**2 - a2)
    return StructureResiduals(r_vx, r_xh, r_hv, float(hol1), float(hol2), float(ident))


def plane_angle(vec, P1, P2) -> float:
    """Angle between vec and span{P1, P2}, with (X, H, V) orthonormal.
    All arguments are frame coefficients (3-vectors)."""
    n = np.cross(P1, P2)
    return float(np.arcsin(min(1.0, abs(n @ vec) / (np.linalg.norm(n) * np.linalg.norm(vec)))))


def frame_coefficients(fr: FrameValues, w) -> np.ndarray:
    M = np.column_stack([fr.X, fr.H, fr.V])
    return np.linalg.solve(M, w)


@dataclass
class BundleResidual:
    stable_residual: float
    unstable_alignment_rate: float
    stable_angles: np.ndarray = field(repr=False, default=None)
    unstable_angles: np.ndarray = field(repr=False, default=None)


def weak_bundle_residual(B, A, s0: UnitTangentState, T: float = 5.0, tol: float = 1e-11,
                         mode=None, corrupt_rs: bool = False, n_checkpoints: int = 11,
                         probe=(0.3, 1.0, -0.7)) -> BundleResidual:
    """Invariance of R F + R (H + r_s V) and alignment towards R F + R (H + r_u V).

    stable_residual: angle between dphi_T(H + r_s V) and the stable plane at
    the endpoint.  unstable_alignment_rate: least-squares slope of
    -log(angle) of a generic pushed vector to the unstable plane (the angle
    decays like e^{-rate t}).  ``corrupt_rs`` flips the sign of V lambda / 2
    in r_s (negative control)."""
    if not 1 <= T <= 10:
        raise ValueError("T must lie in [1, 10]")

    def rs(fr):
        return -1 - fr.v_lambda / 2 if corrupt_rs else fr.r_s

    f0 = frames(B, A, s0, mode)
    ws = f0.H + rs(f0) * f0.V
    wg = np.array(probe, dtype=float) @ np.array([f0.X, f0.H, f0.V])
    times = np.linspace(0, T, n_checkpoints)
    state = s0
    vs, vg = ws.copy(), wg.copy()
    sang, uang = [0.0], [plane_angle(frame_coefficients(f0, wg), np.array([1, 0, f0.lam]), np.array([0, 1, f0.r_u]))]
    for k in range(1, n_checkpoints):
        tr = integrate(B, A, state, times[k] - times[k - 1], tol, variational=True, mode=mode)
        vs, vg = tr.jacobian @ vs, tr.jacobian @ vg
        vs /= np.linalg.norm(vs)
        vg /= np.linalg.norm(vg)
        state = tr.state
        fr = frames(B, A, state, mode)
        Fc = np.array([1.0, 0.0, fr.lam])
        sang.append(plane_angle(frame_coefficients(fr, vs), Fc, np.array([0.0, 1.0, rs(fr)])))
        uang.append(plane_angle(frame_coefficients(fr, vg), Fc, np.array([0.0, 1.0, fr.r_u])))
    uang = np.array(uang)
    ok = uang > 1e-13
    rate = -np.polyfit(times[ok], np.log(uang[ok]), 1)[0] if ok.sum() >= 3 else float("inf")
    return BundleResidual(float(sang[-1]), float(rate), np.array(sang), uang)


def export_dense_csv(traj: Trajectory, path) -> int:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "theta", "lambda", "v_lambda"])
        for t, y, l, v in zip(traj.t, traj.samples, traj.lam, traj.v_lambda):
            w.writerow([f"{t:.12g}", f"{y[0]:.12g}", f"{y[1]:.12g}", f"{y[2]:.12g}", f"{l:.12g}", f"{v:.12g}"])
    return len(traj.t)
