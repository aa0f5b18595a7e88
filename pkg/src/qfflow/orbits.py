"""Closed thermostat orbits in a free homotopy class.

For a word with deck transform gamma the orbit is a fixed point of the
twisted return map s -> gamma^{-1} Phi_T(s).  The return map expands by
roughly e^T, so the fixed point is found by multiple shooting: segment
starts along a continuous lift plus T, with the phase condition
F(s0) . ds = 0.  Newton is started from the axis of gamma at A = 0 (the
closed geodesic) and continued in the scale of the differential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .blaschke import BlaschkeMetric, MetricFamily
from .dynamics import ThermostatField, UnitTangentState, act, act_jacobian, integrate
from .errors import ContinuationFailure, InsufficientSamples, NonConvergence, NotHyperbolic
from .fuchsian import Word
from .geometry import axis_base_point, classify, compose

SAMPLES_PER_UNIT = 256
SEGMENT_LENGTH = 1.0


@dataclass
class ClosedOrbit:
    word: Word
    state0: UnitTangentState
    period: float
    scale: float
    residual: float
    t: np.ndarray = field(repr=False)
    samples: np.ndarray = field(repr=False)
    lam: np.ndarray = field(repr=False)
    v_lambda: np.ndarray = field(repr=False)
    integral_v_lambda: float = float("nan")
    monodromy_eigenvalues: np.ndarray = field(default=None, repr=False)
    newton_iterations: int = 0

    def transverse_eigenvalues(self) -> np.ndarray:
        ev = self.monodromy_eigenvalues
        return np.delete(ev, np.argmin(np.abs(ev - 1)))

    def record(self) -> dict:
        return {"word": str(self.word), "T": self.period, "integral_v_lambda": self.integral_v_lambda,
                "residual": self.residual}


def _wrap(x):
    return (x + np.pi) % (2 * np.pi) - np.pi


def _segment(B, A, v, tau, tol, group):
    """Flow a segment from v for time tau; returns the endpoint in the chart
    of v, its derivative w.r.t. v, and F at the endpoint (same chart)."""
    _, w = group.reduce(complex(v[0], v[1]))
    C = group.eval(w)
    tr = integrate(B, A, UnitTangentState.from_vector(act(C, v)), tau, tol, variational=True)
    back = compose(tr.deck, C).inverse()
    end = act(back, tr.final)
    Dback = act_jacobian(back, tr.final)
    M = Dback @ tr.jacobian @ act_jacobian(C, v)
    Fend = Dback @ ThermostatField(B, A)(tr.final)
    return end, M, Fend


def _segments_from_flow(B, A, v0, T, m, tol, group):
    pts = [np.asarray(v0, float)]
    for _ in range(m - 1):
        pts.append(_segment(B, A, pts[-1], T / m, tol, group)[0])
    return np.array(pts)


def _newton(B, A, gamma, V, T, tol, ode_tol, max_iter=12):
    """Multiple shooting: V holds m segment starts (continuous lift)."""
    group = B.group
    m = len(V)
    G = gamma.inverse()
    field_ = ThermostatField(B, A)
    res = np.inf
    for it in range(1, max_iter + 1):
        n = 3 * m + 1
        J = np.zeros((n, n))
        R = np.zeros(n)
        mats = []
        for k in range(m):
            end, M, Fend = _segment(B, A, V[k], T / m, ode_tol, group)
            nxt = V[(k + 1) % m]
            if k == m - 1:
                DG = act_jacobian(G, end)
                end, M, Fend = act(G, end), DG @ M, DG @ Fend
            r = end - nxt
            r[2] = _wrap(r[2])
            R[3 * k:3 * k + 3] = r
            J[3 * k:3 * k + 3, 3 * k:3 * k + 3] = M
            kk = (k + 1) % m
            J[3 * k:3 * k + 3, 3 * kk:3 * kk + 3] -= np.eye(3)
            J[3 * k:3 * k + 3, -1] = Fend / m
            mats.append(M)
        res = float(np.max(np.abs(R)))
        if res <= tol:
            mono = np.eye(3)
            for M in mats:
                mono = M @ mono
            return V, T, res, mono, it
        J[-1, :3] = field_(V[0])
        d = np.linalg.solve(J, -R)
        if not np.all(np.isfinite(d)) or np.max(np.abs(d[:-1])) > 0.5:
            raise NonConvergence("orbit Newton step diverged")
        V = V + d[:-1].reshape(m, 3)
        T = T + d[-1]
        if T <= 0 or np.max(np.hypot(V[:, 0], V[:, 1])) >= 0.9999:
            raise NonConvergence("orbit Newton left the admissible region")
    raise NonConvergence(f"orbit Newton did not converge (residual {res:.2e})")


def find_orbit(B: BlaschkeMetric, A, word, tol: float = 1e-12, steps: int = 10,
               family: Optional[MetricFamily] = None, ode_tol: float = 1e-12,
               samples_per_unit: int = SAMPLES_PER_UNIT) -> ClosedOrbit:
    """Closed orbit of F = X + lambda V in the class of ``word``.

    ``family`` supplies metrics at intermediate scales; by default one is
    built from B's mesh and spectral degree."""
    word = Word(word)
    group = B.group
    gamma = group.eval(word)
    cls = classify(gamma)
    if cls.kind != "hyperbolic":
        raise NotHyperbolic(f"word {word!r} is {cls.kind}")
    z0, direction = axis_base_point(gamma)
    v = np.array([z0.real, z0.imag, direction])
    T = cls.translation_length
    target = float(A.scale)
    if family is None:
        family = MetricFamily(B.mesh, A, degree=B.smooth.degree if B.smooth is not None else None)
        family._cache[round(abs(target), 14)] = B
    if A.is_zero or target == 0:
        path = [target]
    else:
        path = list(np.linspace(0, target, steps + 1)[1:])
    m = max(2, int(math.ceil(T / SEGMENT_LENGTH)))
    B0 = B if target == 0 else family.metric(0.0)
    V = _segments_from_flow(B0, A.scaled(0.0), v, T, m, ode_tol, group)
    s_prev = 0.0
    res, M, iters = np.inf, None, 0
    k = 0
    halvings = 0
    while k < len(path):
        s = path[k]
        Bs = B if s == target else family.metric(s)
        try:
            V_new, T_new, res, M, iters = _newton(Bs, A.scaled(s), gamma, V.copy(), T, tol, ode_tol)
        except NonConvergence:
            if halvings >= 4:
                raise ContinuationFailure(f"continuation failed near scale {s:.4g} for word {word}")
            halvings += 1
            path.insert(k, 0.5 * (s_prev + s))
            continue
        V, T, s_prev = V_new, T_new, s
        k += 1
    v = V[0]
    orbit = sample_orbit(B, A, word, v, T, res, samples_per_unit, ode_tol)
    orbit.monodromy_eigenvalues = np.linalg.eigvals(M)
    orbit.newton_iterations = iters
    orbit_integral(orbit, "v_lambda")
    return orbit


def sample_orbit(B, A, word, v, T, res, samples_per_unit=SAMPLES_PER_UNIT, ode_tol=1e-12) -> ClosedOrbit:
    n = 4 * int(math.ceil(samples_per_unit * T / 4))
    ts = np.linspace(0.0, T, n + 1)
    tr = integrate(B, A, UnitTangentState.from_vector(v), T, ode_tol, samples=ts)
    return ClosedOrbit(Word(word), UnitTangentState.from_vector(v), float(T), float(A.scale), float(res),
                       tr.t, tr.samples, tr.lam, tr.v_lambda)


def _simpson(y, h):
    return h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def orbit_integral(orbit: ClosedOrbit, observable="v_lambda") -> float:
    """Composite Simpson along the dense samples with one Richardson step.

    ``observable`` is 'v_lambda', 'lambda', or an array of samples."""
    if isinstance(observable, str):
        y = {"v_lambda": orbit.v_lambda, "lambda": orbit.lam}[observable]
    else:
        y = np.asarray(observable, dtype=float)
    n = len(y) - 1
    if n < SAMPLES_PER_UNIT * orbit.period - 1e-9 or n % 4:
        raise InsufficientSamples(f"{n} intervals for period {orbit.period:.4g}")
    h = orbit.period / n
    fine = _simpson(y, h)
    coarse = _simpson(y[::2], 2 * h)
    val = float(fine + (fine - coarse) / 15)
    if isinstance(observable, str) and observable == "v_lambda":
        orbit.integral_v_lambda = val
    return val
