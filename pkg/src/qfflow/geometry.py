"""Poincare-disk primitives.

Orientation-preserving isometries of the disk are stored in SU(1,1) form
``z -> (a z + b) / (conj(b) z + conj(a))`` with ``|a|^2 - |b|^2 = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import DomainError

RIM_TOL = 1e-12
DET_TOL = 1e-12
PARABOLIC_TOL = 1e-10


def check_disk(z) -> None:
    if np.any(np.abs(z) >= 1.0 - RIM_TOL):
        raise DomainError(f"point(s) not inside the unit disk: max |z| = {np.max(np.abs(z)):.16g}")


@dataclass(frozen=True)
class Mobius:
    a: complex = 1.0 + 0j
    b: complex = 0j

    def __post_init__(self):
        det = abs(self.a) ** 2 - abs(self.b) ** 2
        if det <= 0:
            raise ValueError("not an SU(1,1) element: |a|^2 - |b|^2 <= 0")
        if abs(det - 1.0) > DET_TOL:
            s = math.sqrt(det)
            object.__setattr__(self, "a", complex(self.a) / s)
            object.__setattr__(self, "b", complex(self.b) / s)
        else:
            object.__setattr__(self, "a", complex(self.a))
            object.__setattr__(self, "b", complex(self.b))

    @staticmethod
    def identity() -> "Mobius":
        return Mobius(1.0, 0.0)

    @staticmethod
    def rotation(angle: float) -> "Mobius":
        """Euclidean rotation z -> e^{i angle} z."""
        return Mobius(np.exp(0.5j * angle), 0.0)

    @staticmethod
    def translation(length: float) -> "Mobius":
        """Hyperbolic translation along the real diameter towards +1."""
        return Mobius(math.cosh(length / 2), math.sinh(length / 2))

    @staticmethod
    def from_matrix(m) -> "Mobius":
        m = np.asarray(m, dtype=complex)
        return Mobius(m[0, 0], m[0, 1])

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.b.conjugate(), self.a.conjugate()]])

    @property
    def det(self) -> float:
        return abs(self.a) ** 2 - abs(self.b) ** 2

    @property
    def trace(self) -> float:
        return 2.0 * self.a.real

    def __matmul__(self, other: "Mobius") -> "Mobius":
        return compose(self, other)

    def inverse(self) -> "Mobius":
        return Mobius(self.a.conjugate(), -self.b)

    def __call__(self, z):
        return (self.a * z + self.b) / (self.b.conjugate() * z + self.a.conjugate())

    def derivative(self, z):
        return 1.0 / (self.b.conjugate() * z + self.a.conjugate()) ** 2

    def log_derivative(self, z):
        """d/dz log g'(z)."""
        return -2.0 * self.b.conjugate() / (self.b.conjugate() * z + self.a.conjugate())

    def close_to(self, other: "Mobius", tol: float = 1e-9) -> bool:
        """Equality as disk maps, i.e. up to an overall sign of the matrix."""
        d1 = max(abs(self.a - other.a), abs(self.b - other.b))
        d2 = max(abs(self.a + other.a), abs(self.b + other.b))
        return min(d1, d2) <= tol


def compose(g: Mobius, h: Mobius) -> Mobius:
    """Return g o h, renormalized to unit determinant."""
    a = g.a * h.a + g.b * h.b.conjugate()
    b = g.a * h.b + g.b * h.a.conjugate()
    det = abs(a) ** 2 - abs(b) ** 2
    s = math.sqrt(det)
    return Mobius(a / s, b / s)


def apply(g: Mobius, z) -> Tuple[complex, complex]:
    """Image and complex derivative of g at z."""
    check_disk(z)
    return g(z), g.derivative(z)


def distance(z, w):
    """Hyperbolic distance for the curvature -1 metric 4|dz|^2/(1-|z|^2)^2."""
    check_disk(z)
    check_disk(w)
    r = np.abs((z - w) / (1.0 - np.conj(z) * w))
    return 2.0 * np.arctanh(np.minimum(r, 1.0))


def conformal_factor(z):
    """phi_0(z) = log(2/(1-|z|^2)), the log conformal factor of the Poincare metric."""
    return np.log(2.0 / (1.0 - np.abs(z) ** 2))


@dataclass(frozen=True)
class Classification:
    kind: str  # 'elliptic' | 'parabolic' | 'hyperbolic' | 'indeterminate'
    translation_length: float
    axis: Optional[Tuple[complex, complex]] = None  # (repelling, attracting)


def fixed_points(g: Mobius) -> Tuple[complex, complex]:
    bc = g.b.conjugate()
    if abs(bc) < 1e-300:
        return (np.inf, 0.0)
    p = g.a.conjugate() - g.a
    disc = np.sqrt(complex(p * p + 4 * bc * g.b))
    return ((-p + disc) / (2 * bc), (-p - disc) / (2 * bc))


def classify(g: Mobius) -> Classification:
    tr = abs(g.trace)
    if abs(tr - 2.0) < PARABOLIC_TOL:
        if abs(g.b) < PARABOLIC_TOL:
            return Classification("elliptic", 0.0)
        return Classification("indeterminate", 0.0)
    if tr < 2.0:
        return Classification("elliptic", 0.0)
    length = 2.0 * math.acosh(tr / 2.0)
    z1, z2 = fixed_points(g)
    z1, z2 = z1 / abs(z1), z2 / abs(z2)
    if abs(g.derivative(z1)) < 1.0:
        z1, z2 = z2, z1
    return Classification("hyperbolic", length, (complex(z1), complex(z2)))


def axis_base_point(g: Mobius) -> Tuple[complex, float]:
    """Point of the axis of hyperbolic g closest to 0 and the direction angle
    (Euclidean) of the axis there, oriented from repelling to attracting end."""
    c = classify(g)
    if c.kind != "hyperbolic":
        raise ValueError("axis_base_point needs a hyperbolic element")
    p, q = c.axis
    ap = np.angle(p)
    gap = (np.angle(q) - ap + np.pi) % (2 * np.pi) - np.pi
    m = ap + gap / 2
    beta = abs(gap) / 2
    if abs(beta - np.pi / 2) < 1e-14:
        z0 = 0j
    else:
        z0 = np.exp(1j * m) * (1 - math.sin(beta)) / math.cos(beta)
    direction = m + (np.pi / 2 if gap > 0 else -np.pi / 2)
    return complex(z0), float(direction)


def distance_to_axis(g: Mobius, z) -> float:
    """Hyperbolic distance from z to the axis of hyperbolic g."""
    c = classify(g)
    if c.kind != "hyperbolic":
        raise ValueError("distance_to_axis needs a hyperbolic element")
    check_disk(z)
    z = complex(z)
    # move z to 0; the axis becomes the geodesic between the image endpoints
    p, q = ((w - z) / (1 - z.conjugate() * w) for w in c.axis)
    beta = abs(np.angle(q / p)) / 2
    r = (1 - math.sin(beta)) / math.cos(beta) if beta < np.pi / 2 else 0.0
    return float(2 * math.atanh(r))
