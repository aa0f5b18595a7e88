"""Genus-2 surface group generated by the side pairings of the regular
hyperbolic octagon with interior angles pi/4.

Side k of the octagon has its midpoint on the ray of angle k*pi/4 and vertex k
sits on the ray of angle k*pi/4 + pi/8 (between sides k and k+1).  Generator
``g_k = R_k T R_k^{-1}`` (k = 0..3, letters a..d) maps side k+4 onto side k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from .errors import ConstructionError, NonTermination, ResourceError
from .geometry import Mobius, check_disk, classify, compose

LETTERS = "abcdABCD"
INVERSE = {c: c.swapcase() for c in LETTERS}
MAX_BALL = 8
SIDE_TOL = 1e-12


class Word(str):
    """A freely reduced word over ``abcdABCD`` (capitals are inverses)."""

    def __new__(cls, letters: str = ""):
        letters = "".join(str(letters).split())
        for c in letters:
            if c not in LETTERS:
                raise ValueError(f"invalid letter {c!r} in word {letters!r}")
        return super().__new__(cls, free_reduce(letters))

    def inverse(self) -> "Word":
        return Word("".join(INVERSE[c] for c in reversed(self)))

    def __mul__(self, other):
        return Word(str(self) + str(other))


def free_reduce(letters: str) -> str:
    out: List[str] = []
    for c in letters:
        if out and out[-1] == INVERSE[c]:
            out.pop()
        else:
            out.append(c)
    return "".join(out)


@dataclass
class SurfaceGroup:
    generators: Dict[str, Mobius]
    octagon_vertices: np.ndarray
    side_pairings: Dict[int, Tuple[str, int]]
    side_centers: np.ndarray
    side_radius: float
    half_translation: float
    _balls: Dict[int, "Ball"] = field(default_factory=dict, repr=False)

    def eval(self, word) -> Mobius:
        g = Mobius.identity()
        for c in reversed(Word(word)):
            g = compose(self.generators[c], g)
        return g

    # -- fundamental domain -------------------------------------------------
    def side_violation(self, z):
        """Array (..., 8): r - |z - c_k|; positive means z lies beyond side k."""
        z = np.asarray(z, dtype=complex)
        return self.side_radius - np.abs(z[..., None] - self.side_centers)

    def contains(self, z, tol: float = SIDE_TOL):
        return np.all(self.side_violation(z) <= tol, axis=-1)

    def exit_letter(self, side: int) -> str:
        """Letter whose transform maps the tile beyond ``side`` onto the octagon."""
        return LETTERS[side + 4] if side < 4 else LETTERS[side - 4]

    def reduce(self, z, max_iter: int = 500) -> Tuple[complex, Word]:
        """Reduce z into the closed octagon; returns (z', word) with eval(word)(z) = z'."""
        z = complex(z)
        if abs(z) > 0.999999:
            raise NonTermination(f"|z| = {abs(z)} too close to the boundary circle")
        word = ""
        for _ in range(max_iter):
            viol = self.side_violation(z)
            k = int(np.argmax(viol))
            if viol[k] <= SIDE_TOL:
                return z, Word(word)
            c = self.exit_letter(k)
            z = self.generators[c](z)
            word = c + word
        raise NonTermination("reduction did not terminate")

    def reduce_many(self, z, max_iter: int = 500):
        """Vectorized reduction.  Returns (z', a, b) with (a, b) the SU(1,1)
        coefficients of the reducing transform for every point."""
        z = np.array(z, dtype=complex, copy=True)
        check_disk(z)
        a = np.ones_like(z)
        b = np.zeros_like(z)
        gens = [self.generators[self.exit_letter(k)] for k in range(8)]
        ga = np.array([g.a for g in gens])
        gb = np.array([g.b for g in gens])
        for _ in range(max_iter):
            viol = self.side_violation(z)
            k = np.argmax(viol, axis=-1)
            out = np.take_along_axis(viol, k[..., None], -1)[..., 0] > SIDE_TOL
            if not np.any(out):
                return z, a, b
            kk = k[out]
            A, B = ga[kk], gb[kk]
            zz = z[out]
            z[out] = (A * zz + B) / (np.conj(B) * zz + np.conj(A))
            a_old, b_old = a[out], b[out]
            a[out] = A * a_old + B * np.conj(b_old)
            b[out] = A * b_old + B * np.conj(a_old)
        raise NonTermination("vectorized reduction did not terminate")

    # -- word ball ---------------------------------------------------------
    def ball(self, max_word_length: int) -> "Ball":
        if max_word_length > MAX_BALL:
            raise ResourceError(f"max_word_length {max_word_length} exceeds guard {MAX_BALL}")
        if max_word_length not in self._balls:
            self._balls[max_word_length] = _enumerate(self, max_word_length)
        return self._balls[max_word_length]


@dataclass(frozen=True)
class Ball:
    words: List[str]
    a: np.ndarray
    b: np.ndarray
    lengths: np.ndarray

    def __len__(self):
        return len(self.words)

    def transforms(self) -> List[Mobius]:
        return [Mobius(x, y) for x, y in zip(self.a, self.b)]


def _keys(a: np.ndarray, b: np.ndarray, scale: float, shift: float):
    flip = (a.real < 0) | ((np.abs(a.real) < 1e-12) & (a.imag < 0))
    s = np.where(flip, -1.0, 1.0)
    v = np.stack([(s * a).real, (s * a).imag, (s * b).real, (s * b).imag], axis=-1)
    return np.floor(v * scale + shift).astype(np.int64)


def _enumerate(group: SurfaceGroup, n: int) -> Ball:
    scale = 1e7
    seen = [set(), set()]

    def fresh(a, b):
        keep = np.zeros(len(a), dtype=bool)
        k0 = _keys(a, b, scale, 0.0)
        k1 = _keys(a, b, scale, 0.5)
        for i in range(len(a)):
            t0, t1 = tuple(k0[i]), tuple(k1[i])
            if t0 in seen[0] or t1 in seen[1]:
                continue
            seen[0].add(t0)
            seen[1].add(t1)
            keep[i] = True
        return keep

    words = [""]
    A = np.array([1.0 + 0j])
    B = np.array([0j])
    lengths = [0]
    fresh(A, B)
    frontier_w, frontier_a, frontier_b = [""], A, B
    for length in range(1, n + 1):
        new_w, new_a, new_b = [], [], []
        last = np.array([w[-1] if w else "" for w in frontier_w])
        for c in LETTERS:
            sel = last != INVERSE[c]
            if not np.any(sel):
                continue
            g = group.generators[c]
            fa, fb = frontier_a[sel], frontier_b[sel]
            a = fa * g.a + fb * np.conj(g.b)
            b = fa * g.b + fb * np.conj(g.a)
            new_a.append(a)
            new_b.append(b)
            new_w.extend(w + c for w, s in zip(frontier_w, sel) if s)
        a = np.concatenate(new_a)
        b = np.concatenate(new_b)
        det = np.sqrt(np.abs(a) ** 2 - np.abs(b) ** 2)
        a, b = a / det, b / det
        keep = fresh(a, b)
        frontier_w = [w for w, k in zip(new_w, keep) if k]
        frontier_a, frontier_b = a[keep], b[keep]
        # words that duplicate shorter ones still seed longer freely reduced words
        # only through their kept representatives; this loses nothing because the
        # ball is a set of group elements, not of words.
        words.extend(frontier_w)
        A = np.concatenate([A, frontier_a])
        B = np.concatenate([B, frontier_b])
        lengths.extend([length] * len(frontier_w))
    return Ball(words, A, B, np.array(lengths))


def enumerate_ball(group: SurfaceGroup, n: int) -> List[Tuple[Word, Mobius]]:
    """Distinct group elements of word length <= n with a shortest word each."""
    ball = group.ball(n)
    return [(Word(w), Mobius(x, y)) for w, x, y in zip(ball.words, ball.a, ball.b)]


def build_octagon_group() -> SurfaceGroup:
    half = math.acosh(1.0 + math.sqrt(2.0))  # distance from 0 to a side midpoint
    m = math.tanh(half / 2)
    center_radius = (m + 1 / m) / 2
    side_radius = (1 / m - m) / 2
    centers = center_radius * np.exp(1j * np.pi / 4 * np.arange(8))
    c8 = math.cos(math.pi / 8)
    rv = center_radius * c8 - math.sqrt((center_radius * c8) ** 2 - 1.0)
    vertices = rv * np.exp(1j * (np.pi / 4 * np.arange(8) + np.pi / 8))

    T = Mobius.translation(2 * half)
    gens: Dict[str, Mobius] = {}
    for k in range(4):
        R = Mobius.rotation(k * np.pi / 4)
        g = R @ T @ R.inverse()
        gens[LETTERS[k]] = g
        gens[LETTERS[k + 4]] = g.inverse()
    pairings = {}
    for j in range(8):
        if j < 4:
            pairings[j] = (LETTERS[j + 4], j + 4)
        else:
            pairings[j] = (LETTERS[j - 4], j - 4)
    group = SurfaceGroup(gens, vertices, pairings, centers, side_radius, half)
    _check_group(group)
    return group


def side_endpoints(group: SurfaceGroup, side: int) -> Tuple[complex, complex]:
    """Vertices bounding ``side`` (counterclockwise order)."""
    v = group.octagon_vertices
    return v[(side - 1) % 8], v[side]


def vertex_cycle(group: SurfaceGroup) -> Tuple[Mobius, List[str], float]:
    """Walk the vertex cycle; returns (product transform, letters, angle sum)."""
    v = group.octagon_vertices
    side, vert = 0, v[0]
    P = Mobius.identity()
    letters = []
    angle = 0.0
    for _ in range(8):
        c, partner = group.side_pairings[side]
        g = group.generators[c]
        w = g(vert)
        lo, hi = side_endpoints(group, partner)
        P = compose(g, P)
        letters.append(c)
        angle += interior_angle(group, int(np.argmin(np.abs(v - vert))))
        if abs(w - hi) < abs(w - lo):
            vert, side = hi, (partner + 1) % 8
        else:
            vert, side = lo, (partner - 1) % 8
        if abs(vert - v[0]) < 1e-9 and side == 0:
            break
    return P, letters, angle


def interior_angle(group: SurfaceGroup, vertex: int) -> float:
    """Angle of the octagon at a vertex, from the tangents of the two side circles."""
    p = group.octagon_vertices[vertex]
    t = []
    for k in (vertex, (vertex + 1) % 8):
        radial = p - group.side_centers[k]
        t.append(radial)
    # the angle between circles equals the angle between their radii at p,
    # and the interior angle is its supplement
    cosang = (t[0].real * t[1].real + t[0].imag * t[1].imag) / (abs(t[0]) * abs(t[1]))
    return math.pi - math.acos(max(-1.0, min(1.0, cosang)))


def octagon_area(group: SurfaceGroup, nodes: int = 64) -> float:
    """Hyperbolic area by integrating over the 16 triangles (0, side midpoint,
    vertex): in polar form the radial integral of 4r/(1-r^2)^2 is exact."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    total = 0.0
    for k in range(8):
        for lo, hi in ((k * np.pi / 4 - np.pi / 8, k * np.pi / 4), (k * np.pi / 4, k * np.pi / 4 + np.pi / 8)):
            th = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
            rho = boundary_radius(group, th, k)
            total += 0.5 * (hi - lo) * np.sum(w * 2.0 * (1.0 / (1.0 - rho**2) - 1.0))
    return float(total)


def boundary_radius(group: SurfaceGroup, theta, side: int):
    """Euclidean radius where the ray at angle theta meets the circle of ``side``."""
    R = abs(group.side_centers[side])
    c = np.cos(theta - side * np.pi / 4)
    return R * c - np.sqrt((R * c) ** 2 - 1.0)


def _check_group(group: SurfaceGroup) -> None:
    angles = [interior_angle(group, j) for j in range(8)]
    if abs(sum(angles) - 2 * math.pi) > 1e-10:
        raise ConstructionError(f"angle sum {sum(angles)} != 2 pi")
    P, _, _ = vertex_cycle(group)
    if not P.close_to(Mobius.identity(), 1e-9):
        raise ConstructionError("vertex-cycle product is not the identity")
    for j, (c, partner) in group.side_pairings.items():
        g = group.generators[c]
        lo, hi = side_endpoints(group, j)
        plo, phi_ = side_endpoints(group, partner)
        res = min(abs(g(lo) - plo) + abs(g(hi) - phi_), abs(g(lo) - phi_) + abs(g(hi) - plo))
        if res > 1e-9:
            raise ConstructionError(f"generator {c} does not map side {j} onto side {partner}")


def is_torsion_free_sample(group: SurfaceGroup, n: int = 3) -> bool:
    ball = group.ball(n)
    for x, y in zip(ball.a[1:], ball.b[1:]):
        if classify(Mobius(x, y)).kind != "hyperbolic":
            return False
    return True


def parse_words(text: str) -> List[Word]:
    return [Word(w) for w in str(text).replace(";", ",").split(",") if w.strip()]
