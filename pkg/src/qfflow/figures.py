"""SVG figures: fundamental octagon with seam labels, projected orbits, zero set of A."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .fuchsian import SurfaceGroup  # noqa: E402
from .qdiff import side_points  # noqa: E402

_SVG_META = {"Date": None, "Creator": None}


def _save(fig, path):
    plt.rcParams["svg.hashsalt"] = "qfflow"
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def _octagon(ax, group: SurfaceGroup, labels: bool = True):
    t = np.linspace(0, 2 * np.pi, 400)
    ax.plot(np.cos(t), np.sin(t), color="0.7", lw=0.8)
    for k in range(8):
        z = side_points(group, k, 80, np.linspace(0, 1, 80))
        ax.plot(z.real, z.imag, color="k", lw=1.2)
        if labels:
            # side k is glued to side k + 4; its exit letter labels the pairing
            mid = z[len(z) // 2]
            letter = group.exit_letter(k)
            ax.annotate(f"{k}:{letter}", (mid.real, mid.imag), xytext=(1.12 * mid.real, 1.12 * mid.imag),
                        ha="center", va="center", fontsize=8)
    ax.set_aspect("equal")
    ax.set_xlim(-1.05, 1.05)
    ax.set_ylim(-1.05, 1.05)
    ax.axis("off")


def octagon_svg(group: SurfaceGroup, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    _octagon(ax, group)
    pairs = ", ".join(f"{k}~{k + 4}" for k in range(4))
    ax.set_title(f"fundamental octagon, sides paired {pairs}", fontsize=8)
    _save(fig, path)


def orbits_svg(group: SurfaceGroup, orbits, path) -> None:
    """Orbits projected to the surface: samples reduced into the octagon."""
    fig, ax = plt.subplots(figsize=(5, 5))
    _octagon(ax, group, labels=False)
    for k, orb in enumerate(orbits):
        z = orb.samples[:, 0] + 1j * orb.samples[:, 1]
        zr, _, _ = group.reduce_many(z)
        # break the polyline where reduction jumps across a seam
        jump = np.abs(np.diff(zr)) > 0.05
        seg = np.split(zr, np.nonzero(jump)[0] + 1)
        color = f"C{k % 10}"
        for j, piece in enumerate(seg):
            ax.plot(piece.real, piece.imag, color=color, lw=0.9, label=str(orb.word) if j == 0 else None)
    if orbits:
        ax.legend(fontsize=7, loc="lower right")
    _save(fig, path)


def zero_set_svg(group: SurfaceGroup, A, zeros, path, n: int = 121) -> None:
    """log10 |A|_σ over the octagon with the zeros marked."""
    fig, ax = plt.subplots(figsize=(5, 5))
    r = abs(group.octagon_vertices[0])
    xs = np.linspace(-r, r, n)
    X, Y = np.meshgrid(xs, xs)
    z = X + 1j * Y
    inside = group.contains(z.ravel(), tol=0.0).reshape(z.shape)
    vals = np.full(z.shape, np.nan)
    if not A.is_zero:
        a, _ = A.evaluate(z[inside])
        vals[inside] = np.log10(np.abs(a) * (1 - np.abs(z[inside]) ** 2) ** 2 / 4 + 1e-300)
    im = ax.pcolormesh(X, Y, vals, shading="auto", cmap="viridis")
    fig.colorbar(im, ax=ax, shrink=0.7, label="log10 |A|_sigma")
    _octagon(ax, group, labels=False)
    zeros = np.asarray(zeros)
    if len(zeros):
        ax.plot(zeros.real, zeros.imag, "r+", ms=10, mew=2)
    ax.set_title(f"{len(zeros)} zeros of A", fontsize=8)
    _save(fig, path)

