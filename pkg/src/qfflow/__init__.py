"""Quasi-Fuchsian thermostat flows on a genus-2 surface.

Modules: geometry (disk isometries), fuchsian (octagon group), qdiff
(holomorphic quadratic differentials), blaschke (vortex equation and the
Blaschke metric), dynamics (the flow F = X + λV), orbits (closed orbits),
metrics (h± and marked lengths), conjugacy (the bundle map I), harmonic
(discrete harmonic maps) and cli (pipelines, verification, export).
"""

__version__ = "0.1.0"
