"""Curvature of slices and rippled slices in de Sitter space.

The exp-warp metric -dt^2 + e^{-2t} dx^2 is a patch of de Sitter space.
Its time slices are umbilic with every principal curvature equal to 1.
A ripple u = level + a sin(x^1) adds curvature that grows like
e^{2 level}, because sigma shrinks with time.  High slices therefore lose
admissibility (kappa in Gamma_2) at small amplitudes.

    python demos/01_slices_and_ripples.py
"""

import numpy as np

from scalarflow.ambient import make_metric
from scalarflow.curvature import gamma_k_member
from scalarflow.errors import SpacelikeViolation
from scalarflow.surface import GridChart, surface_geometry

metric = make_metric("exp-warp", 2)
chart = GridChart.torus(2, 64)

print("slices u = a")
for a in (0.0, 0.5, 1.0, 2.0):
    geo = surface_geometry(chart.constant(a), metric)
    print(f"  a = {a:3.1f}  kappa = {geo.kappa[0, 0]}  H_2 = {geo.H2[0, 0]:.15g}")


def ripple(level, amp):
    return chart.sample(lambda X: level + amp * np.sin(X[..., 0]))


def admissible(level, amp):
    try:
        geo = surface_geometry(ripple(level, amp), metric)
    except SpacelikeViolation:
        return False
    return bool(np.all(gamma_k_member(geo.kappa, 2)))


def largest_amplitude(level):
    lo, hi = 0.0, 1.0
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if admissible(level, mid) else (lo, mid)
    return lo


print("\nripples u = level + a sin x^1 on a 64x64 grid")
for level in (0.0, 1.0, 2.0):
    a_max = largest_amplitude(level)
    print(f"  level {level:3.1f}: admissible for a < {a_max:.5f}")

geo = surface_geometry(ripple(2.0, 0.05), metric)
print(f"\nlevel 2, a = 0.05: kappa ranges over [{geo.kappa.min():.3f}, {geo.kappa.max():.3f}],"
      f" min H_2 = {geo.H2.min():.3f}")
