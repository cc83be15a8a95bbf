"""
Why the p = 3 retraction is not certified
=========================================

A single half-space cut of the l_3 unit ball is convex, but its image
under the duality map is not. Then no point of the cut ball satisfies the
variational characterisation of the retraction, and the strict solver
refuses. The minimiser of phi(x, .) still exists and the relaxed solver
returns it together with its certificate value.
"""

import numpy as np

from hybridfp.sets import Ball, HalfSpace, Region
from hybridfp.solvers import NonconvergedInnerSolve, SolverSettings, sunny_retraction
from hybridfp.space import lp

S = lp(2, 3.0)
# this cut is the one the example builds at its first step from x = (1/2, 0)
cut = HalfSpace([2.0 / 9, -1.0 / 18], 0.1635030356112992)
region = Region(Ball(S, np.zeros(2), 1.0), (cut,))
x = np.array([0.5, 0.0])

# sample the region, map it through J and test midpoints of the images
rng = np.random.default_rng(1)
pts = rng.uniform(-1, 1, size=(40000, 2))
pts = pts[[region.contains(p) for p in pts]]
images = np.array([S.J(p) for p in pts])
i, j = rng.integers(len(pts), size=(2, 20000))
mid = (images[i] + images[j]) / 2
back = np.array([S.J_inv(w) for w in mid])
outside = sum(not region.contains(b) for b in back)
print(f"{outside} of {len(mid)} midpoints of J-images fall outside J(C)")

try:
    sunny_retraction(S, x, region)
except NonconvergedInnerSolve as exc:
    print("strict:", exc)

z, cert = sunny_retraction(S, x, region, SolverSettings(strict_retraction=False))
print("relaxed: R x =", z, " certificate", f"{cert.worst_violation:.2e}")
print("phi(x, Rx) =", S.lyapunov(x, z))
