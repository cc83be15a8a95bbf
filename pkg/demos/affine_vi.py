"""
An affine variational inequality on a box
=========================================

Find u in the box C with <Mu + c, v - u> >= 0 for all v in C. With a
non-symmetric positive semidefinite M and an offset that pushes the
solution onto a face of the box, we compare the limit of the hybrid
iteration against the natural residual |u - P_C(u - (Mu + c))|.
"""

import numpy as np

from hybridfp.hybrid import AlgorithmParams, run
from hybridfp.problems import hilbert_affine_vi_problem
from hybridfp.sets import Box

M = np.array([[2.0, 1.0, 0.0], [-1.0, 1.0, 0.0], [0.0, 0.0, 0.5]])
c = np.array([-3.0, 0.5, 0.2])
C = Box(-np.ones(3), np.ones(3))
P = hilbert_affine_vi_problem(M, c, C)

tr = run(P, AlgorithmParams(anchor=np.zeros(3), r_rule=lambda n: 2.0, a=1.0, max_iters=400))
u = tr.final_point


def natural_residual(u):
    return np.linalg.norm(u - np.clip(u - (M @ u + c), C.lower, C.upper))


print(tr.status.value, "after", tr.iterations, "steps")
print("u =", np.round(u, 6))
print("natural residual", f"{natural_residual(u):.2e}")
for n in (1, 10, 50, 100, 200, 400):
    if n <= len(tr.records):
        print(f"  n={n:4d}  residual {natural_residual(tr.records[n - 1].x):.2e}")
