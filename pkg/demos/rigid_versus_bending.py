"""Contrast a rigid motion with the computed bending of the quartic.

The rigid field A x R + B is fitted exactly and, with its exact derivatives
A x R_s, A x R_t, its isometry defect is a pure sigma^2 term. The computed
bending is far from every rigid field. Its grid derivatives leave a small
dR.dU residual, so the defect follows sigma^2 only while sigma^2 |dU|^2
dominates 2 sigma |dR.dU|; the crossover sigma is printed.

    python3 demos/rigid_versus_bending.py
"""
import numpy as np

from infbend import bending as B
from infbend import pipeline as PL

cfg = PL.RunConfig(surface="quartic", grid=65)
an = PL.analyze(cfg)
sv = PL.solve(an, PL.integral(an, cfg), cfg)
U = PL.bend(an, sv, cfg).field.U
U = U / np.abs(U).max()
sigmas = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]

A = np.array([0.3, -1.0, 0.5])
rigid = B.rigid_field(an.jet.R, A, (0, 0, 1))
exact = (np.cross(A, an.jet.R_s), np.cross(A, an.jet.R_t))

for name, V, dV in (("rigid", rigid, exact), ("bending", U, None)):
    fit = B.rigid_fit(an.jet.R, V)
    res = B.bending_residual(an.jet, V, an.grid, dU=dV)
    fam = B.make_deformation(an.jet, V, sigmas, an.grid, dU=dV)
    cross = 2 * fam.dRdU_sup / fam.dU2_sup
    print(f"{name:8s} rigid-fit residual {fit.relative_residual:.2e}   "
          f"dR.dU residual {res.relative:.2e}   defect slope {fam.slope:.3f}   "
          f"crossover sigma {cross:.1e}")
