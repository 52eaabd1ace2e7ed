"""Walk the quartic z = (s^2 + t^2)^2 through every stage and print what each
one produces.

    python3 demos/quartic_bending.py [N]

N defaults to 65 (a few seconds). Nothing is written to disk.
"""
import sys

import numpy as np

from infbend import pipeline as PL

N = int(sys.argv[1]) if len(sys.argv) > 1 else 65
cfg = PL.RunConfig(surface="quartic", grid=N, k=2)

an = PL.analyze(cfg)
print(f"grid: {an.grid.n} nodes, h = {an.grid.h:.4f}")
print(f"K ranges over [{an.forms.K.min():.3e}, {an.forms.K.max():.3e}]")
for p, (mu, mK) in zip(an.planar, an.planar_data):
    print(f"planar point at {p.location}: curvature vanishes like r^{mK:.2f}, exponent mu = {mu:.6f}")

it = PL.integral(an, cfg)
print(f"\nfirst integral: relative residual {it.fi.residual_norm:.2e}, "
      f"injective {it.injectivity['passed']}")
for lm in it.local_models:
    print(f"  |Z| grows like r^{lm['slope']:.4f} near the planar point (expected {lm['mu']:.4f})")

sv = PL.solve(an, it, cfg)
print(f"\nVekua solve with multiplicity M = {sv.M}")
print(f"  modified residual {sv.solution.residual_modified:.2e}, "
      f"original residual {sv.solution.residual_original:.2e}")
print(f"  W vanishes like |Z|^{sv.solution.vanishing_slopes[0]:.2f}")

bd = PL.bend(an, sv, cfg)
U = bd.field.U
print(f"\nbending field: sup |U| = {np.abs(U).max():.3e}")
print(f"  relative dR.dU residual {bd.residual.relative:.2e}")
print(f"  distance from the rigid motions {bd.rigid.relative_residual:.3f} "
      f"-> {'nontrivial' if bd.rigid.nontrivial else 'trivial'}")

fam, summ = PL.deformation_summary(an, U, cfg)
print("\nisometry defect of R + sigma U:")
for s, d in zip(fam.sigmas, fam.defects):
    print(f"  sigma {s:7.0e}   defect {d:.3e}")
print(f"  log-log slope {fam.slope:.3f}")
