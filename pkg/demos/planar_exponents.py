"""The exponent mu attached to a planar point, for round and perturbed
curvature profiles, next to the naive guess sqrt(m - 1).

    python3 demos/planar_exponents.py
"""
import math

import sympy

from infbend.errors import CurvatureProfileInvalid
from infbend.first_integral import mu_exponent
from infbend.surface import PHI, PlanarModel

print(" m   profile                     mu        sqrt(m-1)")
for m in (3, 4, 5, 6, 8):
    for label, P in (("1", sympy.Integer(1)),
                     ("1 + cos(2 phi)/5", 1 + sympy.cos(2 * PHI) / 5),
                     ("1 + sin(3 phi)/10", 1 + sympy.sin(3 * PHI) / 10)):
        try:
            mu = mu_exponent(PlanarModel((0, 0), m, P))
            print(f"{m:2d}   {label:24s}  {mu:9.6f}  {math.sqrt(m - 1):9.6f}")
        except CurvatureProfileInvalid as exc:
            print(f"{m:2d}   {label:24s}  rejected ({exc})")
