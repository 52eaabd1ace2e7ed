"""Self-contained numerical checks reported alongside every pipeline run.

Each check returns a plain dict with the measured values, the threshold it
was compared against and a boolean ``passed``.
"""
from __future__ import annotations

import math
import time

import numpy as np
import sympy

from . import pompeiu
from .asymptotic import asymptotic_direction, build_field
from .bending import recover_U, recover_uv, rigid_field, rigid_fit
from .first_integral import mu_exponent
from .grid import INTERIOR, build_domain, disc
from .surface import CATALOG, PHI, PlanarModel, eval_jet, fundamental_forms, get_surface
from .vekua import lr_vectors, vekua_coefficients, vekua_residual

RIGID_FIELDS = (
    ((0.0, 0.0, 1.0), (0.0, 0.0, 0.0)),
    ((1.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
    ((0.3, -0.5, 0.2), (1.0, 2.0, -1.0)),
)


def quadratic_identity(N: int = 33, tol: float = 1e-10) -> dict:
    """``lam^2 + 2 f lam + e g = 0`` at every node of every catalogue surface."""
    t0 = time.perf_counter()
    per = {}
    for name, sd in CATALOG.items():
        grid = build_domain(sd.region, N)
        forms = fundamental_forms(eval_jet(sd, grid))
        lam = asymptotic_direction(forms)
        eg = forms.e * forms.g
        per[name] = float(np.max(np.abs(lam**2 + 2 * forms.f * lam + eg) / (1 + np.abs(eg))))
    worst = max(per.values())
    return {"max": worst, "per_surface": per, "threshold": tol,
            "runtime_s": time.perf_counter() - t0, "passed": worst < tol}


def exponent_formulas(tol: float = 1e-10) -> dict:
    quartic = mu_exponent(PlanarModel((0.0, 0.0), 4))
    cubic = mu_exponent(PlanarModel((0.0, 0.0), 3))
    profile = 1 + sympy.Rational(1, 5) * sympy.cos(2 * PHI) ** 2
    _, ints = mu_exponent(PlanarModel((0.0, 0.0), 4, profile), return_integrals=True)
    int_M = ints["int_M"]
    errs = {"quartic_minus_sqrt3": abs(quartic - math.sqrt(3)),
            "cubic_minus_sqrt2": abs(cubic - math.sqrt(2)),
            "perturbed_integral_M": abs(int_M)}
    return {"mu_quartic": quartic, "mu_cubic": cubic, **errs, "threshold": tol,
            "passed": all(v < tol for v in errs.values())}


def _bump(grid):
    rr = (grid.s**2 + grid.t**2) / 0.36
    inside = rr < 1
    f = np.zeros(grid.n, dtype=complex)
    f[inside] = np.exp(-1.0 / (1.0 - rr[inside])) * np.exp(1j * grid.s[inside])
    return f


def pompeiu_checks(coarse: int = 65, fine: int = 129, tol: float = 5e-3,
                   min_ratio: float = 1.8) -> dict:
    """T[1] = conj(z) on the unit disc and dbar T[f] = f for a compact bump."""
    out = {}
    for N in (coarse, fine):
        g = build_domain(disc(1.0), N)
        T1 = pompeiu.pompeiu_transform(g.zeta, g.weights, np.ones(g.n))
        interior = g.flags == INTERIOR
        f = _bump(g)
        Tf = pompeiu.pompeiu_transform(g.zeta, g.weights, f)
        out[N] = {"T1_error": float(np.max(np.abs(T1 - np.conj(g.zeta))[interior])),
                  "dbar_error": float(np.max(np.abs(pompeiu.dbar(g, Tf) - f)))}
    ratio = out[coarse]["dbar_error"] / out[fine]["dbar_error"]
    return {"T1_error": out[fine]["T1_error"], "T1_threshold": tol,
            "dbar_error": {str(k): v["dbar_error"] for k, v in out.items()},
            "dbar_ratio": ratio, "dbar_ratio_threshold": min_ratio,
            "passed": out[fine]["T1_error"] < tol and ratio >= min_ratio}


def vekua_identity(surface: str = "paraboloid", coarse: int = 65, fine: int = 129,
                   min_ratio: float = 3.5) -> dict:
    """``C Lw = A w + B w̄`` for ``w = LR . U`` with U an exact rigid field."""
    sd = get_surface(surface)
    errs = {}
    for N in (coarse, fine):
        g = build_domain(sd.region, N)
        jet = eval_jet(sd, g)
        lf = build_field(fundamental_forms(jet))
        co = vekua_coefficients(jet, lf, g)
        LR = lr_vectors(jet, lf)
        row = []
        for A, B in RIGID_FIELDS:
            w = np.einsum("ij,ij->i", LR, rigid_field(jet.R, A, B))
            row.append(float(np.max(np.abs(vekua_residual(g, lf, co, w)))))
        errs[N] = row
    ratios = [a / b if b > 0 else math.inf for a, b in zip(errs[coarse], errs[fine])]
    return {"surface": surface, "residual": {str(k): v for k, v in errs.items()},
            "h": {str(N): build_domain(sd.region, N).h for N in (coarse, fine)},
            "ratios": ratios, "ratio_threshold": min_ratio,
            "passed": all(r >= min_ratio for r in ratios)}


def rigid_round_trip(surface: str = "paraboloid", N: int = 129, tol: float = 1e-6,
                     fit_tol: float = 1e-8) -> dict:
    """Exact rigid U -> w -> (u, v) -> U, and the rigid fit of exact rigid fields."""
    sd = get_surface(surface)
    g = build_domain(sd.region, N)
    jet = eval_jet(sd, g)
    forms = fundamental_forms(jet)
    lf = build_field(forms)
    LR = lr_vectors(jet, lf)
    errs, fits = [], []
    for A, B in RIGID_FIELDS:
        U = rigid_field(jet.R, A, B)
        w = np.einsum("ij,ij->i", LR, U)
        rec = recover_U(jet, recover_uv(w, forms), g)
        errs.append(float(np.max(np.abs(rec.U - U))))
        fits.append(rigid_fit(jet.R, U).relative_residual)
    return {"surface": surface, "N": N, "roundtrip_error": errs, "roundtrip_threshold": tol,
            "rigid_fit_residual": fits, "rigid_fit_threshold": fit_tol,
            "passed": max(errs) < tol and max(fits) < fit_tol}
