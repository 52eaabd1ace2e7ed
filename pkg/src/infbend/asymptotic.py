"""The complex asymptotic direction and the vector field it generates.

With ``lam = -f + i sqrt(eg - f^2)`` the field ``L = g d/ds + lam d/dt`` is
elliptic wherever K > 0.  Writing it in the complex coordinate
``zeta = s + i t`` gives ``L = (g + i lam) d/dzeta + (g - i lam) d/dzeta_bar``,
so first integrals of L are the solutions of the Beltrami equation
``Z_zetabar = mu_B Z_zeta`` with ``mu_B = -(g + i lam)/(g - i lam)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NegativeDiscriminant
from .grid import DomainGrid
from .surface import FundamentalForms


@dataclass(frozen=True, eq=False)
class AsymptoticField:
    lam: np.ndarray  # complex
    coeff_s: np.ndarray  # g, real
    beltrami: np.ndarray  # complex, |mu_B| < 1 off planar nodes
    degenerate: np.ndarray  # bool, nodes where L vanishes

    @property
    def coeff_t(self) -> np.ndarray:
        return self.lam

    def scaled(self, a) -> "AsymptoticField":
        """The field a*L for a positive real function ``a`` (same first integrals)."""
        a = np.asarray(a, float)
        return AsymptoticField(a * self.lam, a * self.coeff_s, self.beltrami, self.degenerate)


def asymptotic_direction(forms: FundamentalForms, tol: float = 1e-12) -> np.ndarray:
    disc = forms.e * forms.g - forms.f**2
    scale = 1.0 + np.abs(forms.e * forms.g)
    if np.any(disc < -tol * scale):
        bad = int(np.argmin(disc / scale))
        raise NegativeDiscriminant(f"eg - f^2 = {disc[bad]:.3e} at node {bad}")
    return -forms.f + 1j * np.sqrt(np.clip(disc, 0.0, None))


def build_field(forms: FundamentalForms, lam: np.ndarray | None = None,
                degenerate_tol: float = 1e-12) -> AsymptoticField:
    if lam is None:
        lam = asymptotic_direction(forms)
    g = np.asarray(forms.g, float)
    num = g + 1j * lam
    den = g - 1j * lam
    scale = max(float(np.max(np.abs(den))), 1e-300)
    degenerate = np.abs(den) <= degenerate_tol * scale
    mu = np.full(len(g), -1.0 + 0j)
    ok = ~degenerate
    mu[ok] = -num[ok] / den[ok]
    return AsymptoticField(np.asarray(lam, complex), g, mu, degenerate)


def field_from_coefficients(g, lam) -> AsymptoticField:
    """Field with prescribed coefficients (for synthetic problems and tests)."""
    g = np.asarray(g, float)
    lam = np.asarray(lam, complex)
    forms_like = type("F", (), {"g": g})
    return build_field(forms_like, lam)


def apply_L(grid: DomainGrid, field: AsymptoticField, f) -> np.ndarray:
    f = np.asarray(f)
    fs = grid.Ds @ f
    ft = grid.Dt @ f
    if f.ndim == 2:
        return field.coeff_s[:, None] * fs + field.lam[:, None] * ft
    return field.coeff_s * fs + field.lam * ft


def apply_Lbar(grid: DomainGrid, field: AsymptoticField, f) -> np.ndarray:
    f = np.asarray(f)
    fs = grid.Ds @ f
    ft = grid.Dt @ f
    lb = np.conj(field.lam)
    if f.ndim == 2:
        return field.coeff_s[:, None] * fs + lb[:, None] * ft
    return field.coeff_s * fs + lb * ft


def ellipticity_report(field: AsymptoticField) -> dict:
    """Nodewise agreement of the three ellipticity tests off degenerate nodes."""
    ok = ~field.degenerate
    t1 = (field.lam.imag * field.coeff_s) != 0
    t2 = np.abs(field.beltrami) < 1
    agree = bool(np.all(t1[ok] == t2[ok]))
    return {
        "max_abs_beltrami": float(np.max(np.abs(field.beltrami[ok]))) if ok.any() else 1.0,
        "n_degenerate": int(field.degenerate.sum()),
        "elliptic_everywhere_off_degenerate": bool(np.all(t2[ok])),
        "tests_agree": agree,
    }
