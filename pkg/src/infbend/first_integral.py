"""Global first integral of the asymptotic field and planar-point exponents.

The first integral is computed as a least-squares quasiconformal map: on each
lattice triangle the linear interpolant of Z must satisfy the Beltrami
equation ``Z_zetabar = mu_B Z_zeta``; two nodes are pinned to fix the affine
gauge ``Z -> aZ + b``.  The Beltrami coefficient on a triangle is formed from
the averaged coefficients of L, which stays finite next to a planar node where
the nodal coefficient is 0/0; only triangles whose corners are all degenerate
are down-weighted.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .asymptotic import AsymptoticField, apply_L
from .errors import CurvatureProfileInvalid, FitUnstable, InjectivityFailed, SolverDiverged
from .grid import BOUNDARY, INTERIOR, DomainGrid, norm2
from .surface import PlanarModel, PlanarPoint, annulus_nodes, loglog_fit

PLANAR_WEIGHT = 1e-3


@dataclass(frozen=True, eq=False)
class FirstIntegral:
    Z: np.ndarray
    pins: tuple[int, int]
    pin_values: tuple[complex, complex]
    residual_norm: float
    jacobian: np.ndarray  # Im(conj(Z_s) Z_t)
    planar_nodes: tuple[int, ...] = ()
    planar_images: tuple[complex, ...] = ()
    excluded: np.ndarray | None = field(default=None, repr=False)

    @property
    def Z_s(self):  # pragma: no cover - convenience
        raise AttributeError("derivatives are not cached; use grid.Ds @ fi.Z")


def planar_exclusion(grid: DomainGrid, planar_nodes, radius: float = 2.0) -> np.ndarray:
    """Nodes within ``radius * h`` of any planar node."""
    out = np.zeros(grid.n, dtype=bool)
    for k in planar_nodes:
        out |= np.hypot(grid.s - grid.s[k], grid.t - grid.t[k]) <= radius * grid.h * (1 + 1e-9)
    return out


def default_pins(grid: DomainGrid) -> tuple[int, int]:
    """Domain centre and the boundary node furthest along +s on the centre row."""
    q0 = grid.center_node()
    row = np.flatnonzero(np.isclose(grid.t, grid.t[q0]) & (grid.flags == BOUNDARY))
    if len(row) == 0:
        row = np.flatnonzero(grid.flags == BOUNDARY)
    q1 = int(row[np.argmax(grid.s[row])])
    return q0, q1


def _triangle_gradients(grid: DomainGrid):
    """Sparse maps node values -> per-triangle d/ds, d/dt of the P1 interpolant."""
    tri = grid.triangles
    p = grid.nodes[tri]  # (m, 3, 2)
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    # grad = inv([d1; d2]) @ [Z1 - Z0, Z2 - Z0]
    inv = np.empty((len(tri), 2, 2))
    inv[:, 0, 0] = d2[:, 1] / det
    inv[:, 0, 1] = -d1[:, 1] / det
    inv[:, 1, 0] = -d2[:, 0] / det
    inv[:, 1, 1] = d1[:, 0] / det
    m = len(tri)
    rows = np.repeat(np.arange(m), 3)
    cols = tri.ravel()
    mats = []
    for comp in range(2):
        c1, c2 = inv[:, comp, 0], inv[:, comp, 1]
        vals = np.column_stack([-(c1 + c2), c1, c2]).ravel()
        mats.append(sp.csr_matrix((vals, (rows, cols)), shape=(m, grid.n)))
    return mats[0], mats[1], 0.5 * np.abs(det)


def relative_residual(grid, field, Z, excluded=None) -> float:
    Zs, Zt = grid.Ds @ Z, grid.Dt @ Z
    LZ = field.coeff_s * Zs + field.lam * Zt
    den = norm2(grid, np.abs(Zs) + np.abs(Zt), excluded)
    return norm2(grid, LZ, excluded) / den if den > 0 else np.inf


def solve_first_integral(field: AsymptoticField, grid: DomainGrid, pins=None,
                         targets=(0.0, 1.0), planar_nodes=None,
                         tol: float | None = None, planar_weight: float = PLANAR_WEIGHT) -> FirstIntegral:
    if pins is None:
        pins = default_pins(grid)
    q0, q1 = pins
    if planar_nodes is None:
        planar_nodes = tuple(int(k) for k in np.flatnonzero(field.degenerate))
    planar_nodes = tuple(planar_nodes)

    Gs, Gt, area = _triangle_gradients(grid)
    tri = grid.triangles
    # Beltrami coefficient from centroid-averaged L coefficients: finite on
    # triangles touching a planar node, where the nodal mu_B is 0/0
    gc = field.coeff_s[tri].mean(axis=1)
    lc = field.lam[tri].mean(axis=1)
    mu = -(gc + 1j * lc) / (gc - 1j * lc)
    dead = field.degenerate[tri].all(axis=1)
    wt = np.sqrt(area) * np.where(dead, planar_weight, 1.0)
    # Z_zetabar - mu Z_zeta with Z_zeta = (Z_s - i Z_t)/2, Z_zetabar = (Z_s + i Z_t)/2
    A = sp.diags(wt * 0.5 * (1 - mu)) @ Gs + sp.diags(wt * 0.5j * (1 + mu)) @ Gt
    A = A.tocsc()

    free = np.ones(grid.n, dtype=bool)
    free[[q0, q1]] = False
    zpin = np.asarray(targets, dtype=complex)
    rhs = -(A[:, [q0, q1]] @ zpin)
    Af = A[:, free]
    AH = Af.conj().T.tocsc()
    normal = (AH @ Af).tocsc()
    try:
        zf = spla.spsolve(normal, AH @ rhs)
    except RuntimeError as exc:  # singular factorisation
        raise SolverDiverged(str(exc)) from exc
    Z = np.empty(grid.n, dtype=complex)
    Z[free] = zf
    Z[q0], Z[q1] = zpin
    if not np.all(np.isfinite(Z)):
        raise SolverDiverged("non-finite first integral")

    excluded = planar_exclusion(grid, planar_nodes)
    res = relative_residual(grid, field, Z, excluded)
    if tol is not None and res > tol:
        raise SolverDiverged(f"relative residual {res:.3e} > {tol:.1e}")
    Zs, Zt = grid.Ds @ Z, grid.Dt @ Z
    jac = np.imag(np.conj(Zs) * Zt)
    return FirstIntegral(
        Z=Z,
        pins=(int(q0), int(q1)),
        pin_values=(complex(zpin[0]), complex(zpin[1])),
        residual_norm=float(res),
        jacobian=jac,
        planar_nodes=planar_nodes,
        planar_images=tuple(complex(Z[k]) for k in planar_nodes),
        excluded=excluded,
    )


def from_values(grid: DomainGrid, field: AsymptoticField | None, Z, planar_nodes=()) -> FirstIntegral:
    """Wrap a given Z (e.g. an exact map) as a FirstIntegral for diagnostics."""
    Z = np.asarray(Z, dtype=complex)
    excluded = planar_exclusion(grid, planar_nodes)
    res = relative_residual(grid, field, Z, excluded) if field is not None else np.nan
    Zs, Zt = grid.Ds @ Z, grid.Dt @ Z
    q0, q1 = default_pins(grid)
    return FirstIntegral(Z, (q0, q1), (complex(Z[q0]), complex(Z[q1])), float(res),
                         np.imag(np.conj(Zs) * Zt), tuple(planar_nodes),
                         tuple(complex(Z[k]) for k in planar_nodes), excluded)


# ---------------------------------------------------------------------------
# injectivity


def winding_number(curve: np.ndarray, point: complex) -> int:
    d = curve - point
    ang = np.angle(np.roll(d, -1) / d)
    return int(np.rint(ang.sum() / (2 * np.pi)))


def check_injectivity(fi: FirstIntegral, grid: DomainGrid, n_samples: int = 16) -> dict:
    """Jacobian sign census off planar neighbourhoods plus boundary winding
    numbers around sampled interior image points."""
    off = (grid.flags == INTERIOR)
    if fi.excluded is not None:
        off &= ~fi.excluded
    jac = fi.jacobian[off]
    n_pos, n_neg = int(np.sum(jac > 0)), int(np.sum(jac < 0))
    n_zero = int(np.sum(jac == 0))
    single_sign = (n_pos == 0 or n_neg == 0) and n_zero == 0
    orientation = 1 if n_pos >= n_neg else -1

    curve = fi.Z[grid.boundary_trace]
    cand = np.flatnonzero(off)
    picks = cand[np.linspace(0, len(cand) - 1, min(n_samples, len(cand))).astype(int)]
    windings = [winding_number(curve, fi.Z[k]) for k in picks]
    winding_ok = all(w == orientation for w in windings)
    # image triangles must keep the orientation of the parameter triangles
    tri = grid.triangles
    z = fi.Z[tri]
    signed = np.imag(np.conj(z[:, 1] - z[:, 0]) * (z[:, 2] - z[:, 0]))
    keep = np.ones(len(tri), dtype=bool)
    if fi.excluded is not None:
        keep = ~fi.excluded[tri].any(axis=1)
    flipped = int(np.sum(np.sign(signed[keep]) != orientation))
    return {
        "jacobian_positive": n_pos,
        "jacobian_negative": n_neg,
        "jacobian_zero": n_zero,
        "jacobian_single_signed": bool(single_sign),
        "orientation": orientation,
        "windings": windings,
        "winding_ok": bool(winding_ok),
        "flipped_triangles": flipped,
        "passed": bool(single_sign and winding_ok),
    }


def require_injective(fi: FirstIntegral, grid: DomainGrid) -> dict:
    rep = check_injectivity(fi, grid)
    if not rep["passed"]:
        raise InjectivityFailed(
            f"jacobian +{rep['jacobian_positive']}/-{rep['jacobian_negative']}, "
            f"windings {sorted(set(rep['windings']))}")
    return rep


# ---------------------------------------------------------------------------
# planar-point exponent


def profile_curvature(model: PlanarModel, phi):
    """The positivity expression ``m^2 P^2 + m P P'' - (m-1) P'^2``."""
    P, dP, ddP = model.profile_functions()
    m = model.degree
    p, p1, p2 = P(phi), dP(phi), ddP(phi)
    return m * m * p * p + m * p * p2 - (m - 1) * p1 * p1


def profile_MN(model: PlanarModel, phi):
    P, dP, ddP = model.profile_functions()
    m = model.degree
    p, p1 = P(phi), dP(phi)
    M = p1 / (m * p)
    N = np.sqrt(profile_curvature(model, phi) / ((m - 1) * p * p)) / m
    return M, N


def mu_exponent(model: PlanarModel, n_quad: int = 1024, return_integrals: bool = False):
    """Planar-point exponent from ``1/mu = (1/2pi) \\int_0^{2pi} (N - iM) dphi``.

    Periodic trapezoid rule; spectrally accurate for trigonometric profiles.
    """
    if model.degree <= 2:
        raise CurvatureProfileInvalid(f"degree {model.degree} must exceed 2")
    phi = 2 * np.pi * np.arange(n_quad) / n_quad
    P, _, _ = model.profile_functions()
    if np.any(P(phi) <= 0):
        raise CurvatureProfileInvalid("profile P must be positive")
    if np.any(profile_curvature(model, phi) <= 0):
        raise CurvatureProfileInvalid("curvature positivity fails along the profile")
    M, N = profile_MN(model, phi)
    dphi = 2 * np.pi / n_quad
    int_M = float(M.sum() * dphi)
    int_N = float(N.sum() * dphi)
    if abs(int_M) >= 1e-10:
        raise CurvatureProfileInvalid(f"integral of M = {int_M:.3e} is not zero")
    mu = 2 * np.pi / int_N
    if return_integrals:
        return mu, {"int_M": int_M, "int_N": int_N}
    return mu


def validate_local_model(Z, grid: DomainGrid, p: PlanarPoint | tuple, mu: float | None = None,
                         inner: float = 3.0, outer: float = 12.0, min_r2: float = 0.9) -> dict:
    """Log-log exponent of ``|Z - Z(p)|`` over the annulus ``inner*h .. outer*h``."""
    Z = Z.Z if isinstance(Z, FirstIntegral) else np.asarray(Z)
    if isinstance(p, PlanarPoint):
        loc, node = p.location, p.node
    else:
        loc = tuple(p)
        node = grid.nearest(*loc)
    idx, r = annulus_nodes(grid, loc, inner, outer)
    if len(idx) < 8:
        raise FitUnstable("annulus is not inside the domain")
    slope, r2 = loglog_fit(r, Z[idx] - Z[node])
    if r2 < min_r2:
        raise FitUnstable(f"exponent fit R^2 = {r2:.4f}")
    rep = {"slope": slope, "r2": r2}
    if mu is not None:
        rep["mu"] = float(mu)
        rep["relative_deviation"] = abs(slope - mu) / mu
    return rep
