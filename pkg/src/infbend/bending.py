"""Recovery of the bending field from w, nontriviality, deformation families."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DeterminantTooSmall, DivisionUnstable
from .first_integral import planar_exclusion
from .grid import DomainGrid
from .surface import FundamentalForms, SurfaceJet, annulus_nodes, loglog_fit

NONTRIVIAL_THRESHOLD = 0.1


def _dot(a, b):
    return np.einsum("ij,ij->i", a, b)


def choose_M(k: int, planar) -> int:
    """Smallest multiplicity M with ``M mu_j - m_K_j >= k + 1`` at every planar point.

    ``planar`` is a sequence of ``(mu_j, m_K_j)`` pairs.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    planar = list(planar)
    if not planar:
        return 0
    M = max(math.ceil((k + mK + 1) / mu - 1e-12) for mu, mK in planar)
    return max(M, 1)


def pullback_w(W, Z=None) -> np.ndarray:
    """``w = W o Z``; W already lives on the node set, so this is the identity map
    on values (kept as a function for symmetry with the pushforward)."""
    return np.asarray(W, dtype=complex).copy()


@dataclass(frozen=True, eq=False)
class ScalarBendingData:
    w: np.ndarray
    u: np.ndarray
    v: np.ndarray
    zeroed: np.ndarray  # nodes forced to zero inside planar discs
    disc_jump: float = 0.0  # max |u|, |v| on the ring just outside the planar discs


def recover_uv(w, forms: FundamentalForms, grid: DomainGrid | None = None, planar_nodes=(),
               disc_radius: float = 2.0, tol: float = 1e-12) -> ScalarBendingData:
    """Invert ``w = g u + lam v`` for real u, v."""
    w = np.asarray(w, dtype=complex)
    root = np.sqrt(np.clip(forms.e * forms.g - forms.f**2, 0.0, None))
    zeroed = np.zeros(len(w), dtype=bool)
    if grid is not None and len(planar_nodes):
        zeroed = planar_exclusion(grid, planar_nodes, radius=disc_radius)
    live = ~zeroed
    if np.any(root[live] < tol) or np.any(np.abs(forms.g[live]) < tol):
        raise DivisionUnstable("sqrt(eg - f^2) or g vanishes outside the planar discs")
    u = np.zeros(len(w))
    v = np.zeros(len(w))
    v[live] = (w[live] - np.conj(w[live])).imag / (2 * root[live])
    u[live] = ((w[live] + np.conj(w[live])).real + 2 * forms.f[live] * v[live]) / (2 * forms.g[live])
    jump = 0.0
    if zeroed.any():
        ring = planar_exclusion(grid, planar_nodes, radius=disc_radius + 1.0) & live
        if ring.any():
            jump = float(max(np.abs(u[ring]).max(), np.abs(v[ring]).max()))
    return ScalarBendingData(w, u, v, zeroed, jump)


@dataclass(frozen=True, eq=False)
class BendingField:
    U: np.ndarray  # (n, 3)
    U_alt: np.ndarray = field(repr=False)  # same recovery with v_t in the third row
    compatibility: dict = field(default_factory=dict)
    zeroed: np.ndarray | None = field(default=None, repr=False)


def recover_U(jet: SurfaceJet, data: ScalarBendingData, grid: DomainGrid,
              det_tol: float = 1e-10) -> BendingField:
    """Solve ``[R_s; R_t; R_ss] U = [u; v; u_s]`` node by node."""
    u, v = data.u, data.v
    u_s, u_t = grid.Ds @ u, grid.Dt @ u
    v_s, v_t = grid.Ds @ v, grid.Dt @ v
    live = ~data.zeroed
    cross = np.cross(jet.R_s, jet.R_t)
    det = _dot(jet.R_ss, cross)
    area = np.linalg.norm(cross, axis=1)
    if np.any(np.abs(det[live]) < det_tol * area[live]):
        raise DeterminantTooSmall("R_ss . (R_s x R_t) vanishes outside the planar discs")
    U = np.zeros((grid.n, 3))
    U_alt = np.zeros((grid.n, 3))
    mat = np.stack([jet.R_s, jet.R_t, jet.R_ss], axis=1)[live]
    U[live] = np.linalg.solve(mat, np.column_stack([u, v, u_s])[live][..., None])[..., 0]
    det_alt = _dot(jet.R_tt, cross)
    ok_alt = live & (np.abs(det_alt) >= det_tol * area)
    mat_alt = np.stack([jet.R_s, jet.R_t, jet.R_tt], axis=1)[ok_alt]
    U_alt[ok_alt] = np.linalg.solve(mat_alt, np.column_stack([u, v, v_t])[ok_alt][..., None])[..., 0]

    # rows of the overdetermined system that were not used
    r4 = _dot(jet.R_tt, U) - v_t
    r5 = 2 * _dot(jet.R_st, U) - (u_t + v_s)
    keep = live
    w = grid.weights * keep
    scale = np.sqrt(np.sum(w * (u_s**2 + v_t**2 + (u_t + v_s) ** 2))) or 1.0
    comp = {
        "row4_rel": float(np.sqrt(np.sum(w * r4**2)) / scale),
        "row5_rel": float(np.sqrt(np.sum(w * r5**2)) / scale),
        "ut_variant_rel_diff": float(np.sqrt(np.sum(w * np.sum((U - U_alt) ** 2, axis=1)))
                                     / max(np.sqrt(np.sum(w * np.sum(U**2, axis=1))), 1e-300)),
    }
    return BendingField(U=U, U_alt=U_alt, compatibility=comp, zeroed=data.zeroed)


@dataclass(frozen=True, eq=False)
class BendingResidual:
    rho1: np.ndarray  # R_s . U_s
    rho2: np.ndarray  # R_t . U_t
    rho3: np.ndarray  # R_s . U_t + R_t . U_s
    relative: float
    relative_components: tuple[float, float, float]
    sup_relative: float


def bending_residual(jet: SurfaceJet, U, grid: DomainGrid, exclude=None,
                     dU=None) -> BendingResidual:
    """Components of ``dR . dU`` with U differentiated on the grid.

    Norms are quadrature L2 over the domain minus ``exclude`` and are relative
    to the size of the individual products, so a rigid field with the same
    magnitude scores the same regardless of units.
    """
    U = np.asarray(U, float)
    U_s, U_t = (grid.Ds @ U, grid.Dt @ U) if dU is None else dU
    r1 = _dot(jet.R_s, U_s)
    r2 = _dot(jet.R_t, U_t)
    r3 = _dot(jet.R_s, U_t) + _dot(jet.R_t, U_s)
    ns, nt = np.linalg.norm(jet.R_s, axis=1), np.linalg.norm(jet.R_t, axis=1)
    us, ut = np.linalg.norm(U_s, axis=1), np.linalg.norm(U_t, axis=1)
    m1, m2, m3 = ns * us, nt * ut, ns * ut + nt * us
    w = grid.weights if exclude is None else np.where(exclude, 0.0, grid.weights)
    keep = w > 0

    def rel(r, m):
        d = np.sqrt(np.sum(w * m * m))
        return float(np.sqrt(np.sum(w * r * r)) / d) if d > 0 else 0.0

    total_d = np.sqrt(np.sum(w * (m1**2 + m2**2 + m3**2)))
    total = float(np.sqrt(np.sum(w * (r1**2 + r2**2 + r3**2))) / total_d) if total_d > 0 else 0.0
    sup_m = max(float(np.max((m1 + m2 + m3)[keep])), 1e-300)
    sup = float(np.max(np.abs(np.column_stack([r1, r2, r3])[keep]))) / sup_m
    return BendingResidual(r1, r2, r3, total, (rel(r1, m1), rel(r2, m2), rel(r3, m3)), sup)


def vanishing_order_at(grid: DomainGrid, values, center, inner=3.0, outer=12.0):
    """Log-log slope of a (vector) field's magnitude around ``center``."""
    idx, r = annulus_nodes(grid, center, inner, outer)
    vals = np.asarray(values)
    mag = np.linalg.norm(vals[idx].reshape(len(idx), -1), axis=1)
    good = mag > 0
    if good.sum() < 8:
        return float("nan"), 0.0
    return loglog_fit(r[good], mag[good])


# ---------------------------------------------------------------------------
# rigid motions


@dataclass(frozen=True)
class RigidMotionFit:
    A: np.ndarray
    B: np.ndarray
    relative_residual: float
    normal_residual: float

    @property
    def nontrivial(self) -> bool:
        return self.relative_residual >= NONTRIVIAL_THRESHOLD


def rigid_field(R, A, B) -> np.ndarray:
    return np.cross(np.asarray(A, float), R) + np.asarray(B, float)


def rigid_fit(R, U, weights=None) -> RigidMotionFit:
    """Least-squares ``U ~ A x R + B`` over all nodes."""
    R = np.asarray(R, float)
    U = np.asarray(U, float)
    n = len(R)
    # A x R = -[R]_x A
    X = np.zeros((n, 3, 6))
    X[:, 0, 1], X[:, 0, 2] = R[:, 2], -R[:, 1]
    X[:, 1, 0], X[:, 1, 2] = -R[:, 2], R[:, 0]
    X[:, 2, 0], X[:, 2, 1] = R[:, 1], -R[:, 0]
    X[:, :, 3:] = np.eye(3)
    sw = np.ones(n) if weights is None else np.sqrt(np.asarray(weights, float))
    Xm = (X * sw[:, None, None]).reshape(3 * n, 6)
    y = (U * sw[:, None]).ravel()
    unorm = np.linalg.norm(y)
    if unorm == 0:
        return RigidMotionFit(np.zeros(3), np.zeros(3), 0.0, 0.0)
    coef, *_ = np.linalg.lstsq(Xm, y, rcond=None)
    r = y - Xm @ coef
    normal = float(np.linalg.norm(Xm.T @ r) / (np.linalg.norm(Xm) * unorm))
    return RigidMotionFit(coef[:3], coef[3:], float(np.linalg.norm(r) / unorm), normal)


# ---------------------------------------------------------------------------
# deformation family


@dataclass(frozen=True, eq=False)
class DeformationFamily:
    sigmas: np.ndarray
    defects: np.ndarray
    pm_differences: np.ndarray  # sup |I(+sigma) - I(-sigma)| per sigma
    slope: float
    slope_r2: float
    dU2_sup: float
    dRdU_sup: float
    pm_identity_residual: float = 0.0  # sup |I(+s) - I(-s) - 4 s sym(dR.dU)|

    def surfaces(self, R, U):
        for s in self.sigmas:
            yield s, R + s * U, R - s * U


def first_form(Rs, Rt):
    return _dot(Rs, Rs), _dot(Rs, Rt), _dot(Rt, Rt)


def make_deformation(jet: SurfaceJet, U, sigmas, grid: DomainGrid, dU=None) -> DeformationFamily:
    """Isometry defect of ``R +- sigma U`` against R.

    First forms use the analytic jet of R and grid derivatives of U (or the
    supplied ``dU = (U_s, U_t)``).
    """
    U = np.asarray(U, float)
    sigmas = np.asarray(sorted(sigmas, reverse=True), float)
    U_s, U_t = (grid.Ds @ U, grid.Dt @ U) if dU is None else dU
    base = first_form(jet.R_s, jet.R_t)
    cross_terms = (2 * _dot(jet.R_s, U_s), _dot(jet.R_s, U_t) + _dot(jet.R_t, U_s),
                   2 * _dot(jet.R_t, U_t))
    defects, pm, ident = [], [], 0.0
    for s in sigmas:
        plus = first_form(jet.R_s + s * U_s, jet.R_t + s * U_t)
        minus = first_form(jet.R_s - s * U_s, jet.R_t - s * U_t)
        defects.append(max(float(np.max(np.abs(p - b))) for p, b in zip(plus, base)))
        pm.append(max(float(np.max(np.abs(p - m))) for p, m in zip(plus, minus)))
        ident = max(ident, max(float(np.max(np.abs(p - m - 2 * s * c)))
                               for p, m, c in zip(plus, minus, cross_terms)))
    defects = np.asarray(defects)
    pos = (sigmas > 0) & (defects > 0)
    slope, r2 = loglog_fit(sigmas[pos], defects[pos]) if pos.sum() >= 2 else (np.nan, 0.0)
    dU2 = max(float(np.max(np.abs(x))) for x in first_form(U_s, U_t))
    dRdU = max(float(np.max(np.abs(x))) for x in (
        _dot(jet.R_s, U_s), _dot(jet.R_t, U_t), _dot(jet.R_s, U_t) + _dot(jet.R_t, U_s)))
    return DeformationFamily(sigmas, defects, np.asarray(pm), slope, r2, dU2, dRdU, ident)
