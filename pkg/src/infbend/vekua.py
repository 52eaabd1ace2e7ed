"""The singular Vekua equation satisfied by ``w = LR . U``.

Three steps:

1. ``vekua_coefficients`` assembles A, B, C from triple products of LR, L̄R
   and L²R, so that ``C Lw = A w + B w̄`` for every infinitesimal bending U.
2. ``pushforward`` rewrites the equation in the image coordinate Z of the
   first integral, ``dW/dZbar = (â W + b̂ W̄) / prod(Z - Z_j)``, and splits off
   the bounded numerators â, b̂.
3. ``solve_modified`` finds W1 with ``W1 = Phi + T[â W1 + b̂ (H̄/H) W̄1]``
   where ``H = prod(Z - Z_j)^M``; ``assemble_solution`` forms ``W = H W1``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from . import pompeiu
from .asymptotic import AsymptoticField, apply_L
from .errors import (
    FitUnstable,
    IterationDiverged,
    JacobianSingular,
    ResidualAboveTolerance,
    VanishingOrderTooLow,
)
from .first_integral import FirstIntegral, planar_exclusion
from .grid import DomainGrid
from .surface import FundamentalForms, SurfaceJet, loglog_fit

log = logging.getLogger(__name__)

DENSE_LIMIT = 4000  # nodes; the real-linear dense system has (2n)^2 entries


def _dot(a, b):
    return np.einsum("ij,ij->i", a, b)


@dataclass(frozen=True, eq=False)
class VekuaCoefficients:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    LR: np.ndarray = field(repr=False)
    L2R: np.ndarray = field(repr=False)


def lr_vectors(jet: SurfaceJet, lf: AsymptoticField) -> np.ndarray:
    return lf.coeff_s[:, None] * jet.R_s + lf.lam[:, None] * jet.R_t


def vekua_coefficients(jet: SurfaceJet, lf: AsymptoticField, grid: DomainGrid) -> VekuaCoefficients:
    """A = D.(L²R x L̄R), B = D.(LR x L²R), C = D.D with D = LR x L̄R.

    Products are complex bilinear (no conjugation).  L²R is L applied, with
    grid differences, to the assembled LR field.
    """
    LR = lr_vectors(jet, lf)
    LbR = np.conj(LR)
    L2R = apply_L(grid, lf, LR)
    D = np.cross(LR, LbR)
    A = _dot(D, np.cross(L2R, LbR))
    B = _dot(D, np.cross(LR, L2R))
    C = _dot(D, D)
    if np.any(np.abs(C.imag) >= 1e-9 * np.abs(C) + 1e-12):
        raise ValueError("C is not real; L coefficients inconsistent")
    return VekuaCoefficients(A, B, C.real.astype(float), LR, L2R)


def vekua_residual(grid, lf, coeffs: VekuaCoefficients, w) -> np.ndarray:
    """Nodewise ``C Lw - A w - B w̄``."""
    return coeffs.C * apply_L(grid, lf, w) - coeffs.A * w - coeffs.B * np.conj(w)


# ---------------------------------------------------------------------------
# pushforward


@dataclass(frozen=True, eq=False)
class VekuaProblem:
    points: np.ndarray  # Z at the grid nodes
    weights: np.ndarray  # Jacobian-weighted areas in the Z-plane
    a_hat: np.ndarray  # bounded numerators
    b_hat: np.ndarray
    singular: tuple[complex, ...]
    M: int
    excluded: np.ndarray  # nodes within 4h of a planar point
    planar_nodes: tuple[int, ...] = ()
    sup_a: float = 0.0
    sup_b: float = 0.0
    correction: np.ndarray | None = None  # boundary diagonal of the transform
    @property
    def n(self):
        return len(self.points)

    def denominator(self, Z=None) -> np.ndarray:
        Z = self.points if Z is None else Z
        out = np.ones_like(Z, dtype=complex)
        for zj in self.singular:
            out = out * (Z - zj)
        return out

    def H(self, Z=None) -> np.ndarray:
        return self.denominator(Z) ** self.M

    def H_ratio(self) -> np.ndarray:
        """H̄/H, unimodular off the singular points (1 at them by convention)."""
        Hv = self.H()
        out = np.ones_like(Hv)
        nz = Hv != 0
        out[nz] = np.conj(Hv[nz]) / Hv[nz]
        return out

    def a(self):
        return _divide(self.a_hat, self.denominator())

    def b(self):
        return _divide(self.b_hat, self.denominator())


def _divide(num, den):
    out = np.zeros_like(num, dtype=complex)
    nz = den != 0
    out[nz] = num[nz] / den[nz]
    return out


def image_outline(grid: DomainGrid, Z, spacing: float = 0.125, order: int = 2) -> np.ndarray:
    """Z-image of the parameter-domain boundary.

    The boundary is sampled every ``spacing * h`` and Z is continued from the
    nearest node by a Taylor step (``order`` 1 or 2) built from grid
    derivatives.  Returns ``None`` when the region has no outline sampler.
    """
    if grid.region.outline is None:
        return None
    pts = grid.region.outline(spacing * grid.h)
    _, idx = cKDTree(grid.nodes).query(pts)
    ds = pts[:, 0] - grid.s[idx]
    dt = pts[:, 1] - grid.t[idx]
    Zs, Zt = grid.Ds @ Z, grid.Dt @ Z
    out = Z[idx] + Zs[idx] * ds + Zt[idx] * dt
    if order >= 2:
        Zss, Zst, Ztt = grid.Ds @ Zs, grid.Dt @ Zs, grid.Dt @ Zt
        out = out + 0.5 * (Zss[idx] * ds**2 + 2 * Zst[idx] * ds * dt + Ztt[idx] * dt**2)
    return out


def pushforward(coeffs: VekuaCoefficients, fi: FirstIntegral, lf: AsymptoticField,
                grid: DomainGrid, M: int, exclusion_radius: float = 4.0,
                jacobian_tol: float = 1e-10, boundary_correction: bool = True) -> VekuaProblem:
    """Write ``C Lw = A w + B w̄`` in the coordinate Z.

    With ``w = W o Z`` and ``LZ = 0``, ``Lw = W_Zbar * L(Z̄)``, hence
    ``W_Zbar = a W + b W̄`` with ``a = A/(C L Z̄)``, ``b = B/(C L Z̄)``.  The
    bounded numerators are ``â = a prod(Z - Z_j)``, ``b̂ = b prod(Z - Z_j)``.
    """
    Z = fi.Z
    planar = tuple(fi.planar_nodes)
    singular = tuple(complex(Z[k]) for k in planar)
    near = planar_exclusion(grid, planar, radius=2.0)
    excluded = planar_exclusion(grid, planar, radius=exclusion_radius)

    jac = fi.jacobian
    if np.any(np.abs(jac[~near]) < jacobian_tol):
        raise JacobianSingular(f"min |J| = {np.abs(jac[~near]).min():.3e} off planar discs")
    LZb = apply_L(grid, lf, np.conj(Z))
    denom = coeffs.C * LZb
    ok = np.abs(denom) > 0
    ok[list(planar)] = False
    a = np.zeros(grid.n, dtype=complex)
    b = np.zeros(grid.n, dtype=complex)
    a[ok] = coeffs.A[ok] / denom[ok]
    b[ok] = coeffs.B[ok] / denom[ok]
    prod = np.ones(grid.n, dtype=complex)
    for zj in singular:
        prod = prod * (Z - zj)
    a_hat, b_hat = a * prod, b * prod
    weights = grid.weights * np.abs(jac)
    correction = None
    if boundary_correction:
        outline = image_outline(grid, Z)
        if outline is not None:
            correction = pompeiu.boundary_correction(Z, weights, outline)
    return VekuaProblem(
        points=Z.copy(),
        weights=weights,
        a_hat=a_hat,
        b_hat=b_hat,
        singular=singular,
        M=int(M) if singular else 0,
        excluded=excluded,
        planar_nodes=planar,
        sup_a=float(np.max(np.abs(a_hat))),
        sup_b=float(np.max(np.abs(b_hat))),
        correction=correction,
    )


# ---------------------------------------------------------------------------
# solve


@dataclass(frozen=True, eq=False)
class VekuaSolution:
    W1: np.ndarray
    W: np.ndarray
    seed: np.ndarray = field(repr=False)
    residual_modified: float = np.nan
    residual_original: float = np.nan
    residual_original_differential: float = np.nan
    method: str = ""
    iterations: int = 0
    vanishing_slopes: tuple[float, ...] = ()


def modified_operator(problem: VekuaProblem):
    """Source density of the modified equation as a function of W1."""
    a = problem.a_hat / _safe(problem.denominator())
    b = problem.b_hat / _safe(problem.denominator()) * problem.H_ratio()
    dead = problem.denominator() == 0
    a[dead] = 0.0
    b[dead] = 0.0
    return a, b


def _safe(d):
    return np.where(d == 0, 1.0, d)


def _apply_T(problem, f):
    return pompeiu.pompeiu_transform(problem.points, problem.weights, f,
                                     correction=problem.correction)


def modified_residual(problem: VekuaProblem, W1, seed) -> float:
    a, b = modified_operator(problem)
    r = W1 - seed - _apply_T(problem, a * W1 + b * np.conj(W1))
    return float(np.max(np.abs(r)) / max(np.max(np.abs(W1)), 1e-300))


def seed_function(problem: VekuaProblem, kind: str = "one") -> np.ndarray:
    """Holomorphic seed Phi: ``one`` (default) or ``z<k>`` for Z**k."""
    if kind in ("one", "1"):
        return np.ones(problem.n, dtype=complex)
    if kind.startswith("z"):
        k = int(kind[1:] or 1)
        return problem.points.astype(complex) ** k
    raise ValueError(f"unknown seed {kind!r}")


def solve_modified(problem: VekuaProblem, seed=None, method: str = "auto",
                   tol: float = 1e-6, maxiter: int = 400, damping: float = 0.5) -> VekuaSolution:
    """Solve ``W1 = Phi + T[a W1 + b̃ W̄1]`` (real-linear in W1).

    ``method``: ``dense`` (real 2n x 2n LU), ``gmres`` (matrix-free Krylov on
    the realified operator), ``fixed-point`` (damped Picard), or ``auto``
    (dense up to ``DENSE_LIMIT`` nodes, Krylov above).
    """
    n = problem.n
    Phi = np.ones(n, dtype=complex) if seed is None else np.asarray(seed, dtype=complex)
    a, b = modified_operator(problem)
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "gmres"
    iters = 0
    if method == "dense":
        K = pompeiu.pompeiu_matrix(problem.points, problem.weights)
        if problem.correction is not None:
            K[np.diag_indices(n)] = problem.correction
        K1 = K * a[None, :]
        K2 = K * b[None, :]
        # W - K1 W - K2 conj(W) = Phi, with W = x + i y
        top = np.hstack([np.eye(n) - K1.real - K2.real, K1.imag - K2.imag])
        bot = np.hstack([-K1.imag - K2.imag, np.eye(n) - K1.real + K2.real])
        del K, K1, K2
        sol = np.linalg.solve(np.vstack([top, bot]), np.concatenate([Phi.real, Phi.imag]))
        W1 = sol[:n] + 1j * sol[n:]
    elif method == "gmres":
        def mv(x):
            W = x[:n] + 1j * x[n:]
            r = W - _apply_T(problem, a * W + b * np.conj(W))
            return np.concatenate([r.real, r.imag])

        op = spla.LinearOperator((2 * n, 2 * n), matvec=mv, dtype=float)
        count = [0]

        def cb(_):
            count[0] += 1

        rhs = np.concatenate([Phi.real, Phi.imag])
        x, info = spla.gmres(op, rhs, x0=rhs.copy(), rtol=min(tol, 1e-9) * 1e-2, atol=0.0,
                             restart=60, maxiter=maxiter, callback=cb,
                             callback_type="pr_norm")
        iters = count[0]
        if info < 0:
            raise IterationDiverged(f"gmres breakdown (info={info})")
        W1 = x[:n] + 1j * x[n:]
    elif method == "fixed-point":
        W1 = Phi.copy()
        for iters in range(1, maxiter + 1):
            nxt = Phi + _apply_T(problem, a * W1 + b * np.conj(W1))
            step = np.max(np.abs(nxt - W1))
            W1 = (1 - damping) * W1 + damping * nxt
            if not np.all(np.isfinite(W1)) or step > 1e12:
                raise IterationDiverged(f"fixed-point iteration diverged at step {iters}")
            if step <= 1e-3 * tol * max(np.max(np.abs(W1)), 1.0):
                break
    else:
        raise ValueError(f"unknown method {method!r}")

    res = modified_residual(problem, W1, Phi)
    log.info("modified Vekua solve: method=%s iterations=%d residual=%.3e", method, iters, res)
    if not res < tol:
        raise ResidualAboveTolerance(f"modified-equation residual {res:.3e} >= {tol:.1e}")
    return VekuaSolution(W1=W1, W=W1 * problem.H(), seed=Phi, residual_modified=res,
                         method=method, iterations=iters)


# ---------------------------------------------------------------------------
# assembly and verification


def original_residual(problem: VekuaProblem, W, seed) -> float:
    """Integral form of the unmodified equation, off the excluded discs:
    ``W - H (Phi + T[(â W + b̂ W̄)/(H prod(Z - Z_j))])`` relative to sup|W|."""
    Hv = problem.H()
    den = problem.denominator() * Hv
    src = _divide(problem.a_hat * W + problem.b_hat * np.conj(W), den)
    r = W - Hv * (seed + _apply_T(problem, src))
    keep = ~problem.excluded
    return float(np.max(np.abs(r[keep])) / max(np.max(np.abs(W[keep])), 1e-300))


def differential_residual(problem: VekuaProblem, grid: DomainGrid, W) -> float:
    """``dW/dZbar - (â W + b̂ W̄)/prod(Z - Z_j)`` with dW/dZbar from grid
    differences and the chain rule; relative L2 norm off the excluded discs."""
    Z = problem.points
    Zs, Zt = grid.Ds @ Z, grid.Dt @ Z
    Ws, Wt = grid.Ds @ W, grid.Dt @ W
    # [Ws; Wt] = [[Zs, conj(Zs)], [Zt, conj(Zt)]] [W_Z; W_Zbar]
    det = Zs * np.conj(Zt) - np.conj(Zs) * Zt
    W_zb = _divide(Zs * Wt - Zt * Ws, det)
    rhs = _divide(problem.a_hat * W + problem.b_hat * np.conj(W), problem.denominator())
    keep = ~problem.excluded
    w = grid.weights * keep
    num = np.sqrt(np.sum(w * np.abs(W_zb - rhs) ** 2))
    den = np.sqrt(np.sum(w * (np.abs(W_zb) ** 2 + np.abs(rhs) ** 2)))
    return float(num / den) if den > 0 else 0.0


def vanishing_slopes(problem: VekuaProblem, grid: DomainGrid, W, inner=3.0, outer=12.0):
    """Log-log slope of |W| against |Z - Z_j| on the (s,t) annulus around each p_j."""
    out = []
    for k, zj in zip(problem.planar_nodes, problem.singular):
        r = np.hypot(grid.s - grid.s[k], grid.t - grid.t[k])
        sel = (r >= inner * grid.h * (1 - 1e-9)) & (r <= outer * grid.h * (1 + 1e-9))
        if sel.sum() < 8:
            raise FitUnstable("annulus around singular point not available")
        slope, _ = loglog_fit(np.abs(problem.points[sel] - zj), W[sel])
        out.append(slope)
    return tuple(out)


def assemble_solution(problem: VekuaProblem, sol: VekuaSolution, grid: DomainGrid | None = None,
                      min_slope_margin: float = 0.2, tol: float = 1e-5) -> VekuaSolution:
    W = problem.H() * sol.W1
    res_orig = original_residual(problem, W, sol.seed)
    slopes = ()
    res_diff = np.nan
    if grid is not None:
        res_diff = differential_residual(problem, grid, W)
        if problem.singular:
            slopes = vanishing_slopes(problem, grid, W)
            low = [s for s in slopes if s < problem.M - min_slope_margin]
            if low:
                raise VanishingOrderTooLow(f"slopes {slopes} below M - {min_slope_margin}")
    if not res_orig < tol:
        raise ResidualAboveTolerance(f"original-equation residual {res_orig:.3e} >= {tol:.1e}")
    return VekuaSolution(W1=sol.W1, W=W, seed=sol.seed, residual_modified=sol.residual_modified,
                         residual_original=res_orig, residual_original_differential=res_diff,
                         method=sol.method, iterations=sol.iterations, vanishing_slopes=slopes)
