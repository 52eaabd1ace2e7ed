"""Discrete Cauchy area transform ``T[f](z) = -(1/pi) \\iint f(zeta)/(zeta - z) dA``.

Sources are scattered quadrature cells (position, area weight).  When the
target coincides with a source, that cell is dropped: the kernel integrates
to zero over a disc centred at the target, so the self-cell contribution of a
locally constant density vanishes.

Near a curved boundary the cells are cut irregularly and the plain point sum
has O(1) derivative errors there.  The optional boundary correction removes
them by singularity subtraction,

    T[f](z_i) = f_i T[1](z_i) + T[f - f_i](z_i),

with ``T[1]`` evaluated exactly from the boundary polygon (Green's theorem
turns the area integral of ``1/(zeta - z)`` into a contour integral with a
closed form on every straight segment).  Since the point sum is linear, the
correction is a diagonal term added to the plain operator.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba

    # the bundled TBB is too old on some systems; workqueue is always available
    numba.config.THREADING_LAYER = "workqueue"
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

COINCIDENT = 1e-14


def _threads():
    n = os.environ.get("BEND_THREADS")
    return int(n) if n else None


if _HAVE_NUMBA:

    @numba.njit(parallel=True, fastmath=False, cache=True)
    def _cauchy_sum(src, q, tgt, eps):  # pragma: no cover - compiled
        out = np.empty(tgt.shape[0], dtype=np.complex128)
        for i in numba.prange(tgt.shape[0]):
            z = tgt[i]
            acc = 0j
            for j in range(src.shape[0]):
                d = src[j] - z
                if abs(d.real) + abs(d.imag) > eps:
                    acc += q[j] / d
            out[i] = acc
        return out


    @numba.njit(parallel=True, cache=True)
    def _polygon_kernel(verts, tgt):  # pragma: no cover - compiled
        nv = verts.shape[0]
        out = np.empty(tgt.shape[0], dtype=np.complex128)
        for i in numba.prange(tgt.shape[0]):
            z = tgt[i]
            acc = 0j
            for k in range(nv):
                a = verts[k]
                b = verts[(k + 1) % nv]
                d = b - a
                acc += d.conjugate()
                al = a - z
                be = b - z
                if abs(al) == 0.0 or abs(be) == 0.0:
                    continue
                c = al.conjugate() - d.conjugate() * al / d
                q = be / al
                acc += c * (np.log(abs(q)) + 1j * np.arctan2(q.imag, q.real))
            out[i] = acc / 2j
        return out


def _polygon_numpy(verts, tgt, chunk=256):
    a = verts
    b = np.roll(verts, -1)
    d = b - a
    out = np.empty(len(tgt), dtype=complex)
    for k0 in range(0, len(tgt), chunk):
        z = tgt[k0:k0 + chunk, None]
        al, be = a[None, :] - z, b[None, :] - z
        bad = (al == 0) | (be == 0)
        al_s = np.where(bad, 1.0, al)
        q = np.where(bad, 1.0, be) / al_s
        c = np.conj(al) - np.conj(d)[None, :] * al / d[None, :]
        L = np.where(bad, 0.0, np.log(np.abs(q)) + 1j * np.angle(q))
        out[k0:k0 + chunk] = (np.conj(d)[None, :] + c * L).sum(axis=1) / 2j
    return out


def _as_complex(points) -> np.ndarray:
    p = np.asarray(points)
    if p.ndim == 2 and p.shape[1] == 2 and not np.iscomplexobj(p):
        p = p[:, 0] + 1j * p[:, 1]
    return np.ascontiguousarray(p, dtype=np.complex128).ravel()


def polygon_area_cauchy(vertices, targets) -> np.ndarray:
    """``iint_P dA / (zeta - z)`` over the polygon P (any orientation) for each
    target z inside or on P.  Points may be complex or ``(n, 2)`` real arrays."""
    verts = _as_complex(vertices)
    # make the contour counterclockwise
    if np.sum((np.conj(verts) * np.roll(verts, -1)).imag) < 0:
        verts = np.ascontiguousarray(verts[::-1])
    tgt = _as_complex(targets)
    if _HAVE_NUMBA:
        return _polygon_kernel(verts, tgt)
    return _polygon_numpy(verts, tgt)  # pragma: no cover


def boundary_correction(points, weights, outline) -> np.ndarray:
    """Diagonal term making the point-sum transform exact on constants over the
    region bounded by ``outline`` (complex polygon vertices)."""
    exact = -polygon_area_cauchy(outline, points) / np.pi
    return exact - pompeiu_transform(points, weights, np.ones(len(points)))


def _cauchy_sum_numpy(src, q, tgt, eps, chunk=512):
    out = np.empty(len(tgt), dtype=complex)
    for a in range(0, len(tgt), chunk):
        d = src[None, :] - tgt[a:a + chunk, None]
        near = (np.abs(d.real) + np.abs(d.imag)) <= eps
        d[near] = 1.0
        k = 1.0 / d
        k[near] = 0.0
        out[a:a + chunk] = k @ q
    return out


def cauchy_sum(src, q, tgt) -> np.ndarray:
    """``sum_j q_j / (src_j - tgt_i)`` skipping coincident pairs."""
    src = np.ascontiguousarray(src, dtype=np.complex128)
    q = np.ascontiguousarray(q, dtype=np.complex128)
    tgt = np.ascontiguousarray(tgt, dtype=np.complex128)
    scale = max(float(np.max(np.abs(src))) if len(src) else 1.0, 1.0)
    eps = COINCIDENT * scale
    if _HAVE_NUMBA:
        nt = _threads()
        if nt:
            numba.set_num_threads(min(nt, numba.config.NUMBA_NUM_THREADS))
        return _cauchy_sum(src, q, tgt, eps)
    return _cauchy_sum_numpy(src, q, tgt, eps)  # pragma: no cover


def pompeiu_transform(points, weights, f, targets=None, correction=None) -> np.ndarray:
    """Evaluate T[f] at ``targets`` (default: the source points themselves).

    ``correction`` is the diagonal from :func:`boundary_correction`; it only
    applies when the targets are the source points.
    """
    points = np.asarray(points, dtype=complex)
    f = np.asarray(f, dtype=complex)
    q = f * np.asarray(weights, dtype=float)
    if targets is None:
        out = -cauchy_sum(points, q, points) / np.pi
        return out if correction is None else out + correction * f
    if correction is not None:
        raise ValueError("the boundary correction needs targets == sources")
    return -cauchy_sum(points, q, np.asarray(targets, dtype=complex)) / np.pi


def pompeiu_matrix(points, weights, targets=None) -> np.ndarray:
    """Dense matrix of the transform, rows = targets (default: the sources).

    Coincident source/target pairs get a zero entry.
    """
    z = np.asarray(points, dtype=complex)
    tg = z if targets is None else np.asarray(targets, dtype=complex)
    d = z[None, :] - tg[:, None]
    scale = max(float(np.max(np.abs(z))) if len(z) else 1.0, 1.0)
    near = (np.abs(d.real) + np.abs(d.imag)) <= COINCIDENT * scale
    d[near] = 1.0
    K = -np.asarray(weights, float)[None, :] / (np.pi * d)
    K[near] = 0.0
    return K


def dbar(grid, F) -> np.ndarray:
    """``dF/dzetabar = (F_s + i F_t)/2`` on the parameter grid."""
    return 0.5 * (grid.Ds @ F + 1j * (grid.Dt @ F))
