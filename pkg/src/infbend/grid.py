"""Masked Cartesian grids over simply connected parameter domains.

Nodes sit at cell centres of an ``N x N``-ish lattice covering the bounding
box of the region; a node belongs to the domain when its centre satisfies the
region predicate.  Fields live on the *masked* nodes only and are stored as
flat arrays of length ``grid.n`` (complex fields as complex arrays, vector
fields with a trailing axis of length 3).  :meth:`DomainGrid.to_image`
scatters a flat field back onto the lattice for plotting.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import ConfigError, MultiplyConnectedDomain, ResolutionTooLow

INTERIOR = 0
BOUNDARY = 1
EXTERIOR = -1

MIN_RESOLUTION = 3
SUBSAMPLE = 4


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class Region:
    """A planar region given by a vectorised membership predicate."""

    name: str
    bbox: tuple[float, float, float, float]  # s0, s1, t0, t1
    contains: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(repr=False)
    params: dict = field(default_factory=dict)
    # counterclockwise samples of the outer boundary, at most ``spacing`` apart
    outline: Callable[[float], np.ndarray] | None = field(default=None, repr=False)


def _polyline_samples(verts, spacing):
    """Points along a closed polyline (CCW), keeping every vertex."""
    verts = np.asarray(verts, float)
    x, y = verts[:, 0], verts[:, 1]
    if 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) < 0:
        verts = verts[::-1]
    out = []
    for a, b in zip(verts, np.roll(verts, -1, axis=0)):
        m = max(1, int(np.ceil(np.linalg.norm(b - a) / spacing)))
        out.append(a + (b - a) * (np.arange(m) / m)[:, None])
    return np.concatenate(out)


def disc(radius: float = 1.0, center: tuple[float, float] = (0.0, 0.0)) -> Region:
    cs, ct = center
    r2 = radius * radius
    return Region(
        "disc",
        (cs - radius, cs + radius, ct - radius, ct + radius),
        lambda s, t: (s - cs) ** 2 + (t - ct) ** 2 <= r2,
        {"radius": radius, "center": list(center)},
        lambda spacing: _circle(cs, ct, radius, spacing),
    )


def _circle(cs, ct, radius, spacing):
    m = max(16, int(np.ceil(2 * np.pi * radius / spacing)))
    th = 2 * np.pi * np.arange(m) / m
    return np.column_stack([cs + radius * np.cos(th), ct + radius * np.sin(th)])


def rectangle(s0: float = 0.0, s1: float = 1.0, t0: float = 0.0, t1: float = 1.0) -> Region:
    return Region(
        "rectangle",
        (s0, s1, t0, t1),
        lambda s, t: (s >= s0) & (s <= s1) & (t >= t0) & (t <= t1),
        {"s0": s0, "s1": s1, "t0": t0, "t1": t1},
        lambda spacing: _polyline_samples([(s0, t0), (s1, t0), (s1, t1), (s0, t1)], spacing),
    )


def annulus(inner: float, outer: float) -> Region:
    """Ring region; provided so that the connectivity check has something to reject."""
    return Region(
        "annulus",
        (-outer, outer, -outer, outer),
        lambda s, t: (s * s + t * t <= outer * outer) & (s * s + t * t >= inner * inner),
        {"inner": inner, "outer": outer},
        lambda spacing: _circle(0.0, 0.0, outer, spacing),
    )


def polygon(vertices) -> Region:
    import shapely

    verts = np.asarray(vertices, dtype=float)
    poly = shapely.Polygon(verts)
    if not poly.is_valid:
        raise MultiplyConnectedDomain("polygon is self-intersecting")
    s0, t0, s1, t1 = poly.bounds
    shapely.prepare(poly)
    return Region(
        "polygon",
        (s0, s1, t0, t1),
        lambda s, t: shapely.intersects_xy(poly, s, t),
        {"vertices": verts.tolist()},
        lambda spacing: _polyline_samples(verts, spacing),
    )


def region_from_spec(spec: str) -> Region:
    """Parse ``disc:0.8``, ``rectangle:0,1,0,1``, ``annulus:0.3,1`` or
    ``polygon:x0,y0;x1,y1;...``."""
    kind, _, args = spec.partition(":")
    kind = kind.strip().lower()
    try:
        return _region_from_parts(kind, args)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad region spec {spec!r}: {exc}") from None


def _region_from_parts(kind: str, args: str) -> Region:
    if kind == "disc":
        return disc(float(args) if args else 1.0)
    if kind == "rectangle":
        vals = [float(a) for a in args.split(",")] if args else [0.0, 1.0, 0.0, 1.0]
        return rectangle(*vals)
    if kind == "annulus":
        inner, outer = (float(a) for a in args.split(","))
        return annulus(inner, outer)
    if kind == "polygon":
        pts = [[float(c) for c in p.split(",")] for p in args.split(";")]
        return polygon(pts)
    raise ConfigError(f"unknown region kind {kind!r}")


# ---------------------------------------------------------------------------
# the grid


@dataclass(frozen=True, eq=False)
class DomainGrid:
    region: Region
    h: float
    s_axis: np.ndarray
    t_axis: np.ndarray
    mask: np.ndarray  # (ns, nt) bool, axis 0 is s
    index: np.ndarray  # (ns, nt) int, -1 off the mask
    ij: np.ndarray  # (n, 2) lattice indices of masked nodes
    nodes: np.ndarray  # (n, 2) (s, t)
    flags: np.ndarray  # (n,) INTERIOR / BOUNDARY
    weights: np.ndarray  # (n,) quadrature weights
    centroids: np.ndarray  # (n, 2) centroid of each node's quadrature cell
    triangles: np.ndarray  # (m, 3) counter-clockwise node triples
    boundary_trace: np.ndarray  # ordered closed loop of node indices
    Ds: sp.csr_matrix = field(repr=False)
    Dt: sp.csr_matrix = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def s(self) -> np.ndarray:
        return self.nodes[:, 0]

    @property
    def t(self) -> np.ndarray:
        return self.nodes[:, 1]

    @property
    def zeta(self) -> np.ndarray:
        return self.nodes[:, 0] + 1j * self.nodes[:, 1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    def full_mask(self) -> np.ndarray:
        """Per-lattice-node flag array with EXTERIOR outside the mask."""
        out = np.full(self.mask.shape, EXTERIOR, dtype=int)
        out[self.ij[:, 0], self.ij[:, 1]] = self.flags
        return out

    def to_image(self, values, fill=np.nan) -> np.ndarray:
        values = np.asarray(values)
        out = np.full(self.mask.shape + values.shape[1:], fill, dtype=np.result_type(values, float))
        out[self.ij[:, 0], self.ij[:, 1]] = values
        return out

    def nearest(self, s: float, t: float) -> int:
        d2 = (self.nodes[:, 0] - s) ** 2 + (self.nodes[:, 1] - t) ** 2
        return int(np.argmin(d2))

    def center_node(self) -> int:
        s0, s1, t0, t1 = self.region.bbox
        c = self.region.params.get("center")
        if c is not None:
            return self.nearest(*c)
        return self.nearest(0.5 * (s0 + s1), 0.5 * (t0 + t1))

    def descriptor(self) -> dict:
        return {
            "region": self.region.name,
            "region_params": self.region.params,
            "h": self.h,
            "shape": list(self.mask.shape),
            "n_nodes": self.n,
            "n_interior": int(np.sum(self.flags == INTERIOR)),
            "n_boundary": int(np.sum(self.flags == BOUNDARY)),
            "s_axis": [float(self.s_axis[0]), float(self.s_axis[-1])],
            "t_axis": [float(self.t_axis[0]), float(self.t_axis[-1])],
            "csv_columns": ["i", "j", "s", "t", "<value columns>"],
        }


def build_domain(region: Region, N: int) -> DomainGrid:
    """Discretise ``region`` with ``N`` cells across its longer side."""
    if N < MIN_RESOLUTION:
        raise ResolutionTooLow(f"N={N} < {MIN_RESOLUTION}")
    s0, s1, t0, t1 = region.bbox
    width, height = s1 - s0, t1 - t0
    h = max(width, height) / N
    ns = max(1, int(np.ceil(width / h - 1e-9)))
    nt = max(1, int(np.ceil(height / h - 1e-9)))
    s_axis = 0.5 * (s0 + s1) + (np.arange(ns) - 0.5 * (ns - 1)) * h
    t_axis = 0.5 * (t0 + t1) + (np.arange(nt) - 0.5 * (nt - 1)) * h
    S, T = np.meshgrid(s_axis, t_axis, indexing="ij")
    mask = _prune(np.asarray(region.contains(S, T), dtype=bool))

    _check_topology(mask)

    index = np.full(mask.shape, -1, dtype=int)
    ij = np.argwhere(mask)
    index[ij[:, 0], ij[:, 1]] = np.arange(len(ij))
    nodes = np.column_stack([s_axis[ij[:, 0]], t_axis[ij[:, 1]]])

    padded = np.pad(mask, 1)
    pi, pj = ij[:, 0] + 1, ij[:, 1] + 1
    all_nbrs = padded[pi - 1, pj] & padded[pi + 1, pj] & padded[pi, pj - 1] & padded[pi, pj + 1]
    flags = np.where(all_nbrs, INTERIOR, BOUNDARY)

    Ds = _derivative_matrix(mask, index, ij, h, axis=0)
    Dt = _derivative_matrix(mask, index, ij, h, axis=1)
    triangles = _triangulate(mask, index)
    covered = np.zeros(len(ij), dtype=bool)
    covered[triangles.ravel()] = True
    if not covered.all():
        raise ResolutionTooLow("some domain nodes belong to no lattice triangle")
    trace = _boundary_loop(triangles)

    weights, centroids = _quadrature(region, s_axis, t_axis, h, nodes, index)

    return DomainGrid(
        region=region,
        h=h,
        s_axis=s_axis,
        t_axis=t_axis,
        mask=mask,
        index=index,
        ij=ij,
        nodes=nodes,
        flags=flags,
        weights=weights,
        centroids=centroids,
        triangles=triangles,
        boundary_trace=trace,
        Ds=Ds,
        Dt=Dt,
    )


def _has_stencil(mask: np.ndarray, axis: int) -> np.ndarray:
    p = np.pad(mask, 2)
    sh = [slice(2, -2), slice(2, -2)]

    def at(k):
        sl = list(sh)
        sl[axis] = slice(2 + k, p.shape[axis] - 2 + k)
        return p[tuple(sl)]

    return (at(-1) & at(1)) | (at(1) & at(2)) | (at(-1) & at(-2))


def _prune(mask: np.ndarray) -> np.ndarray:
    """Drop nodes (e.g. at polygon vertices) with no three-point stencil along
    some axis; their cell area goes to the nearest remaining nodes."""
    mask = mask.copy()
    while True:
        bad = mask & ~(_has_stencil(mask, 0) & _has_stencil(mask, 1))
        if not bad.any():
            return mask
        mask &= ~bad


def _check_topology(mask: np.ndarray) -> None:
    if not mask.any():
        raise ResolutionTooLow("region contains no grid nodes")
    _, n_in = ndimage.label(mask)
    if n_in != 1:
        raise MultiplyConnectedDomain(f"domain has {n_in} components")
    # holes: complement components that do not reach the frame
    _, n_out = ndimage.label(~np.pad(mask, 1), structure=np.ones((3, 3)))
    if n_out != 1:
        raise MultiplyConnectedDomain(f"domain has {n_out - 1} hole(s)")


def _derivative_matrix(mask, index, ij, h, axis):
    n = len(ij)
    step = np.array([1, 0]) if axis == 0 else np.array([0, 1])
    padded = np.pad(mask, 2)
    idx_p = np.pad(index, 2, constant_values=-1)

    def nb(k):
        q = ij + 2 + k * step
        return padded[q[:, 0], q[:, 1]], idx_p[q[:, 0], q[:, 1]]

    has = {}
    ids = {}
    for k in (-2, -1, 1, 2):
        has[k], ids[k] = nb(k)
    own = np.arange(n)
    rows, cols, vals = [], [], []

    centred = has[-1] & has[1]
    fwd = ~centred & has[1] & has[2]
    bwd = ~centred & ~fwd & has[-1] & has[-2]
    bad = ~(centred | fwd | bwd)
    if bad.any():
        raise ResolutionTooLow(
            f"{int(bad.sum())} node(s) lack a three-point stencil along axis {'st'[axis]}"
        )
    c = 1.0 / (2.0 * h)
    for sel, terms in (
        (centred, ((ids[1], c), (ids[-1], -c))),
        (fwd, ((own, -3 * c), (ids[1], 4 * c), (ids[2], -c))),
        (bwd, ((own, 3 * c), (ids[-1], -4 * c), (ids[-2], c))),
    ):
        r = own[sel]
        for col, v in terms:
            rows.append(r)
            cols.append(col[sel])
            vals.append(np.full(len(r), v))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def _triangulate(mask, index):
    ns, nt = mask.shape
    a = index[:-1, :-1]
    b = index[1:, :-1]
    c = index[1:, 1:]
    d = index[:-1, 1:]
    ia, ib, ic, id_ = a >= 0, b >= 0, c >= 0, d >= 0
    tris = []
    full = ia & ib & ic & id_
    tris.append(np.column_stack([a[full], b[full], c[full]]))
    tris.append(np.column_stack([a[full], c[full], d[full]]))
    three = (ia.astype(int) + ib + ic + id_) == 3
    for sel, trip in (
        (three & ~ia, (b, c, d)),
        (three & ~ib, (a, c, d)),
        (three & ~ic, (a, b, d)),
        (three & ~id_, (a, b, c)),
    ):
        tris.append(np.column_stack([x[sel] for x in trip]))
    return np.concatenate(tris).astype(int)


def _boundary_loop(triangles):
    edges = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    n = int(edges.max()) + 1
    code = edges[:, 0].astype(np.int64) * n + edges[:, 1]
    twin = edges[:, 1].astype(np.int64) * n + edges[:, 0]
    bnd = edges[~np.isin(code, twin)].tolist()
    nxt = {}
    for u, v in bnd:
        if u in nxt:
            raise ResolutionTooLow("boundary pinches at a node; refine the grid")
        nxt[u] = v
    start = bnd[0][0]
    loop = [start]
    cur = nxt[start]
    while cur != start:
        loop.append(cur)
        cur = nxt[cur]
    if len(loop) != len(bnd):
        raise MultiplyConnectedDomain("boundary consists of several loops")
    return np.asarray(loop, dtype=int)


def _quadrature(region, s_axis, t_axis, h, nodes, index):
    """Cut-cell weights: each inside subsample of the lattice cells goes to the
    nearest domain node (ties split evenly).

    A subsample lies within h/2 of its own cell centre along both axes, so when
    that node is in the domain it is the unique nearest one; only subsamples of
    cells without a node need the tree.
    """
    sub = (np.arange(SUBSAMPLE) + 0.5) / SUBSAMPLE - 0.5
    fs = (s_axis[:, None] + h * sub[None, :]).ravel()
    ft = (t_axis[:, None] + h * sub[None, :]).ravel()
    # one extra ring of cells so that region area outside the lattice is not lost
    pad_s = np.concatenate([s_axis[0] - h + h * sub, fs, s_axis[-1] + h + h * sub])
    pad_t = np.concatenate([t_axis[0] - h + h * sub, ft, t_axis[-1] + h + h * sub])
    FS, FT = np.meshgrid(pad_s, pad_t, indexing="ij")
    inside = np.asarray(region.contains(FS, FT), dtype=bool)
    ci, cj = np.nonzero(inside)
    pts = np.column_stack([FS[ci, cj], FT[ci, cj]])
    own = np.pad(index, 1, constant_values=-1)[ci // SUBSAMPLE, cj // SUBSAMPLE]
    far = own < 0
    n = len(nodes)
    cell = (h / SUBSAMPLE) ** 2
    targets, shares, where = [own[~far]], [np.full((~far).sum(), cell)], [pts[~far]]
    if far.any():
        dist, idx = cKDTree(nodes).query(pts[far], k=4)
        tie = dist <= dist[:, :1] * (1 + 1e-9) + 1e-15
        share = tie / tie.sum(axis=1, keepdims=True) * cell
        targets.append(idx.ravel())
        shares.append(share.ravel())
        where.append(np.repeat(pts[far], 4, axis=0))
    tgt, w, xy = np.concatenate(targets), np.concatenate(shares), np.concatenate(where)
    weights = np.bincount(tgt, weights=w, minlength=n)
    mom = np.column_stack([np.bincount(tgt, weights=w * xy[:, k], minlength=n) for k in (0, 1)])
    return weights, mom / weights[:, None]


# ---------------------------------------------------------------------------
# calculus


def differentiate(grid: DomainGrid, f, axis: str):
    """Second-order partial derivative along ``'s'`` or ``'t'``.

    Works on scalar, complex and vector (``(n, 3)``) fields alike.
    """
    D = grid.Ds if axis == "s" else grid.Dt
    if axis not in ("s", "t"):
        raise ValueError("axis must be 's' or 't'")
    return D @ np.asarray(f)


def integrate(grid: DomainGrid, f) -> float | complex:
    return np.tensordot(grid.weights, np.asarray(f), axes=(0, 0))


def norm2(grid: DomainGrid, f, exclude=None) -> float:
    """Quadrature L2 norm of a scalar/complex/vector field."""
    f = np.asarray(f)
    a2 = np.abs(f) ** 2
    if a2.ndim > 1:
        a2 = a2.reshape(len(a2), -1).sum(axis=1)
    w = grid.weights if exclude is None else np.where(exclude, 0.0, grid.weights)
    return float(np.sqrt(np.dot(w, a2)))


# ---------------------------------------------------------------------------
# serialisation


def field_csv(grid: DomainGrid, columns: dict[str, np.ndarray]) -> str:
    """CSV text with columns ``i, j, s, t`` followed by one column per value.

    Complex arrays expand into ``<name>_re, <name>_im``; ``(n, 3)`` arrays into
    ``<name>_x, <name>_y, <name>_z``.
    """
    header = ["i", "j", "s", "t"]
    cols = []
    for name, arr in columns.items():
        arr = np.asarray(arr)
        if arr.ndim == 2:
            parts = arr.real if not np.iscomplexobj(arr) else arr
            for k, suffix in enumerate("xyz"[: arr.shape[1]]):
                header.append(f"{name}_{suffix}")
                cols.append(np.real(parts[:, k]))
        elif np.iscomplexobj(arr):
            header += [f"{name}_re", f"{name}_im"]
            cols += [arr.real, arr.imag]
        else:
            header.append(name)
            cols.append(arr)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for k in range(grid.n):
        row = [int(grid.ij[k, 0]), int(grid.ij[k, 1]), repr(float(grid.nodes[k, 0])),
               repr(float(grid.nodes[k, 1]))]
        row += [repr(float(c[k])) for c in cols]
        w.writerow(row)
    return buf.getvalue()


def read_field_csv(text: str) -> dict[str, np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    out = {name: body[:, k] for k, name in enumerate(header)}
    for name in list(out):
        if name.endswith("_re") and name[:-3] + "_im" in out:
            base = name[:-3]
            out[base] = out.pop(name) + 1j * out.pop(base + "_im")
    for name in list(out):
        if name.endswith("_x") and name[:-2] + "_y" in out and name[:-2] + "_z" in out:
            base = name[:-2]
            out[base] = np.column_stack([out.pop(base + "_x"), out.pop(base + "_y"),
                                         out.pop(base + "_z")])
    return out


def descriptor_json(grid: DomainGrid) -> str:
    return json.dumps(grid.descriptor(), indent=2, sort_keys=True)
