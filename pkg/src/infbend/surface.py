"""Surface catalogue, analytic jets, fundamental forms and planar points.

Surfaces are given symbolically (sympy) so that every partial derivative of
the position vector up to second order is exact; nothing here is finite
differenced.  A graph ``z = z(s, t)`` is the common case, but any immersion
``R(s, t)`` with three component expressions works.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass, field

import numpy as np
import sympy

from . import grid as _grid
from .errors import (
    ConfigError,
    CurvatureHypothesisViolated,
    DegenerateImmersion,
    FitUnstable,
    OrientationUndecidable,
)

S, T, PHI = sympy.symbols("s t phi", real=True)

_ALLOWED_FUNCS = {"sqrt": sympy.sqrt, "sin": sympy.sin, "cos": sympy.cos}
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow,
    ast.USub, ast.UAdd, ast.Call, ast.Name, ast.Load, ast.Constant,
)


def parse_expression(text: str, variables=("s", "t")) -> sympy.Expr:
    """Parse a restricted arithmetic expression.

    Allowed: numbers, ``+ - * / ** ^``, parentheses, ``sqrt``, ``sin``, ``cos``,
    ``pi`` and the given variable names (``x``/``y`` alias ``s``/``t``).
    Anything else is rejected before sympy ever sees the string.
    """
    src = text.replace("^", "**")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    names = {"s": S, "t": T, "x": S, "y": T, "phi": PHI, "pi": sympy.pi}
    allowed_vars = set(variables) | {"pi"}
    if "s" in variables:
        allowed_vars |= {"x"}
    if "t" in variables:
        allowed_vars |= {"y"}
    callees = {id(n.func) for n in ast.walk(tree) if isinstance(n, ast.Call)}
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ConfigError(f"disallowed syntax {type(node).__name__} in {text!r}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _ALLOWED_FUNCS:
                raise ConfigError(f"disallowed function in {text!r}")
            if node.keywords or len(node.args) != 1:
                raise ConfigError(f"functions take exactly one argument: {text!r}")
        elif isinstance(node, ast.Name):
            if node.id not in (_ALLOWED_FUNCS if id(node) in callees else allowed_vars):
                raise ConfigError(f"unknown name {node.id!r} in {text!r}")
        elif isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigError(f"disallowed constant in {text!r}")
    return _to_sympy(tree.body, names)


def _to_sympy(node, names):
    if isinstance(node, ast.Constant):
        v = node.value
        return sympy.Integer(v) if isinstance(v, int) else sympy.Float(v)
    if isinstance(node, ast.Name):
        return names[node.id]
    if isinstance(node, ast.UnaryOp):
        v = _to_sympy(node.operand, names)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp):
        a, b = _to_sympy(node.left, names), _to_sympy(node.right, names)
        op = type(node.op)
        if op is ast.Add:
            return a + b
        if op is ast.Sub:
            return a - b
        if op is ast.Mult:
            return a * b
        if op is ast.Div:
            return a / b
        return a**b
    if isinstance(node, ast.Call):
        return _ALLOWED_FUNCS[node.func.id](_to_sympy(node.args[0], names))
    raise ConfigError("unsupported expression")  # pragma: no cover


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class PlanarModel:
    """Declared homogeneous model ``z ~ rho**m * P(phi)`` at a planar point."""

    location: tuple[float, float]
    degree: int
    profile: sympy.Expr = field(default=sympy.Integer(1))

    def profile_functions(self):
        """Vectorised callables for P, P' and P''."""
        p = sympy.sympify(self.profile)
        fns = [sympy.lambdify(PHI, e, "numpy") for e in (p, p.diff(PHI), p.diff(PHI, 2))]

        def wrap(f):
            return lambda phi: np.broadcast_to(f(phi), np.shape(phi)).astype(float)

        return tuple(wrap(f) for f in fns)


@dataclass(frozen=True)
class SurfaceDefinition:
    name: str
    position: tuple  # three sympy expressions in s, t
    region: _grid.Region
    planar: tuple[PlanarModel, ...] = ()
    description: str = ""

    @classmethod
    def graph(cls, name, height, region, planar=(), description=""):
        height = parse_expression(height) if isinstance(height, str) else sympy.sympify(height)
        return cls(name, (S, T, height), region, tuple(planar), description)


@dataclass(frozen=True, eq=False)
class SurfaceJet:
    R: np.ndarray
    R_s: np.ndarray
    R_t: np.ndarray
    R_ss: np.ndarray
    R_st: np.ndarray
    R_tt: np.ndarray
    N: np.ndarray


@dataclass(frozen=True, eq=False)
class FundamentalForms:
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    e: np.ndarray
    f: np.ndarray
    g: np.ndarray
    K: np.ndarray
    flipped: bool = False


@dataclass(frozen=True)
class PlanarPoint:
    location: tuple[float, float]
    node: int
    K_value: float
    m_K: float | None = None
    model: PlanarModel | None = None


# ---------------------------------------------------------------------------
# catalogue


def _catalog():
    eps = sympy.Rational(1, 5)
    r2 = S**2 + T**2
    return {
        "sphere-cap": SurfaceDefinition.graph(
            "sphere-cap", sympy.sqrt(1 - r2), _grid.disc(0.7),
            description="upper unit hemisphere over the disc of radius 0.7; K = 1"),
        "paraboloid": SurfaceDefinition.graph(
            "paraboloid", r2 / 2, _grid.disc(1.0),
            description="elliptic paraboloid z = (s^2 + t^2)/2"),
        "elliptic-paraboloid": SurfaceDefinition.graph(
            "elliptic-paraboloid", (S**2 + 2 * T**2) / 2, _grid.disc(1.0),
            description="anisotropic paraboloid z = (s^2 + 2 t^2)/2"),
        "quartic": SurfaceDefinition.graph(
            "quartic", r2**2, _grid.disc(0.8),
            planar=[PlanarModel((0.0, 0.0), 4, sympy.Integer(1))],
            description="flat point of degree 4: z = (s^2 + t^2)^2"),
        "sextic": SurfaceDefinition.graph(
            "sextic", r2**3, _grid.disc(0.8),
            planar=[PlanarModel((0.0, 0.0), 6, sympy.Integer(1))],
            description="flat point of degree 6: z = (s^2 + t^2)^3"),
        "perturbed-quartic": SurfaceDefinition.graph(
            "perturbed-quartic", r2**2 + eps * (S**2 - T**2) ** 2, _grid.disc(0.8),
            planar=[PlanarModel((0.0, 0.0), 4, 1 + eps * sympy.cos(2 * PHI) ** 2)],
            description="z = (s^2+t^2)^2 (1 + 0.2 cos^2 2phi), non-constant profile"),
        "plane": SurfaceDefinition.graph(
            "plane", sympy.Integer(0), _grid.disc(1.0), description="z = 0 (rejected)"),
    }


CATALOG = _catalog()


def get_surface(name: str) -> SurfaceDefinition:
    try:
        return CATALOG[name]
    except KeyError:
        raise ConfigError(f"unknown surface {name!r}; known: {sorted(CATALOG)}") from None


# ---------------------------------------------------------------------------
# evaluation


def _lambdify3(exprs):
    fs = [sympy.lambdify((S, T), e, "numpy") for e in exprs]

    def ev(s, t):
        return np.column_stack([np.broadcast_to(np.asarray(f(s, t), float), s.shape) for f in fs])

    return ev


def eval_jet(definition: SurfaceDefinition, grid: _grid.DomainGrid) -> SurfaceJet:
    R = [sympy.sympify(c) for c in definition.position]
    d = {
        "R": R,
        "R_s": [c.diff(S) for c in R],
        "R_t": [c.diff(T) for c in R],
        "R_ss": [c.diff(S, 2) for c in R],
        "R_st": [c.diff(S, T) for c in R],
        "R_tt": [c.diff(T, 2) for c in R],
    }
    s, t = grid.s, grid.t
    vals = {k: _lambdify3(v)(s, t) for k, v in d.items()}
    cross = np.cross(vals["R_s"], vals["R_t"])
    area = np.linalg.norm(cross, axis=1)
    if not np.all(np.isfinite(area)) or area.min() < 1e-10:
        raise DegenerateImmersion(f"|R_s x R_t| min = {np.nanmin(area):.3e}")
    return SurfaceJet(N=cross / area[:, None], **vals)


def fundamental_forms(jet: SurfaceJet, normalize: bool = True) -> FundamentalForms:
    """First and second fundamental forms; with ``normalize`` the normal is
    flipped globally so that ``g > 0`` wherever ``K > 0``."""
    dot = lambda a, b: np.einsum("ij,ij->i", a, b)  # noqa: E731
    E, F, G = dot(jet.R_s, jet.R_s), dot(jet.R_s, jet.R_t), dot(jet.R_t, jet.R_t)
    e, f, g = dot(jet.R_ss, jet.N), dot(jet.R_st, jet.N), dot(jet.R_tt, jet.N)
    K = (e * g - f * f) / (E * G - F * F)
    flipped = False
    if normalize:
        scale = np.abs(K).max()
        pos = K > 1e-8 * scale if scale > 0 else np.zeros_like(K, bool)
        if pos.any():
            signs = np.sign(g[pos])
            if np.all(signs < 0):
                flipped = True
            elif not np.all(signs > 0):
                raise OrientationUndecidable("g changes sign on the positively curved set")
    if flipped:
        e, f, g = -e, -f, -g
    return FundamentalForms(E, F, G, e, f, g, K, flipped)


def oriented_normal(jet: SurfaceJet, forms: FundamentalForms) -> np.ndarray:
    return -jet.N if forms.flipped else jet.N


def detect_planar_points(forms: FundamentalForms, grid: _grid.DomainGrid,
                         planar_tol: float | None = None,
                         declared=()) -> list[PlanarPoint]:
    """Isolated interior nodes where the Gaussian curvature (numerically) vanishes.

    Each connected cluster of nodes with ``K < planar_tol`` is reduced to its
    minimum; clusters touching the boundary, or with ``K <= 0`` spread over
    more than a small disc, violate the curvature hypothesis.
    """
    K = forms.K
    kmax = float(K.max())
    if kmax <= 0:
        raise CurvatureHypothesisViolated("K <= 0 everywhere")
    if planar_tol is None:
        planar_tol = 1e-6 * kmax
    low = K < planar_tol
    if np.any(low & (grid.flags == _grid.BOUNDARY)):
        raise CurvatureHypothesisViolated("K vanishes on the boundary")
    if not low.any():
        return []
    img = grid.to_image(low, fill=False).astype(bool)
    labels, nlab = _label(img)
    lab = labels[grid.ij[:, 0], grid.ij[:, 1]]
    points = []
    for c in range(1, nlab + 1):
        members = np.flatnonzero(lab == c)
        # a zero set that is not isolated shows up as a cluster with non-positive
        # curvature away from its minimum
        nonpos = members[K[members] <= 0]
        k = members[np.argmin(K[members])]
        if len(nonpos) > 1:
            spread = np.max(np.hypot(*(grid.nodes[nonpos] - grid.nodes[k]).T))
            if spread > 2.5 * grid.h:
                raise CurvatureHypothesisViolated("curvature vanishes on a non-isolated set")
        points.append(PlanarPoint((float(grid.s[k]), float(grid.t[k])), int(k), float(K[k])))
    for a in range(len(points)):
        for b in range(a + 1, len(points)):
            d = np.hypot(points[a].location[0] - points[b].location[0],
                         points[a].location[1] - points[b].location[1])
            if d < 4 * grid.h:
                raise CurvatureHypothesisViolated(
                    f"planar points closer than 4h ({d:.3g}); refine the grid")
    if declared:
        points = [_attach_model(p, declared, grid.h) for p in points]
    return points


def _label(img):
    from scipy import ndimage

    return ndimage.label(img, structure=np.ones((3, 3)))


def _attach_model(p: PlanarPoint, declared, h) -> PlanarPoint:
    for m in declared:
        if np.hypot(m.location[0] - p.location[0], m.location[1] - p.location[1]) <= 1.5 * h:
            return PlanarPoint(p.location, p.node, p.K_value, p.m_K, m)
    return p


def loglog_fit(r, values):
    """Least-squares slope of log|values| against log r; returns (slope, r2)."""
    x = np.log(np.asarray(r, float))
    y = np.log(np.abs(np.asarray(values)))
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return float(coef[0]), r2


def annulus_nodes(grid: _grid.DomainGrid, center, inner=3.0, outer=12.0):
    """Indices and radii of nodes with ``inner*h <= r <= outer*h`` around ``center``."""
    r = np.hypot(grid.s - center[0], grid.t - center[1])
    sel = (r >= inner * grid.h * (1 - 1e-9)) & (r <= outer * grid.h * (1 + 1e-9))
    return np.flatnonzero(sel), r[sel]


def vanishing_order(forms: FundamentalForms, grid: _grid.DomainGrid, p: PlanarPoint,
                    min_r2: float = 0.99, planar_tol: float | None = None) -> float:
    """Log-log slope of K on the annulus ``3h <= r <= 12h`` around ``p``."""
    if planar_tol is None:
        planar_tol = 1e-6 * float(forms.K.max())
    if not forms.K[p.node] < planar_tol:
        raise CurvatureHypothesisViolated(
            f"K = {forms.K[p.node]:.3g} at {p.location} is not a planar point")
    idx, r = annulus_nodes(grid, p.location)
    if len(idx) < 8:
        raise FitUnstable("annulus around planar point is not inside the domain")
    slope, r2 = loglog_fit(r, forms.K[idx])
    if r2 < min_r2:
        raise FitUnstable(f"log-log fit R^2 = {r2:.4f} < {min_r2}")
    return slope
