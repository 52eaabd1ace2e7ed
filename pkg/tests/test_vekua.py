import numpy as np
import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from infbend import pompeiu as P
from infbend import vekua as V
from infbend.asymptotic import field_from_coefficients
from infbend.bending import rigid_field
from infbend.first_integral import from_values
from infbend.verification import RIGID_FIELDS

from conftest import disc_grid, pipeline_stages, surface_setup


def _problem(g, a, b=0.0, singular=(), M=0, correction=True):
    corr = P.boundary_correction(g.zeta, g.weights, g.region.outline(g.h / 8)) if correction else None
    return V.VekuaProblem(
        points=g.zeta.copy(), weights=g.weights,
        a_hat=np.broadcast_to(np.asarray(a, complex), (g.n,)).copy(),
        b_hat=np.broadcast_to(np.asarray(b, complex), (g.n,)).copy(),
        singular=tuple(singular), M=M, excluded=np.zeros(g.n, bool), correction=corr)


# coefficients


def test_isotropic_node_gives_C_minus_four():
    _, g, jet, _, lf = surface_setup("paraboloid", 33)
    k = g.nearest(0, 0)
    assert np.allclose(jet.R_s[k], [1, 0, 0]) and np.allclose(jet.R_t[k], [0, 1, 0])
    assert lf.lam[k] == pytest.approx(1j) and lf.coeff_s[k] == pytest.approx(1)
    assert V.vekua_coefficients(jet, lf, g).C[k] == pytest.approx(-4, abs=1e-14)


def test_planar_node_gives_zero_coefficients():
    _, g, jet, _, lf = surface_setup("quartic", 33)
    k = g.nearest(0, 0)
    co = V.vekua_coefficients(jet, lf, g)
    assert co.C[k] == 0 and co.A[k] == 0 and co.B[k] == 0


@pytest.mark.parametrize("name", ["sphere-cap", "quartic", "perturbed-quartic", "paraboloid"])
def test_C_real_and_negative_off_planar(name):
    _, g, jet, _, lf = surface_setup(name, 33)
    co = V.vekua_coefficients(jet, lf, g)
    assert co.C.dtype == float
    assert np.all(co.C[~lf.degenerate] < 0) and np.all(co.C <= 0)
    assert np.all(np.isfinite(co.A)) and np.all(np.isfinite(co.B))


@pytest.mark.parametrize("AB", RIGID_FIELDS)
def test_rigid_fields_satisfy_the_equation_to_h2(AB):
    res = []
    for N in (65, 129):
        _, g, jet, _, lf = surface_setup("paraboloid", N)
        co = V.vekua_coefficients(jet, lf, g)
        w = np.einsum("ij,ij->i", V.lr_vectors(jet, lf), rigid_field(jet.R, *AB))
        r = np.abs(V.vekua_residual(g, lf, co, w))
        scale = max(np.abs(co.A * w).max(), 1.0)
        assert r.max() < 10 * g.h**2 * scale
        res.append(r.max())
    assert res[0] / res[1] >= 3.5


def _rescaled_mismatch(N, a_of):
    _, g, jet, _, lf = surface_setup("paraboloid", N)
    a = a_of(g)
    w = np.sin(g.s) + 1j * g.t
    base = V.vekua_residual(g, lf, V.vekua_coefficients(jet, lf, g), w)
    lf2 = lf.scaled(a)
    scaled = V.vekua_residual(g, lf2, V.vekua_coefficients(jet, lf2, g), a * w)
    return np.max(np.abs(scaled - a**6 * base)) / np.max(np.abs(a**6 * base))


@given(st.floats(0.2, 4.0))
def test_rescaling_L_by_constant_is_exact(c):
    """L -> aL maps C, A, B to a^4 C, a^5 A + a^4 (La) C, a^5 B; with w -> a w the
    residual picks up the factor a^6."""
    assert _rescaled_mismatch(17, lambda g: np.full(g.n, c)) < 1e-12


def test_rescaling_L_by_field_is_covariant_to_h2():
    a_of = lambda g: 1.3 * np.exp(0.7 * g.t)  # noqa: E731
    errs = [_rescaled_mismatch(N, a_of) for N in (33, 65)]
    assert errs[1] < 2e-3 and errs[0] / errs[1] > 3.5


# pushforward


def test_no_planar_points_means_unit_factor():
    _, an, it, sv, _ = pipeline_stages("sphere-cap", 33)
    pr = sv.problem
    assert pr.singular == () and pr.M == 0
    assert np.all(pr.H() == 1) and np.all(pr.denominator() == 1)


def test_identity_pushforward_chain_rule():
    """Z = s + it with g = 1, lambda = i: L = 2 d/dzbar, so a = A/(2C), b = B/(2C)."""
    g = disc_grid(17)
    one = np.ones(g.n)
    lf = field_from_coefficients(one, 1j * one)
    A = np.exp(1j * g.s)
    B = g.t + 0.5j
    co = V.VekuaCoefficients(A, B, -one, None, None)
    pr = V.pushforward(co, from_values(g, lf, g.zeta), lf, g, M=0)
    assert np.allclose(pr.a(), -A / 2, atol=1e-12)
    assert np.allclose(pr.b(), -B / 2, atol=1e-12)


def test_quartic_coefficients_bounded_and_stable():
    from infbend import pipeline as PL

    sup = []
    for N in (65, 129):
        cfg = PL.RunConfig(grid=N)
        an = PL.analyze(cfg)
        it = PL.integral(an, cfg)
        co = V.vekua_coefficients(an.jet, an.field, an.grid)
        pr = V.pushforward(co, it.fi, an.field, an.grid, M=5)
        sup.append(np.array([pr.sup_a, pr.sup_b]))
    assert np.all(np.isfinite(sup[1]))
    assert np.all(np.abs(sup[0] - sup[1]) / sup[1] < 0.1)


def test_H_ratio_is_unimodular():
    _, _, _, sv, _ = pipeline_stages("quartic", 65)
    pr = sv.problem
    ratio = pr.H_ratio()
    assert np.allclose(np.abs(ratio), 1, atol=1e-12)
    _, b = V.modified_operator(pr)
    live = pr.denominator() != 0
    assert np.allclose(np.abs(b[live]), np.abs(pr.b()[live]), rtol=1e-12)


# modified equation


def test_no_source_gives_seed():
    g = disc_grid(17)
    sol = V.solve_modified(_problem(g, 0.0))
    assert np.array_equal(sol.W1, np.ones(g.n))


def test_exponential_oracle_solves_the_continuous_equation():
    """W = exp(c conj z) satisfies W = 1 + T[c W] on the unit disc.

    dbar W = c W symbolically, and the boundary Cauchy integral of W equals 1
    (checked by the trapezoid rule on the circle, spectrally accurate)."""
    c, zb = sympy.symbols("c zb")
    W = sympy.exp(c * zb)
    assert sympy.simplify(W.diff(zb) - c * W) == 0
    cval = 0.7 - 0.4j
    n = 256
    zeta = np.exp(2j * np.pi * np.arange(n) / n)
    for z0 in (0, 0.3 + 0.1j, -0.5j):
        cauchy = np.mean(np.exp(cval * np.conj(zeta)) * zeta / (zeta - z0))
        assert abs(cauchy - 1) < 1e-10


def test_solver_reproduces_exponential():
    c = 0.7 - 0.4j
    errs = []
    for N in (17, 33):
        g = disc_grid(N)
        sol = V.solve_modified(_problem(g, c))
        assert sol.residual_modified < 1e-6
        errs.append(np.max(np.abs(sol.W1 - np.exp(c * np.conj(g.zeta)))))
    assert errs[1] < 2e-3 and errs[0] > errs[1]


def test_solvers_agree_on_real_linear_system():
    g = disc_grid(17)
    pr = _problem(g, 0.3 * np.exp(1j * g.s), 0.4 - 0.2j)
    dense = V.solve_modified(pr, method="dense")
    krylov = V.solve_modified(pr, method="gmres")
    picard = V.solve_modified(pr, method="fixed-point", maxiter=2000)
    assert np.allclose(dense.W1, krylov.W1, atol=1e-9)
    assert np.allclose(dense.W1, picard.W1, atol=1e-6)
    # conjugation coupling: the complex-linear relaxation gives a different answer
    assert np.max(np.abs(dense.W1 - V.solve_modified(_problem(g, 0.3 * np.exp(1j * g.s))).W1)) > 1e-2


def test_unknown_method():
    with pytest.raises(ValueError):
        V.solve_modified(_problem(disc_grid(9), 0.0), method="magic")


def test_seed_functions():
    pr = _problem(disc_grid(9), 0.0, correction=False)
    assert np.all(V.seed_function(pr, "one") == 1)
    assert np.allclose(V.seed_function(pr, "z2"), pr.points**2)
    with pytest.raises(ValueError):
        V.seed_function(pr, "q")


def test_quartic_modified_equation():
    _, _, _, sv, _ = pipeline_stages("quartic", 65)
    assert sv.solution.residual_modified < 1e-6
    assert 0.1 <= np.max(np.abs(sv.solution.W1)) <= 10


# assembly


def test_no_planar_points_assembles_identity():
    _, _, _, sv, _ = pipeline_stages("sphere-cap", 33)
    assert np.array_equal(sv.solution.W, sv.solution.W1)


def test_vanishing_order_of_H():
    g = disc_grid(129)
    k = g.nearest(0, 0)
    pr = _problem(g, 0.0, singular=(0j,), M=3, correction=False)
    pr = V.VekuaProblem(**{**pr.__dict__, "planar_nodes": (k,)})
    (slope,) = V.vanishing_slopes(pr, g, pr.H() * np.ones(g.n))
    assert slope == pytest.approx(3.0, abs=0.2)


def test_quartic_original_equation_and_vanishing():
    _, an, _, sv, _ = pipeline_stages("quartic", 65)
    assert sv.M == 5
    assert sv.solution.residual_original < 1e-5
    assert all(s >= sv.M - 0.2 for s in sv.solution.vanishing_slopes)
    assert np.all(sv.solution.W[list(sv.problem.planar_nodes)] == 0)


def test_differential_residual_improves_with_refinement():
    _, an_c, _, sv_c, _ = pipeline_stages("sphere-cap", 33)
    _, an_f, _, sv_f, _ = pipeline_stages("sphere-cap", 65)
    r0 = V.differential_residual(sv_c.problem, an_c.grid, sv_c.solution.W)
    r1 = V.differential_residual(sv_f.problem, an_f.grid, sv_f.solution.W)
    assert r1 < r0
