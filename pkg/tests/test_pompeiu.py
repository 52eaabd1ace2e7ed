import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from infbend import grid as G
from infbend import pompeiu as P

from conftest import disc_grid


def _bump(g, radius=0.6):
    rr = (g.s**2 + g.t**2) / radius**2
    f = np.zeros(g.n, dtype=complex)
    inside = rr < 1
    f[inside] = np.exp(-1 / (1 - rr[inside])) * np.exp(1j * g.s[inside])
    return f


def _correction(g):
    return P.boundary_correction(g.zeta, g.weights, g.region.outline(g.h / 8))


def test_zero_density():
    g = disc_grid(33)
    assert np.all(P.pompeiu_transform(g.zeta, g.weights, np.zeros(g.n)) == 0)


def test_constant_density_on_unit_disc():
    g = disc_grid(129)
    T1 = P.pompeiu_transform(g.zeta, g.weights, np.ones(g.n))
    deep = np.abs(g.zeta) <= 1 - 2 * g.h
    assert np.max(np.abs(T1 - np.conj(g.zeta))[deep]) < 5e-3


def test_constant_density_vanishes_at_centre():
    g = disc_grid(65)  # odd N puts a node at the origin
    k = g.nearest(0, 0)
    assert g.zeta[k] == 0
    T1 = P.pompeiu_transform(g.zeta, g.weights, np.ones(g.n))
    assert abs(T1[k]) < 1e-12


def test_dbar_of_transform_converges():
    errs = []
    for N in (65, 129):
        g = disc_grid(N)
        f = _bump(g)
        errs.append(np.max(np.abs(P.dbar(g, P.pompeiu_transform(g.zeta, g.weights, f)) - f)))
    assert errs[1] < 5e-3
    assert errs[0] / errs[1] >= 1.8


def test_matrix_matches_transform():
    g = disc_grid(17)
    f = np.cos(g.s) + 1j * g.t**2
    K = P.pompeiu_matrix(g.zeta, g.weights)
    assert np.allclose(K @ f, P.pompeiu_transform(g.zeta, g.weights, f), atol=1e-13)
    assert np.all(np.diag(K) == 0)


def test_explicit_targets():
    g = disc_grid(33)
    tg = np.array([2.0 + 0j, -1.5j])  # outside: T[1](z) = 1/z
    out = P.pompeiu_transform(g.zeta, g.weights, np.ones(g.n), targets=tg)
    assert np.allclose(out, 1 / tg, rtol=2e-3)
    with pytest.raises(ValueError):
        P.pompeiu_transform(g.zeta, g.weights, np.ones(g.n), targets=tg,
                            correction=np.zeros(g.n))


# exact polygon integral and the boundary correction


def test_polygon_integral_against_disc_closed_form():
    """A fine inscribed polygon approximates iint_D dA/(zeta - z) = -pi conj(z)."""
    n = 4096
    verts = np.exp(2j * np.pi * np.arange(n) / n)
    z = np.array([0, 0.3 + 0.2j, -0.7j, 0.9])
    got = P.polygon_area_cauchy(verts, z)
    assert np.allclose(got, -np.pi * np.conj(z), atol=1e-5)


def test_polygon_integral_against_midpoint_sum_outside():
    verts = np.array([0, 1, 1 + 1j, 1j])
    z = np.array([3 + 2j, -2 - 1j])
    m = 2000
    x = (np.arange(m) + 0.5) / m
    zeta = (x[:, None] + 1j * x[None, :]).ravel()
    ref = np.array([np.sum(1 / (zeta - zz)) / m**2 for zz in z])
    assert np.allclose(P.polygon_area_cauchy(verts, z), ref, atol=1e-7)


def test_polygon_integral_orientation_and_input_forms():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    z = np.array([0.3 + 0.4j])
    a = P.polygon_area_cauchy(sq, z)
    b = P.polygon_area_cauchy(sq[::-1, 0] + 1j * sq[::-1, 1], z)
    assert np.allclose(a, b, atol=1e-14)


def test_corrected_transform_is_exact_on_constants():
    g = disc_grid(65)
    corr = _correction(g)
    T1 = P.pompeiu_transform(g.zeta, g.weights, np.ones(g.n), correction=corr)
    exact = -P.polygon_area_cauchy(g.region.outline(g.h / 8), g.zeta) / np.pi
    assert np.allclose(T1, exact, atol=1e-13)
    # and the outline polygon is close to the disc itself
    assert np.max(np.abs(T1 - np.conj(g.zeta))) < 1e-4


def test_correction_fixes_boundary_values():
    """f = z + conj(z)^2 on the unit disc: T[f] = |z|^2 - 1 + conj(z)^3 / 3."""
    g = disc_grid(129)
    z = g.zeta
    f = z + np.conj(z) ** 2
    exact = np.abs(z) ** 2 - 1 + np.conj(z) ** 3 / 3
    plain = np.max(np.abs(P.pompeiu_transform(z, g.weights, f) - exact))
    fixed = np.max(np.abs(P.pompeiu_transform(z, g.weights, f, correction=_correction(g)) - exact))
    assert fixed < 5e-4
    assert plain / fixed > 10


@given(st.complex_numbers(max_magnitude=3), st.complex_numbers(max_magnitude=3))
def test_transform_linear(a, b):
    g = disc_grid(17)
    f1, f2 = np.exp(g.zeta), np.conj(g.zeta) * g.s
    lhs = P.pompeiu_transform(g.zeta, g.weights, a * f1 + b * f2)
    rhs = a * P.pompeiu_transform(g.zeta, g.weights, f1) + b * P.pompeiu_transform(
        g.zeta, g.weights, f2)
    assert np.allclose(lhs, rhs, atol=1e-12 * (1 + abs(a) + abs(b)))


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_translation_covariance(dx, dy):
    """Shifting the domain shifts T[1] = conj(z) by the conjugate offset."""
    g = disc_grid(17)
    shift = dx + 1j * dy
    base = P.pompeiu_transform(g.zeta, g.weights, np.ones(g.n))
    moved = P.pompeiu_transform(g.zeta + shift, g.weights, np.ones(g.n))
    assert np.allclose(moved, base, atol=1e-11)
    disc2 = G.build_domain(G.disc(1.0, (dx, dy)), 17)
    T = P.pompeiu_transform(disc2.zeta, disc2.weights, np.ones(disc2.n),
                            correction=_correction(disc2))
    assert np.max(np.abs(T - np.conj(disc2.zeta - shift))) < 3e-3
