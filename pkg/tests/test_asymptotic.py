import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from infbend import surface as S
from infbend.asymptotic import (
    apply_L,
    asymptotic_direction,
    build_field,
    ellipticity_report,
    field_from_coefficients,
)
from infbend.errors import NegativeDiscriminant

from conftest import disc_grid, surface_setup


def test_paraboloid_origin_direction_is_i():
    _, g, _, forms, _ = surface_setup("paraboloid", 33)
    k = g.nearest(0, 0)
    assert asymptotic_direction(forms)[k] == pytest.approx(1j, abs=1e-15)


def test_quartic_origin_direction_vanishes():
    _, g, _, forms, lf = surface_setup("quartic", 33)
    k = g.nearest(0, 0)
    assert asymptotic_direction(forms)[k] == 0
    assert lf.degenerate[k] and lf.beltrami[k] == -1


@pytest.mark.parametrize("name", [n for n in S.CATALOG if n != "plane"])
def test_quadratic_identity(name):
    forms = surface_setup(name, 33)[3]
    lam = asymptotic_direction(forms)
    assert np.max(np.abs(lam**2 + 2 * forms.f * lam + forms.e * forms.g)) < 1e-10


def test_root_branch_and_planar_zero():
    _, g, _, forms, lf = surface_setup("quartic", 65)
    pos = forms.K > 0
    assert np.all(lf.lam.imag[pos] > 0)
    assert np.all(lf.lam.imag >= 0)


def test_negative_discriminant_rejected():
    class Forms:
        e = np.array([1.0, 1.0])
        f = np.array([0.0, 2.0])
        g = np.array([1.0, 1.0])

    with pytest.raises(NegativeDiscriminant):
        asymptotic_direction(Forms)


def test_unit_beltrami_zero_for_isotropic_node():
    lf = field_from_coefficients([1.0], [1j])
    assert lf.beltrami[0] == pytest.approx(0, abs=1e-15)


def test_sphere_cap_beltrami_bound_against_closed_form():
    _, _, _, forms, lf = surface_setup("sphere-cap", 65)
    root = np.sqrt(forms.e * forms.g - forms.f**2)
    oracle = np.sqrt(((forms.g - root) ** 2 + forms.f**2) / ((forms.g + root) ** 2 + forms.f**2))
    assert np.allclose(np.abs(lf.beltrami), oracle, atol=1e-13)
    delta = 1 - np.abs(lf.beltrami).max()
    assert delta > 0.1
    assert ellipticity_report(lf)["max_abs_beltrami"] == pytest.approx(1 - delta)


def test_beltrami_stays_bounded_near_planar_point():
    """Near a homogeneous planar point e, f, g all scale like r^2, so mu_B depends on
    the angle only and keeps a uniform distance from the unit circle."""
    _, g, _, _, lf = surface_setup("perturbed-quartic", 129)
    r = np.hypot(g.s, g.t)
    ok = ~lf.degenerate
    mu = np.abs(lf.beltrami)
    assert mu[ok].max() < 0.5
    inner = ok & (r < 4 * g.h)
    ring = ok & (r > 6 * g.h) & (r < 10 * g.h)
    assert abs(mu[inner].max() - mu[ring].max()) < 0.02


@pytest.mark.parametrize("name", ["sphere-cap", "quartic", "perturbed-quartic", "sextic"])
def test_three_ellipticity_tests_agree(name):
    rep = ellipticity_report(surface_setup(name, 33)[4])
    assert rep["tests_agree"] and rep["elliptic_everywhere_off_degenerate"]


def test_apply_L_examples():
    g = disc_grid(33)
    one = np.ones(g.n)
    lf = field_from_coefficients(one, 1j * one)
    assert np.max(np.abs(apply_L(g, lf, np.full(g.n, 2 + 3j)))) < 1e-12
    assert np.max(np.abs(apply_L(g, lf, g.s + 1j * g.t))) < 1e-12
    lf2 = field_from_coefficients(one, 2j * one)
    assert np.max(np.abs(apply_L(g, lf2, 2 * g.s + 1j * g.t))) < 1e-12


@given(st.complex_numbers(max_magnitude=10), st.complex_numbers(max_magnitude=10))
def test_apply_L_linear(a, b):
    _, g, _, _, lf = surface_setup("quartic", 17)
    f1, f2 = np.exp(g.s) + 1j * g.t**2, np.sin(g.s * g.t)
    lhs = apply_L(g, lf, a * f1 + b * f2)
    rhs = a * apply_L(g, lf, f1) + b * apply_L(g, lf, f2)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (1 + abs(a) + abs(b)) * 100


@given(st.floats(0.1, 5.0), st.floats(-2, 2))
def test_positive_rescaling_keeps_solutions(c, tilt):
    """a L f = a (L f): zero sets of L f are unchanged by a positive rescale."""
    _, g, _, _, lf = surface_setup("sphere-cap", 17)
    a = c * np.exp(tilt * g.s)
    f = g.s**2 - 1j * g.t
    assert np.allclose(apply_L(g, lf.scaled(a), f), a * apply_L(g, lf, f), atol=1e-12)
