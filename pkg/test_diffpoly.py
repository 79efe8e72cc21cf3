#!/usr/bin/env python3
"""
Tests for differential polynomials, Euler operators and Poisson brackets
"""

import os
import sys

import numpy as np
import pytest
import sympy as sp

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from wavelab.diffpoly import (EXACT, INDETERMINATE, NOT_TOTAL, NUMERIC, JetPoly, LocalFunctional,
                              commutativity_residual, euler_op, is_total_derivative, jet_symbol,
                              poisson_bracket_density, random_jet_point)
from wavelab.expressions import U, V

UX, UXX = jet_symbol("u", 1), jet_symbol("u", 2)
VX = jet_symbol("v", 1)


def test_round_trip_through_sympy():
    expr = U ** 2 * UX * VX + sp.exp(V) * UXX ** 2 - 3
    p = JetPoly.from_sympy(expr)
    assert sp.expand(p.to_sympy() - expr) == 0
    assert p.degrees == [0, 2, 4]
    assert p.max_order() == 2
    assert p.max_order("v") == 1


def test_non_polynomial_jet_dependence_is_rejected():
    with pytest.raises(ValueError):
        JetPoly.from_sympy(sp.sqrt(UX))


def test_total_derivative_of_density():
    """d/dx (u^2 v_x) = 2 u u_x v_x + u^2 v_xx"""
    p = JetPoly.from_sympy(U ** 2 * VX)
    expected = JetPoly.from_sympy(2 * U * UX * VX + U ** 2 * jet_symbol("v", 2))
    assert p.total_x_derivative() == expected


def test_euler_operator_of_dirichlet_energy():
    p = JetPoly.from_sympy(UX ** 2 / 2)
    assert euler_op(p, "u") == JetPoly.from_sympy(-UXX)
    assert euler_op(p, "v").is_zero


def test_exact_total_derivative_is_detected_symbolically():
    q = JetPoly.from_sympy(U ** 2 * V * UX + U * VX ** 2)
    report = is_total_derivative(q.total_x_derivative())
    assert report.is_total
    assert report.status == EXACT


def test_numeric_total_derivative():
    """Li2 coefficients do not cancel symbolically but the Euler images vanish numerically"""
    q = JetPoly.from_sympy(sp.polylog(2, sp.exp(-U)) * VX)
    report = is_total_derivative(q.total_x_derivative(), seed=3)
    assert report.is_total
    assert report.status in (EXACT, NUMERIC)


def test_square_of_derivative_is_not_total():
    report = is_total_derivative(JetPoly.from_sympy(UX ** 2), tol=1e-9, seed=1)
    assert not report
    assert report.status == NOT_TOTAL


def test_tiny_residual_is_indeterminate():
    report = is_total_derivative(JetPoly.from_sympy(sp.Float(1e-10) * UX ** 2), tol=1e-9, seed=1)
    assert report.status == INDETERMINATE
    assert report.is_total is False


def test_tolerance_must_be_positive():
    with pytest.raises(ValueError):
        is_total_derivative(JetPoly.from_sympy(UX), tol=0.0)


def test_grading_violations():
    good = LocalFunctional({0: JetPoly.constant(V ** 2 / 2), 2: JetPoly.from_sympy(UX ** 2)}, 2)
    bad = LocalFunctional({2: JetPoly.from_sympy(UX * VX + UX ** 3)}, 2)
    assert good.grading_violations() == []
    assert bad.grading_violations()


def test_functional_equivalence_modulo_total_derivatives():
    h = LocalFunctional({0: JetPoly.constant(V ** 2 / 2 - U ** 3 / 6), 2: JetPoly.from_sympy(UX ** 2 / 2)}, 2)
    shifted = h.add_exact_derivative(2, JetPoly.from_sympy(U * VX))
    assert h.equivalent(shifted)
    assert not h.equivalent(h.scaled_order(2, 1.01))


def test_bracket_records_dropped_orders():
    F = LocalFunctional({0: JetPoly.constant(V ** 2 / 2 + U ** 2)}, 4)
    G = LocalFunctional({0: JetPoly.constant(U * V)}, 2)
    bracket = poisson_bracket_density(F, G)
    assert bracket.truncation_order == 2
    assert bracket.dropped_orders == (3, 4, 5, 6)


def test_conserved_densities_commute_at_leading_order():
    """f = u v^2/2 + u^4/12 solves f_uu = u f_vv, so it commutes with v^2/2 + u^3/6"""
    H = LocalFunctional.from_density(V ** 2 / 2 + U ** 3 / 6)
    F = LocalFunctional.from_density(U * V ** 2 / 2 + U ** 4 / 12)
    residuals = commutativity_residual(F, H, 0, seed=2)
    assert residuals[0].worst < 1e-10


def test_non_commuting_pair_is_detected():
    H = LocalFunctional.from_density(V ** 2 / 2 + U ** 3 / 6)
    F = LocalFunctional.from_density(U ** 2 * V)
    residuals = commutativity_residual(F, H, 0, seed=2)
    assert residuals[0].worst > 1e-4


def test_functional_commutes_with_itself():
    F = LocalFunctional({0: JetPoly.constant(sp.exp(U) * sp.cos(V)), 2: JetPoly.from_sympy(U * UX * VX)}, 2)
    for residual in commutativity_residual(F, F, 2, seed=5):
        assert residual.worst < 1e-10


def test_scalar_bracket():
    """Scalar transport: int u^3/6 and int u^4 commute"""
    F = LocalFunctional.from_density(U ** 3 / 6, fields=("u",))
    G = LocalFunctional.from_density(U ** 4, fields=("u",))
    assert commutativity_residual(F, G, 0, seed=0)[0].residual_u < 1e-10


def test_residual_is_the_pointwise_euler_image():
    H = LocalFunctional.from_density(V ** 2 / 2 + U ** 3 / 6)
    F = LocalFunctional.from_density(U ** 2 * V)
    residual = commutativity_residual(F, H, 0, seed=2, samples=3)[0]

    bracket = poisson_bracket_density(F, H)[0]
    images = [euler_op(bracket, name) for name in ("u", "v")]
    # fewer than 20 requested samples still draws 20 jet points
    point = random_jet_point(np.random.default_rng(2), max(image.max_order() for image in images), 20)
    assert residual.residual_u == pytest.approx(np.max(np.abs(images[0].evaluate(point))), rel=1e-12)
    assert residual.residual_v == pytest.approx(np.max(np.abs(images[1].evaluate(point))), rel=1e-12)
    assert residual.residual_u > 1e-3
    assert residual.weak > 1e-4


def test_weak_form_is_kept_as_a_cross_check():
    H = LocalFunctional.from_density(V ** 2 / 2 + U ** 3 / 6)
    F = LocalFunctional.from_density(U * V ** 2 / 2 + U ** 4 / 12)
    residual = commutativity_residual(F, H, 0, seed=2)[0]
    assert residual.weak < 1e-10
    assert residual.worst < 1e-10


def random_density(rng: np.random.Generator) -> sp.Expr:
    """A few jet monomials with polynomial or exponential coefficients in (u, v)"""
    monomials = [sp.Integer(1), UX, VX, UXX, UX * VX, UX ** 2, jet_symbol("v", 2) * UX]
    expr = sp.Integer(0)
    for index in rng.choice(len(monomials), size=3, replace=False):
        i, j = (int(n) for n in rng.integers(0, 3, size=2))
        a, b = (int(n) for n in rng.integers(-3, 4, size=2))
        coeff = a * U ** i * V ** j + b * sp.exp(U / 2) * V ** (2 - j)
        expr += coeff * monomials[index]
    return expr


def test_x_derivatives_of_random_densities_are_total():
    rng = np.random.default_rng(2024)
    statuses = []
    for _ in range(50):
        q = JetPoly.from_sympy(random_density(rng))
        report = is_total_derivative(q.total_x_derivative(), seed=1)
        assert report.is_total
        statuses.append(report.status)
    assert set(statuses) <= {EXACT, NUMERIC}


def test_bracket_is_antisymmetric_up_to_total_derivatives():
    F = LocalFunctional({0: JetPoly.constant(U ** 2 * V + sp.exp(V)), 1: JetPoly.from_sympy(U * VX),
                         2: JetPoly.from_sympy(V * UX ** 2)}, 2)
    G = LocalFunctional({0: JetPoly.constant(V ** 3 / 3 + U * V), 2: JetPoly.from_sympy(sp.exp(U) * UX * VX)}, 2)
    forward, backward = poisson_bracket_density(F, G), poisson_bracket_density(G, F)
    for k in range(3):
        report = is_total_derivative(forward[k] + backward[k], seed=k)
        assert report.is_total
        assert report.status in (EXACT, NUMERIC)


def trig_jet(x, center, coeffs, order):
    """order-th derivative of center + sum_k a_k cos(k x) + b_k sin(k x)"""
    out = np.full(x.shape, center if order == 0 else 0.0)
    for k, (a, b) in enumerate(coeffs, start=1):
        phase = order * np.pi / 2
        out = out + k ** order * (a * np.cos(k * x + phase) + b * np.sin(k * x + phase))
    return out


def test_euler_operator_matches_a_finite_difference_of_the_functional():
    density = JetPoly.from_sympy(U ** 3 * UX ** 2 + sp.sin(U) * UXX ** 2 + V * UX)
    image = euler_op(density, "u")
    x = 2 * np.pi * np.arange(256) / 256
    dx = x[1] - x[0]
    u_coeffs = [(0.2, -0.1), (0.05, 0.08)]
    direction = [(0.0, 0.0), (0.0, 0.0), (1.0, 0.5)]

    def jets(eta):
        point = {("v", 0): np.full(x.shape, 0.3), **{("v", order): np.zeros(x.shape) for order in range(1, 5)}}
        for order in range(image.max_order() + 1):
            point[("u", order)] = trig_jet(x, 1.0, u_coeffs, order) + eta * trig_jet(x, 0.0, direction, order)
        return point

    def functional(eta):
        return float(np.sum(density.evaluate(jets(eta))) * dx)

    eta = 1e-5
    numeric = (functional(eta) - functional(-eta)) / (2 * eta)
    exact = float(np.sum(image.evaluate(jets(0.0)) * trig_jet(x, 0.0, direction, 0)) * dx)
    assert numeric == pytest.approx(exact, rel=1e-6)


def test_evaluate_on_arrays():
    p = JetPoly.from_sympy(U * UX ** 2 + V)
    point = random_jet_point(np.random.default_rng(0), 1, 7)
    expected = point[("u", 0)] * point[("u", 1)] ** 2 + point[("v", 0)]
    np.testing.assert_allclose(p.evaluate(point), expected, rtol=1e-14)


def test_reflect_u():
    p = JetPoly.from_sympy(U * UX * VX + U ** 2 * UX ** 2)
    assert p.reflect_u() == JetPoly.from_sympy(U * UX * VX + U ** 2 * UX ** 2)
    q = JetPoly.from_sympy(U * VX ** 2)
    assert q.reflect_u() == JetPoly.from_sympy(-U * VX ** 2)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
