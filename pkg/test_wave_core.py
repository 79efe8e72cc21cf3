#!/usr/bin/env python3
"""
Tests for the dispersionless wave system: Riemann invariants, densities,
hodograph solutions and gradient catastrophes
"""

import math
import os
import pickle
import sys

import numpy as np
import pytest
import sympy as sp

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from wavelab import wave_core
from wavelab.catalog import get_density, get_potential
from wavelab.errors import CatastropheError, ConvergenceError, DensityError, DomainError
from wavelab.expressions import U, V
from wavelab.wave_core import (ELLIPTIC, HYPERBOLIC, TYPE_II_UMBILIC, W3_FIRST, ConservedDensity, HodographMap,
                               Potential, _fold_dip, _point, characteristic_residual, classify_point, classify_singularity,
                               construct_critical_density, flow_residual, hodograph_residual, hodograph_solve,
                               invert_riemann, local_shape_fit, locate_catastrophe, riemann_invariants,
                               solve_conserved_density)


@pytest.fixture(scope="module")
def quadratic_pair():
    """P = u^2/2 with f = (u^3 + 3 u v^2)/6 and h = (u^2 + v^2)/2: x = (u^2 + v^2)/2, s = u v"""
    potential = get_potential('quadratic')
    f = ConservedDensity(potential, (U ** 3 + 3 * U * V ** 2) / 6, name="cubic")
    h = ConservedDensity(potential, (U ** 2 + V ** 2) / 2, name="h")
    return f, h


@pytest.fixture(scope="module")
def type_one_instance():
    potential = get_potential('boussinesq_flipped')
    h = get_density('bous_flipped_hamiltonian')
    box = {"u": (0.9, 1.1), "v": (-0.1, 0.1)}
    f = construct_critical_density(potential, h, u_c=1.0, v_c=0.0, x_c=0.0, s_c=1.0, kind="I", search_box=box)
    return f, h, box


def test_classify_point():
    assert classify_point(get_potential('toda'), -3.0) == HYPERBOLIC
    assert classify_point(get_potential('toda'), 4.0) == HYPERBOLIC
    assert classify_point(get_potential('boussinesq'), -0.5) == HYPERBOLIC
    assert classify_point(get_potential('nls_focusing'), 0.7) == ELLIPTIC
    with pytest.raises(DomainError):
        classify_point(get_potential('nls_focusing'), -1.0)


def test_riemann_invariants_closed_forms():
    r_plus, r_minus = riemann_invariants(get_potential('boussinesq_flipped'), 1.3, 0.2)
    assert r_plus == pytest.approx(0.2 + 2 / 3 * 1.3 ** 1.5, rel=1e-14)
    assert r_minus == pytest.approx(0.2 - 2 / 3 * 1.3 ** 1.5, rel=1e-14)

    r_plus, _ = riemann_invariants(get_potential('toda'), 0.4, -0.1)
    assert r_plus == pytest.approx(-0.1 + 2 * math.exp(0.2), rel=1e-14)

    r_plus, r_minus = riemann_invariants(get_potential('ablowitz_ladik'), 0.8, 0.3)
    q = 2 * math.atan(math.sqrt(math.exp(0.8) - 1))
    assert r_plus == pytest.approx(0.3 + q, rel=1e-14)
    assert r_minus == pytest.approx(0.3 - q, rel=1e-14)


def test_riemann_invariants_elliptic_pair_is_conjugate():
    r_plus, r_minus = riemann_invariants(get_potential('nls_focusing'), 0.9, 0.1)
    assert r_minus == pytest.approx(np.conj(r_plus))
    assert np.imag(r_plus) == pytest.approx(2 * math.sqrt(0.9))


def test_riemann_invariants_degenerate_at_boundary():
    with pytest.raises(DomainError) as err:
        riemann_invariants(get_potential('boussinesq'), 0.0, 0.1)
    assert err.value.code == "BOUNDARY"


def test_riemann_round_trip():
    for name, u, v in (('toda', 0.3, 0.2), ('boussinesq_flipped', 1.2, -0.4), ('ablowitz_ladik', 1.1, 0.5)):
        potential = get_potential(name)
        r_plus, r_minus = riemann_invariants(potential, u, v)
        back = invert_riemann(potential, r_plus, r_minus)
        assert back[0] == pytest.approx(u, abs=1e-10)
        assert back[1] == pytest.approx(v, abs=1e-10)


def test_quadrature_invariant_for_user_potential():
    potential = Potential("cosh", sp.cosh(U), u_ref=0.0, box={"u": (-0.5, 0.5), "v": (-1.0, 1.0)})
    r_plus, r_minus = riemann_invariants(potential, 0.0, 0.25)
    assert float(r_plus) == pytest.approx(0.25)
    assert float(r_minus) == pytest.approx(0.25)


def test_constant_density_from_recursion():
    density = solve_conserved_density(get_potential('toda'), (0.0, 1.0), 1)
    assert density(0.2, 0.7) == pytest.approx(1.0, abs=1e-12)


def test_power_example_from_recursion():
    """f = u v^2/2 + u^(kappa+1)/(kappa(kappa+1)) for P = u^kappa/(kappa(kappa-1)), kappa = 3"""
    potential = get_potential('power')
    density = solve_conserved_density(potential, (lambda u: 0.5 * u, 0.0), 2)
    for u, v in ((0.6, 0.3), (1.0, -0.8), (1.4, 0.5)):
        assert density(u, v) == pytest.approx(0.5 * u * v ** 2 + u ** 4 / 12, abs=1e-10)
    assert density.check(seed=11) < 1e-8


def test_nls_density_from_recursion():
    potential = get_potential('nls_defocusing')
    density = solve_conserved_density(potential, (lambda u: -0.5 * u, 0.0), 2, anchor=1.0)
    # recursion gives f_0'' = 2 (1/u)(-u/2) = -1, zero data at u = 1
    for u, v in ((0.7, 0.2), (1.3, -0.5)):
        assert density(u, v) == pytest.approx(-0.5 * u * v ** 2 - 0.5 * (u - 1) ** 2, abs=1e-10)
    assert density.check(seed=3) < 1e-8


def test_affine_hodograph_solution():
    potential = get_potential('quadratic')
    f = ConservedDensity(potential, (U ** 2 + V ** 2) / 2)
    h = ConservedDensity(potential, V)
    u, v = hodograph_solve(f, h, 0.3, 0.5, (0.0, 0.1))
    assert u == pytest.approx(0.3, abs=1e-12)
    assert v == pytest.approx(0.0, abs=1e-12)


def test_hodograph_solution_residual_and_flow(quadratic_pair):
    f, h = quadratic_pair
    u, v = hodograph_solve(f, h, 1.0, 0.3, (1.4, 0.2))
    assert hodograph_residual(f, h, 1.0, 0.3, u, v) < 1e-12
    assert 0.5 * (u * u + v * v) == pytest.approx(1.0, abs=1e-12)
    assert u * v == pytest.approx(0.3, abs=1e-12)
    assert flow_residual(f, h, 1.0, 0.3, (u, v)) < 1e-5
    assert characteristic_residual(f, h, 1.0, 0.3, (u, v)) < 1e-5


def test_singular_jacobian_is_reported(quadratic_pair):
    f, h = quadratic_pair
    # phi Hessian determinant is u^2 - v^2, zero on the diagonal
    with pytest.raises(ConvergenceError) as err:
        hodograph_solve(f, h, 0.1, 0.1, (0.5, 0.5))
    assert err.value.code == "SINGULAR_JACOBIAN"


def test_no_catastrophe_in_box(quadratic_pair):
    f, h = quadratic_pair
    with pytest.raises(CatastropheError) as err:
        locate_catastrophe(f, h, {"u": (0.5, 1.5), "v": (0.1, 0.5)}, grid=41)
    assert err.value.code == "NOT_FOUND"


def test_constructed_type_one_point_is_recovered(type_one_instance):
    f, h, box = type_one_instance
    cp = locate_catastrophe(f, h, box)
    assert cp.type == "I"
    assert cp.u_c == pytest.approx(1.0, abs=1e-6)
    assert cp.v_c == pytest.approx(0.0, abs=1e-6)
    assert cp.x_c == pytest.approx(0.0, abs=1e-6)
    assert cp.t_c == pytest.approx(1.0, abs=1e-6)
    b = cp.bundle
    assert abs(b["f_uv0"] ** 2 - b["P0_2"] * b["f_vv0"] ** 2) < 1e-8
    assert classify_singularity(cp, f, h) == W3_FIRST
    assert cp.constants["A0"] != 0 and cp.constants["B0"] != 0


def test_no_fold_point_in_the_box_comes_before_the_constructed_one(type_one_instance):
    f, h, box = type_one_instance
    hmap = HodographMap(f, h)
    # every fold crossing of a fine grid sits at s >= s_c up to interpolation error
    assert _fold_dip(hmap, box, 0.0, grid=121) >= 1.0 - 1e-3
    cp = locate_catastrophe(f, h, box, max_starts=40)
    assert cp.t_c == pytest.approx(1.0, abs=1e-6)
    assert cp.u_c == pytest.approx(1.0, abs=1e-6)


def test_search_finds_the_minimum_with_a_small_start_budget():
    potential = get_potential('boussinesq_flipped')
    h = get_density('bous_flipped_hamiltonian')
    box = {"u": (0.9, 1.1), "v": (-0.1, 0.1)}
    f = construct_critical_density(potential, h, u_c=1.0, v_c=0.0, x_c=0.0, s_c=1.0, kind="I", search_box=box)
    # starts are taken in order of s, so the lowest crossing is polished first
    cp = locate_catastrophe(f, h, box, max_starts=3)
    assert cp.t_c == pytest.approx(1.0, abs=1e-6)


def test_construction_with_a_box_rejects_an_earlier_fold_dip(monkeypatch):
    potential = get_potential('boussinesq_flipped')
    h = get_density('bous_flipped_hamiltonian')
    box = {"u": (0.9, 1.1), "v": (-0.1, 0.1)}
    monkeypatch.setattr(wave_core, "_fold_dip", lambda hmap, box, s_min, grid=61: 0.5)
    with pytest.raises(DensityError) as err:
        construct_critical_density(potential, h, u_c=1.0, v_c=0.0, x_c=0.0, s_c=1.0, kind="I", search_box=box)
    assert err.value.code == "SEED"
    assert "first catastrophe" in str(err.value)


def test_catastrophe_moves_with_shift_absorption(type_one_instance):
    f, h, box = type_one_instance
    cp = locate_catastrophe(f, h, box)
    moved = locate_catastrophe(f.shifted(0.2, 0.3, h), h, box)
    assert moved.x_c == pytest.approx(cp.x_c + 0.2, abs=1e-8)
    assert moved.t_c == pytest.approx(cp.t_c + 0.3, abs=1e-8)
    assert moved.u_c == pytest.approx(cp.u_c, abs=1e-8)


def test_cube_root_shape_at_w3_point(type_one_instance):
    f, h, box = type_one_instance
    cp = locate_catastrophe(f, h, box)
    fit = local_shape_fit(cp, f, h)
    assert fit.exponent == pytest.approx(1 / 3, abs=0.02)


def test_linear_shape_at_smooth_point(quadratic_pair):
    f, h = quadratic_pair
    cp = _point(HodographMap(f, h), 1.2, 0.4)
    fit = local_shape_fit(cp, f, h)
    assert fit.exponent == pytest.approx(1.0, abs=0.02)


@pytest.fixture(scope="module")
def type_two_instance():
    potential = get_potential('nls_focusing')
    h = get_density('nls_hamiltonian')
    f = construct_critical_density(potential, h, u_c=1.0, v_c=0.0, x_c=0.0, s_c=1.0, kind="II")
    return f, h


def test_type_two_umbilic(type_two_instance):
    f, h = type_two_instance
    cp = locate_catastrophe(f, h, {"u": (0.9, 1.1), "v": (-0.1, 0.1)})
    assert cp.type == "II"
    assert cp.u_c == pytest.approx(1.0, abs=1e-6)
    assert cp.t_c == pytest.approx(1.0, abs=1e-6)
    assert classify_singularity(cp, f, h) == TYPE_II_UMBILIC
    assert cp.constants["a0"] == pytest.approx(1.0 + 0.5j, abs=1e-6)
    fit = local_shape_fit(cp, f, h)
    assert fit.exponent == pytest.approx(0.5, abs=0.02)


def test_critical_point_serializes_complex_constants(type_two_instance):
    f, h = type_two_instance
    cp =locate_catastrophe(f, h, {"u": (0.9, 1.1), "v": (-0.1, 0.1)})
    classify_singularity(cp, f, h)
    payload = cp.to_json()
    assert set(payload["constants"]["a0"]) == {"re", "im"}
    assert "f_vv0" in payload["bundle"]


def test_density_pickles_after_evaluation(quadratic_pair):
    f, _ = quadratic_pair
    value = f.partial(1, 1)(0.7, 0.3)
    clone = pickle.loads(pickle.dumps(f))
    assert clone.partial(1, 1)(0.7, 0.3) == pytest.approx(value, rel=1e-15)
    assert clone.name == f.name


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
