#!/usr/bin/env python3
"""
Tests for the potential and density catalog
"""

import os
import sys

import pytest
import sympy as sp

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from wavelab.catalog import (DENSITIES, al_basis, get_density, get_potential, hamiltonian, load_potentials,
                             resolve_density, resolve_potential, tricomi)
from wavelab.errors import ConfigError
from wavelab.expressions import U, V


def test_catalog_lists_every_model():
    names = {record['name'] for record in load_potentials()}
    for name in ('boussinesq', 'boussinesq_flipped', 'toda', 'nls_focusing', 'nls_defocusing',
                 'ablowitz_ladik', 'power', 'quadratic'):
        assert name in names


def test_unknown_potential_suggests_a_name():
    with pytest.raises(ConfigError) as err:
        get_potential('tdoa')
    assert "did you mean 'toda'" in str(err.value)


def test_potential_derivatives_match_differences():
    for name in ('boussinesq', 'toda', 'nls_defocusing', 'ablowitz_ladik', 'power'):
        assert get_potential(name).check_derivatives() < 1e-6


def test_every_catalog_density_solves_its_pde():
    for name, (_, default_potential) in DENSITIES.items():
        if default_potential is None:
            continue
        density = get_density(name)
        assert density.check(tol=1e-8) < 1e-8, name


def test_power_density_uses_kappa():
    density = get_density('power_example', params={'kappa': 4})
    assert density.potential.name == 'power'
    assert density.check() < 1e-8


def test_tricomi_polynomials_for_boussinesq():
    potential = get_potential('boussinesq')
    for N in range(1, 6):
        for j in (0, 1):
            density = tricomi(potential, N, j)
            assert density.check() < 1e-8
            assert sp.Poly(density.expr, U, V).degree(V) == N


def test_tricomi_rejects_other_top_exponents():
    with pytest.raises(ConfigError):
        tricomi(get_potential('boussinesq'), 3, 2)


def test_al_basis_first_member_is_the_hamiltonian():
    potential = get_potential('ablowitz_ladik')
    f1 = al_basis(potential, 1, 'cos')
    assert sp.simplify(f1.expr - (1 - sp.exp(-U)) * sp.cos(V)) == 0
    for n in (1, 2, 3):
        for parity in ('cos', 'sin'):
            assert al_basis(potential, n, parity).check() < 1e-8


def test_resolve_density_accepts_families_and_expressions():
    potential = get_potential('boussinesq')
    assert resolve_density('tricomi(3, 1)', potential).name == 'tricomi(3,1)'
    assert resolve_density('bous_hamiltonian', potential).name == 'bous_hamiltonian'
    assert resolve_density('u*v', potential).check() < 1e-8


def test_resolve_potential_from_expression():
    potential = resolve_potential('exp(2*u)')
    assert potential.name == 'custom'
    assert float(potential.d(2, 0.0)) == pytest.approx(4.0)


def test_wave_hamiltonian():
    potential = get_potential('toda')
    assert sp.simplify(hamiltonian(potential).expr - (V ** 2 / 2 + sp.exp(U))) == 0


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
