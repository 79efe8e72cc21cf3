#!/usr/bin/env python3
"""
Tests for multicomponent diagonal systems and their generalized hodograph solutions
"""

import os
import sys

import numpy as np
import pytest
from scipy import optimize

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from wavelab.catalog import get_potential
from wavelab.errors import ClassificationError, ConvergenceError, SemihamError
from wavelab.expressions import U, V
from wavelab.semiham import (DiagonalSystem, catastrophe_data, catastrophe_identities, check_semihamiltonian,
                             generalized_hodograph_solve, hodograph_defect, multicomponent_normal_form_check,
                             partial, symmetry_residual, transport_residual, wave_hodograph_in_invariants)
from wavelab.wave_core import ConservedDensity, hodograph_solve

S = "(u1 + u2 + u3)"
SQUARES = "(u1^2 + u2^2 + u3^2)"
CUBES = "(u1^3 + u2^3 + u3^3)"
# a_i = S + u_i is semihamiltonian; its speeds stay apart on this box
COUPLED_SPEEDS = [f"{S} + u{i}" for i in (1, 2, 3)]
SEPARATED_BOX = [(0.0, 0.2), (1.0, 1.2), (2.0, 2.2)]


def quadratic_symmetry(i):
    return f"({S}^2 + {SQUARES})/2 + u{i}*{S} + u{i}^2"


def cubic_symmetry(i):
    return f"{S}^3/6 + {S}*{SQUARES}/2 + {CUBES}/3 + u{i}*({S}^2 + {SQUARES})/2 + u{i}^2*{S} + u{i}^3"


@pytest.fixture(scope="module")
def normal_form_system():
    """Decoupled instance breaking in the third component at u0 = 0"""
    return DiagonalSystem.from_expressions(
        ["1 + u1 + u1^2/2", "2 + u2 + u2^2/2", "3 + u3 + u3^2/2"],
        ["4*u1 + u1^2/2", "4*u2 + u2^2/2", "u3^3 + u3^4/4"],
        box=[(-0.1, 0.1)] * 3,
    )


def test_partial_of_polynomial():
    fn = lambda w: w[0] ** 3 * w[1] + w[1] ** 2
    u = np.array([0.7, -0.4])
    assert partial(fn, u, (0,)) == pytest.approx(3 * 0.49 * -0.4, abs=1e-10)
    assert partial(fn, u, (0, 1)) == pytest.approx(3 * 0.49, abs=1e-8)
    assert partial(fn, u, (0, 0, 0)) == pytest.approx(-2.4, abs=1e-6)


def test_two_components_are_trivially_semihamiltonian():
    system = DiagonalSystem.from_expressions(["u1*u2", "u1 - u2"])
    assert check_semihamiltonian(system) == 0.0


def test_decoupled_system_is_semihamiltonian():
    system = DiagonalSystem.from_expressions(["u1", "3 + u2^2", "6 + exp(u3)"])
    assert check_semihamiltonian(system, seed=1) < 1e-6


def test_coupled_semihamiltonian_system():
    system = DiagonalSystem.from_expressions(COUPLED_SPEEDS, box=SEPARATED_BOX)
    assert check_semihamiltonian(system, seed=2) < 1e-6


def test_cyclic_coupling_is_not_semihamiltonian():
    system = DiagonalSystem.from_expressions(["u2", "u3", "u1"])
    assert check_semihamiltonian(system, seed=3) > 0.01


def test_coincident_speeds_are_reported():
    system = DiagonalSystem.from_expressions(["u1", "u1", "u3"])
    with pytest.raises(SemihamError) as err:
        check_semihamiltonian(system)
    assert err.value.code == "COINCIDENT_SPEEDS"


def test_system_is_its_own_symmetry():
    system = DiagonalSystem.from_expressions(COUPLED_SPEEDS, COUPLED_SPEEDS, box=SEPARATED_BOX)
    assert symmetry_residual(system) < 1e-6


def test_polynomial_symmetries_of_coupled_system():
    for build in (quadratic_symmetry, cubic_symmetry):
        system = DiagonalSystem.from_expressions(COUPLED_SPEEDS, [build(i) for i in (1, 2, 3)], box=SEPARATED_BOX)
        assert symmetry_residual(system, seed=4) < 1e-6


def test_decoupled_symmetries():
    system = DiagonalSystem.from_expressions(["u1", "3 + u2", "6 + u3"], ["sin(u1)", "u2^3", "exp(u3)"])
    assert symmetry_residual(system) < 1e-8


def test_arbitrary_velocities_are_not_a_symmetry():
    system = DiagonalSystem.from_expressions(COUPLED_SPEEDS, [f"u1*u2*u3 + u{i}^2" for i in (1, 2, 3)],
                                             box=SEPARATED_BOX)
    assert symmetry_residual(system) > 0.01


def test_symmetries_are_required():
    with pytest.raises(SemihamError):
        symmetry_residual(DiagonalSystem.from_expressions(COUPLED_SPEEDS))


def test_generalized_hodograph_matches_scalar_roots():
    system = DiagonalSystem.from_expressions(["u1", "1 + u2", "2 + u3"], ["u1^3", "u2^3", "u3^3"])
    x, t = 0.5, 0.2
    u = generalized_hodograph_solve(system, x, t, [0.0, 0.0, 0.0])
    for i, c in enumerate((0.0, 1.0, 2.0)):
        root = optimize.brentq(lambda w: (c + w) * t + w ** 3 - x, -2.0, 2.0, xtol=1e-15)
        assert u[i] == pytest.approx(root, abs=1e-11)
    assert np.max(np.abs(hodograph_defect(system, x, t, u))) < 1e-12
    assert transport_residual(system, x, t, u) < 1e-5


def test_transport_residual_shrinks_quadratically_with_the_step():
    system = DiagonalSystem.from_expressions(["u1", "1 + u2", "2 + u3"], ["u1^3", "u2^3", "u3^3"])
    x, t = 0.5, 0.2
    u = generalized_hodograph_solve(system, x, t, [0.0, 0.0, 0.0])
    coarse = transport_residual(system, x, t, u, step=1e-2)
    fine = transport_residual(system, x, t, u, step=1e-3)
    assert coarse > 1e-7
    assert 50.0 < coarse / fine < 200.0
    assert transport_residual(system, x, t, u) < 1e-7


def test_singular_generalized_hodograph():
    system = DiagonalSystem.from_expressions(["u1"], ["u1^3"])
    with pytest.raises(ConvergenceError) as err:
        generalized_hodograph_solve(system, 0.1, 0.0, [0.0])
    assert err.value.code == "SINGULAR"


def test_wave_system_in_riemann_invariants():
    potential = get_potential('quadratic')
    f = ConservedDensity(potential, (U ** 3 + 3 * U * V ** 2) / 6)
    h = ConservedDensity(potential, (U ** 2 + V ** 2) / 2)
    direct = hodograph_solve(f, h, 1.0, 0.3, (1.4, 0.2))
    diagonal = wave_hodograph_in_invariants(f, h, 1.0, 0.3, (1.4, 0.2))
    assert diagonal[0] == pytest.approx(direct[0], abs=1e-10)
    assert diagonal[1] == pytest.approx(direct[1], abs=1e-10)


def test_generic_catastrophe_data(normal_form_system):
    data = catastrophe_data(normal_form_system, [0.0, 0.0, 0.0], 2)
    assert data.a_nn == pytest.approx(1.0, abs=1e-8)
    assert data.A_nnn == pytest.approx(6.0, abs=1e-6)
    np.testing.assert_allclose(data.A_diag, [4.0, 4.0, 0.0], atol=1e-8)
    identities = catastrophe_identities(normal_form_system, data)
    assert "A_1,33" in identities and "A_3,12" in identities
    assert max(identities.values()) < 1e-6


def test_nongeneric_catastrophe_is_rejected():
    system = DiagonalSystem.from_expressions(["1 + u1", "2 + u2", "3 + u3"], ["4*u1", "4*u2", "u3^2 + u3^3"])
    with pytest.raises(ClassificationError) as err:
        catastrophe_data(system, [0.0, 0.0, 0.0], 2)
    assert err.value.code == "NONGENERIC"


def test_normal_form_convergence(normal_form_system):
    report = multicomponent_normal_form_check(normal_form_system, [0.0, 0.0, 0.0], 2)
    assert report.exponent == pytest.approx(1 / 3, abs=0.05)
    assert max(abs(c) for c in report.quadratic_coefficients) < 1e-3
    assert report.A_nnn_fit == pytest.approx(6.0, rel=0.02)
    assert report.deviation_affine[-1] < report.deviation_affine[0]
    payload = report.to_json()
    assert payload["catastrophe"]["breaking"] == 3


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
