#!/usr/bin/env python3
"""
Tests for the expression grammar and the numeric dilogarithm
"""

import math
import os
import sys

import numpy as np
import pytest
import sympy as sp

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from wavelab.errors import ConfigError, ExpressionError
from wavelab.expressions import U, V, did_you_mean, li2, parse_expression, to_numeric


def test_parse_polynomial_density():
    """Caret powers and rationals parse into exact sympy"""
    expr = parse_expression("1/2*v^2 - u^3/6")
    assert sp.simplify(expr - (V ** 2 / 2 - U ** 3 / 6)) == 0


def test_parse_substitutes_params():
    expr = parse_expression("u^kappa/(kappa*(kappa - 1))", ("u",), {"kappa": 3})
    assert sp.simplify(expr - U ** 3 / 6) == 0


def test_unknown_identifier_suggests_builtin():
    with pytest.raises(ExpressionError) as err:
        parse_expression("exq(u)")
    assert "did you mean 'exp'" in str(err.value)
    assert err.value.code == "CONFIG_INVALID"
    assert isinstance(err.value, ConfigError)


def test_suggestions_ignore_single_letter_substrings():
    assert did_you_mean("exq", ["x", "u", "v", "exp", "log"]) == " (did you mean 'exp'?)"
    assert did_you_mean("xyz", ["x", "u", "v"]) == ""


def test_variables_outside_the_allowed_set_are_rejected():
    with pytest.raises(ExpressionError):
        parse_expression("u*v", ("u",))


def test_scientific_notation_is_not_an_identifier():
    expr = parse_expression("1e-3*u", ("u",))
    assert float(expr.subs(U, 2)) == pytest.approx(2e-3)


def test_empty_expression():
    with pytest.raises(ExpressionError):
        parse_expression("   ")


def test_li2_known_values():
    assert li2(1.0) == pytest.approx(math.pi ** 2 / 6, rel=1e-14)
    assert li2(0.5) == pytest.approx(math.pi ** 2 / 12 - math.log(2) ** 2 / 2, rel=1e-14)
    assert li2(0.0) == pytest.approx(0.0, abs=1e-15)


def test_li2_complex_step_derivative():
    """Im Li2(z + ih)/h equals -log(1 - z)/z"""
    z, h = 0.3, 1e-20
    assert np.imag(li2(z + 1j * h)) / h == pytest.approx(-math.log(1 - z) / z, rel=1e-12)


def test_dilog_potential_evaluates_numerically():
    expr = parse_expression("Li2(exp(-u))", ("u",))
    value = to_numeric(expr, (U,))(1.0)
    assert value == pytest.approx(float(sp.N(sp.polylog(2, sp.exp(-1)))), rel=1e-12)


def test_constant_expression_broadcasts():
    fn = to_numeric(sp.Integer(2), (U, V))
    out = fn(np.zeros(4), np.zeros(4))
    assert out.shape == (4,)
    assert np.all(out == 2)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
