"""
Expression grammar shared by the catalog and the experiment configs.

Expressions are plain arithmetic over the state variables (u, v, u1..un, x)
with the builtins exp, log, sqrt, sin, cos, arctan and the dilogarithm Li2.
They are parsed into sympy so every module can differentiate them exactly,
and turned into numpy callables through ``to_numeric``.
"""

import functools
import logging
import re
from typing import Dict, Iterable, Optional, Sequence

import numpy as np
import sympy as sp
from rapidfuzz import fuzz, process
from scipy import special
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from wavelab.errors import ExpressionError

logger = logging.getLogger(__name__)

U, V = sp.symbols("u v", real=True)
X = sp.Symbol("x", real=True)

TRANSFORMATIONS = standard_transformations + (convert_xor,)

BUILTINS = {
    "exp": sp.exp,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "sin": sp.sin,
    "cos": sp.cos,
    "arctan": sp.atan,
    "atan": sp.atan,
    "Li2": lambda z: sp.polylog(2, z),
    "pi": sp.pi,
    "E": sp.E,
}

_IDENTIFIER = re.compile(r"(?<![0-9.])[A-Za-z_][A-Za-z_0-9]*")


def did_you_mean(name: str, choices: Iterable[str]) -> str:
    match = process.extractOne(name, list(choices), scorer=fuzz.ratio)
    if match and match[1] >= 60:
        return f" (did you mean '{match[0]}'?)"
    return ""


def state_symbols(names: Sequence[str]) -> Dict[str, sp.Symbol]:
    symbols = {"u": U, "v": V, "x": X}
    for name in names:
        if name not in symbols:
            symbols[name] = sp.Symbol(name, real=True)
    return symbols


def parse_expression(text: str, variables: Sequence[str] = ("u", "v"),
                     params: Optional[Dict[str, float]] = None) -> sp.Expr:
    """
    Parse a config expression into sympy.

    Args:
        text: expression such as ``"1/2*v^2 - u^3/6"`` or ``"Li2(exp(-u))"``
        variables: names allowed as free variables
        params: numeric constants substituted by name (e.g. ``{"kappa": 3}``)
    """
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("empty expression", fields={"expression": repr(text)})

    params = params or {}
    symbols = state_symbols(variables)
    allowed = set(BUILTINS) | set(symbols) | set(params)

    for name in _IDENTIFIER.findall(text):
        if name not in allowed:
            raise ExpressionError(
                f"unknown identifier '{name}' in '{text}'{did_you_mean(name, allowed)}",
                fields={"expression": text},
            )

    local_dict = dict(BUILTINS)
    local_dict.update({name: symbols[name] for name in variables if name in symbols})
    local_dict["x"] = X
    local_dict.update({name: sp.nsimplify(value, rational=True) if float(value).is_integer()
                       else sp.Float(value) for name, value in params.items()})

    try:
        expr = parse_expr(text, local_dict=local_dict, transformations=TRANSFORMATIONS,
                          global_dict={"Integer": sp.Integer, "Float": sp.Float,
                                       "Rational": sp.Rational, "Symbol": sp.Symbol})
    except Exception as e:
        raise ExpressionError(f"cannot parse '{text}': {e}", fields={"expression": text}) from e

    stray = {str(s) for s in expr.free_symbols} - set(variables) - {"x"}
    if stray:
        raise ExpressionError(f"free symbols {sorted(stray)} in '{text}'", fields={"expression": text})
    return expr


def li2(z):
    """Dilogarithm through scipy's Spence function: Li2(z) = spence(1 - z).

    Real input must satisfy z <= 1; complex input is used for complex-step
    derivatives and follows the principal branch.
    """
    z = np.asarray(z)
    if not np.iscomplexobj(z):
        z = z.astype(float)
    return special.spence(1.0 - z)


def _polylog(s, z):
    if s == 1:
        return -np.log1p(-np.asarray(z))
    if s == 2:
        return li2(z)
    raise ExpressionError(f"polylog of order {s} is not available numerically")


NUMERIC_MODULES = [{"polylog": _polylog, "atan": np.arctan}, "numpy"]


@functools.lru_cache(maxsize=4096)
def _compiled(expr: sp.Expr, args: tuple):
    return sp.lambdify(args, expr, modules=NUMERIC_MODULES)


def to_numeric(expr: sp.Expr, args: Sequence[sp.Symbol]):
    """Callable numpy version of ``expr``; constants broadcast to the argument shape."""
    args = tuple(args)
    expr = sp.sympify(expr)
    if not (expr.free_symbols & set(args)):
        value = complex(sp.N(expr))
        value = value.real if value.imag == 0 else value

        def constant(*values):
            shape = np.broadcast(*values).shape if values else ()
            return np.full(shape, value) if shape else value

        return constant
    return _compiled(expr, args)
