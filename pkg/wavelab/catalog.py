"""
Named potentials, conserved densities and density families.
"""

import functools
import json
import logging
import math
import os
from typing import Dict, List, Optional

import sympy as sp

from wavelab.errors import ConfigError
from wavelab.expressions import U, V, did_you_mean, parse_expression
from wavelab.wave_core import ConservedDensity, Potential, symbolic_recursion

logger = logging.getLogger(__name__)

POTENTIALS_FILE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data", "potentials.json")

# name -> (expression, default potential)
DENSITIES = {
    'bous_hamiltonian': ('1/2*v^2 - u^3/6', 'boussinesq'),
    'bous_flipped_hamiltonian': ('1/2*v^2 + u^3/6', 'boussinesq_flipped'),
    'toda_hamiltonian': ('1/2*v^2 + exp(u)', 'toda'),
    'nls_hamiltonian': ('1/2*(u*v^2 - u^2)', 'nls_focusing'),
    'nls_defocusing_hamiltonian': ('1/2*(u*v^2 + u^2)', 'nls_defocusing'),
    'nls_toda': ('-1/2*v^2 + u*(log(u) - 1)', 'nls_focusing'),
    'al_hamiltonian': ('(1 - exp(-u))*cos(v)', 'ablowitz_ladik'),
    'al_dmkdv': ('(1 - exp(-u))*sin(v)', 'ablowitz_ladik'),
    'al_wave_hamiltonian': ('1/2*v^2 + Li2(exp(-u))', 'ablowitz_ladik'),
    'power_example': ('1/2*u*v^2 + u^(kappa + 1)/(kappa*(kappa + 1))', 'power'),
    'momentum_u': ('u', None),
    'momentum_v': ('v', None),
}


@functools.lru_cache(maxsize=1)
def load_potentials() -> List[Dict]:
    """Load potential records from the JSON catalog"""
    try:
        with open(POTENTIALS_FILE, 'r', encoding='utf-8') as f:
            return json.load(f)
    except Exception as e:
        logger.error(f"❌ Error loading potentials: {e}")
        return []


def potential_names() -> List[str]:
    return [record['name'] for record in load_potentials()]


def _potential_from_record(record: Dict, params: Optional[Dict[str, float]] = None) -> Potential:
    params = {**record.get('params', {}), **(params or {})}
    parse = lambda text: parse_expression(text, ("u",), params) if text else None
    lo, hi = record.get('domain', [None, None])
    hyperbolic = record.get('hyperbolic')
    return Potential(
        name=record['name'],
        expr=parse(record['P']),
        domain=(-math.inf if lo is None else lo, math.inf if hi is None else hi),
        hyperbolic=None if hyperbolic is None else tuple(hyperbolic),
        Q=parse(record.get('Q')),
        Q_elliptic=parse(record.get('Q_elliptic')),
        u_ref=record.get('u_ref', 1.0),
        box={k: tuple(v) for k, v in record.get('box', {"u": [0.5, 1.5], "v": [-1.0, 1.0]}).items()},
    )


def get_potential(name: str, params: Optional[Dict[str, float]] = None) -> Potential:
    for record in load_potentials():
        if record['name'] == name:
            return _potential_from_record(record, params)
    raise ConfigError(f"unknown potential '{name}'{did_you_mean(name, potential_names())}",
                      fields={"potential": name})


def potential_from_expression(text: str, name: str = "custom", u_ref: float = 1.0,
                              box: Optional[Dict] = None) -> Potential:
    """A user potential; Q is left to quadrature."""
    expr = parse_expression(text, ("u",))
    return Potential(name=name, expr=expr, u_ref=u_ref,
                     box=box or {"u": (u_ref - 0.5, u_ref + 0.5), "v": (-1.0, 1.0)})


def resolve_potential(spec: str, params: Optional[Dict[str, float]] = None) -> Potential:
    """Catalog name or expression in u."""
    if spec in potential_names():
        return get_potential(spec, params)
    try:
        return potential_from_expression(spec)
    except ConfigError:
        raise ConfigError(f"'{spec}' is neither a catalog potential nor a valid expression"
                          f"{did_you_mean(spec, potential_names())}", fields={"potential": spec})


def hamiltonian(potential: Potential) -> ConservedDensity:
    """h = v^2/2 + P(u)."""
    return ConservedDensity(potential, V ** 2 / 2 + potential.expr, construction="catalog",
                            name=f"{potential.name}_hamiltonian")


def get_density(name: str, potential: Optional[Potential] = None,
                params: Optional[Dict[str, float]] = None) -> ConservedDensity:
    if name not in DENSITIES:
        raise ConfigError(f"unknown density '{name}'{did_you_mean(name, DENSITIES)}", fields={"density": name})
    text, default_potential = DENSITIES[name]
    if potential is None:
        potential = get_potential(default_potential or 'quadratic', params)
    merged = dict(params or {})
    if name == 'power_example':
        merged.setdefault('kappa', 3)
    expr = parse_expression(text, ("u", "v"), merged)
    return ConservedDensity(potential, expr, construction="catalog", name=name)


def density_from_expression(text: str, potential: Potential, name: str = "user",
                            params: Optional[Dict[str, float]] = None) -> ConservedDensity:
    return ConservedDensity(potential, parse_expression(text, ("u", "v"), params), construction="user", name=name)


def resolve_density(spec: str, potential: Potential, params: Optional[Dict[str, float]] = None) -> ConservedDensity:
    """Catalog name, family call (tricomi(N, j), al_basis(n, cos|sin)) or expression."""
    spec = spec.strip()
    if spec in DENSITIES:
        return get_density(spec, potential, params)
    if spec.startswith("tricomi(") or spec.startswith("recursion("):
        N, j = [int(part) for part in spec[spec.index("(") + 1:-1].split(",")]
        return tricomi(potential, N, j)
    if spec.startswith("al_basis("):
        n, parity = [part.strip() for part in spec[spec.index("(") + 1:-1].split(",")]
        return al_basis(potential, int(n), parity)
    return density_from_expression(spec, potential, params=params)


@functools.lru_cache(maxsize=256)
def _tricomi_expr(potential_expr: sp.Expr, potential_name: str, N: int, j: int) -> sp.Expr:
    return symbolic_recursion(Potential(potential_name, potential_expr), U ** j, 0, N)


def tricomi(potential: Potential, N: int, j: int = 0) -> ConservedDensity:
    """Recursion density with top term v^N u^j (polynomial for the Boussinesq potentials)."""
    if j not in (0, 1):
        raise ConfigError(f"tricomi top exponent j must be 0 or 1, got {j}", fields={"j": str(j)})
    expr = _tricomi_expr(potential.expr, potential.name, N, j)
    return ConservedDensity(potential, expr, construction="v-power-recursion", name=f"tricomi({N},{j})")


def al_basis(potential: Potential, n: int, parity: str = "cos") -> ConservedDensity:
    """
    (-1)^n {cos, sin}(n v) e^{-n u} 2F1(-n, -n; 1 - 2n; e^u), a polynomial in e^u.

    n = 1 gives the Ablowitz-Ladik Hamiltonian (1 - e^{-u}) cos v.
    """
    if n < 1:
        raise ConfigError("al_basis needs n >= 1", fields={"n": str(n)})
    trig = {"cos": sp.cos, "sin": sp.sin}.get(parity)
    if trig is None:
        raise ConfigError(f"parity must be cos or sin{did_you_mean(parity, ['cos', 'sin'])}", fields={"parity": parity})
    z = sp.exp(U)
    hyper = sum(sp.rf(-n, m) ** 2 / (sp.rf(1 - 2 * n, m) * sp.factorial(m)) * z ** m for m in range(n + 1))
    expr = sp.expand((-1) ** n * trig(n * V) * sp.exp(-n * U) * hyper)
    return ConservedDensity(potential, expr, construction="catalog", name=f"al_basis({n},{parity})")
