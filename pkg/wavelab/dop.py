"""
D-operators: maps f -> D f from conserved densities of the dispersionless
system to densities of commuting Hamiltonians of the perturbed one.

Catalog operators (Boussinesq, Toda, NLS, Ablowitz-Ladik) are written out once
as sympy expressions in the jet symbols and split into JetPoly orders. The
generic eps^2 operator is parameterized by two functions rho_+-(r_+-) of the
Riemann invariants; the scalar operator D_{c,p} acts on f(u) for the
perturbed transport equation.
"""

import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy as sp

from wavelab.catalog import get_potential
from wavelab.diffpoly import (DEFAULT_BOX, JetPoly, LocalFunctional, OrderResidual, commutativity_residual,
                              jet_symbol, random_jet_point)
from wavelab.errors import ConfigError, DensityError, DomainError, QuadratureError
from wavelab.expressions import U, V, parse_expression
from wavelab.wave_core import ConservedDensity, Potential, _diff

logger = logging.getLogger(__name__)

R = sp.Symbol("r", real=True)

UX, UXX = jet_symbol("u", 1), jet_symbol("u", 2)
VX, VXX = jet_symbol("v", 1), jet_symbol("v", 2)

GENERIC2 = "generic2"
SCALAR = "scalar"
BOUSSINESQ = "boussinesq"
BOUSSINESQ_FLIPPED = "boussinesq_flipped"
TODA = "toda"
NLS = "nls"
ABLOWITZ_LADIK = "ablowitz_ladik"

# highest eps order printed for each operator
PUBLISHED_ORDER = {
    GENERIC2: 2,
    SCALAR: 4,
    BOUSSINESQ: 4,
    BOUSSINESQ_FLIPPED: 4,
    TODA: 4,
    NLS: 4,
    ABLOWITZ_LADIK: 2,
}

MODEL_POTENTIALS = {
    BOUSSINESQ: "boussinesq",
    BOUSSINESQ_FLIPPED: "boussinesq_flipped",
    TODA: "toda",
    ABLOWITZ_LADIK: "ablowitz_ladik",
}

PDE_TOL = 1e-6
COMMUTATIVITY_TOL = 1e-8
FPU_TOL = 1e-8

PASS = "PASS"
FAIL = "FAIL"

Rational = sp.Rational


@dataclass(eq=False)
class DOperatorSpec:
    """
    Which D-operator to apply and where to truncate it.

    ``sign`` selects focusing (+1) or defocusing (-1) NLS. ``rho_plus`` and
    ``rho_minus`` are expressions in the symbol ``r`` (generic model), ``c`` and
    ``p`` expressions in ``u`` (scalar model).
    """

    model: str
    max_order: Optional[int] = None
    sign: int = 1
    potential: Optional[Potential] = None
    rho_plus: Optional[sp.Expr] = None
    rho_minus: Optional[sp.Expr] = None
    c: Optional[sp.Expr] = None
    p: Optional[sp.Expr] = None
    box: Optional[Dict[str, Tuple[float, float]]] = None

    def __post_init__(self):
        if self.model not in PUBLISHED_ORDER:
            raise ConfigError(f"unknown D-operator model '{self.model}'", fields={"model": self.model})
        published = PUBLISHED_ORDER[self.model]
        if self.max_order is None:
            self.max_order = published
        problems = {}
        if self.max_order > published or self.max_order < 0:
            problems["max_order"] = f"{self.model} is published through eps^{published}, got {self.max_order}"
        if self.model == NLS and self.sign not in (1, -1):
            problems["sign"] = "NLS sign must be +1 (focusing) or -1 (defocusing)"
        if self.model == GENERIC2:
            if self.potential is None:
                problems["potential"] = "the generic operator needs a potential"
            if self.rho_plus is None or self.rho_minus is None:
                problems["rho"] = "the generic operator needs rho_plus and rho_minus"
        if self.model == SCALAR:
            self.c = _as_expr(self.c if self.c is not None else 0, ("u",))
            self.p = _as_expr(self.p if self.p is not None else 0, ("u",))
        if problems:
            raise ConfigError("invalid D-operator spec", fields=problems)
        if self.rho_plus is not None:
            self.rho_plus = _as_expr(self.rho_plus, ("r",))
        if self.rho_minus is not None:
            self.rho_minus = _as_expr(self.rho_minus, ("r",))

    @property
    def label(self) -> str:
        if self.model == NLS:
            return "nls_focusing" if self.sign > 0 else "nls_defocusing"
        return self.model

    def model_potential(self) -> Optional[Potential]:
        if self.potential is not None:
            return self.potential
        if self.model == NLS:
            return get_potential("nls_focusing" if self.sign > 0 else "nls_defocusing")
        name = MODEL_POTENTIALS.get(self.model)
        return get_potential(name) if name else None

    def working_box(self) -> Dict[str, Tuple[float, float]]:
        if self.box:
            return self.box
        potential = self.model_potential()
        return potential.box if potential is not None else DEFAULT_BOX


def _as_expr(value, variables: Sequence[str]) -> sp.Expr:
    if isinstance(value, str):
        return parse_expression(value, variables)
    return sp.sympify(value)


def _expr_of(f) -> sp.Expr:
    if isinstance(f, ConservedDensity):
        if not f.is_symbolic:
            raise DensityError(f"D-operators need a symbolic density, '{f.name}' is a Chebyshev series", code="SEED")
        return f.expr
    return sp.sympify(f)


# catalog formulas, sympy in the jet symbols

def _bous_terms(f: sp.Expr) -> Dict[int, sp.Expr]:
    d = lambda i, j: _diff(f, i, j)
    u = U
    eps2 = (d(0, 2) / 2 + u * d(1, 2)) * UX ** 2 + 2 * u * d(0, 3) * UX * VX - d(1, 2) * VX ** 2
    eps4 = ((Rational(6, 5) * u ** 2 * d(0, 4) - d(1, 2)) * UXX ** 2
            - Rational(4, 5) * (3 * u * d(1, 3) + 2 * d(0, 3)) * UXX * VXX
            - Rational(6, 5) * u * d(0, 4) * VXX ** 2
            - Rational(1, 5) * d(0, 4) * UXX * VX ** 2
            - d(1, 3) * VXX * UX ** 2
            - Rational(1, 120) * (31 * d(0, 4) - 20 * u ** 3 * d(0, 6) + 92 * u * d(1, 4)) * UX ** 4
            - Rational(2, 15) * u * (13 * d(0, 5) + 5 * u * d(1, 5)) * UX ** 3 * VX
            + Rational(1, 10) * (11 * d(1, 4) - 10 * u ** 2 * d(0, 6)) * UX ** 2 * VX ** 2
            + Rational(1, 15) * (7 * d(0, 5) + 10 * u * d(1, 5)) * UX * VX ** 3
            + Rational(1, 6) * u * d(0, 6) * VX ** 4)
    return {2: eps2, 4: eps4}


def _toda_terms(f: sp.Expr) -> Dict[int, sp.Expr]:
    d = lambda i, j: _diff(f, i, j)
    e = sp.exp(U)
    eps2 = -Rational(1, 24) * ((d(0, 2) + 2 * d(1, 2)) * VX ** 2 + 2 * e * (d(1, 2) * UX ** 2 + 2 * d(0, 3) * UX * VX))
    eps4 = (Rational(1, 720) * d(0, 2) * VXX ** 2
            + Rational(1, 120) * e * d(0, 3) * (UX ** 2 + UXX) * VXX
            + Rational(1, 4320) * d(1, 2) * (2 * e * (UX ** 4 - 3 * UXX ** 2) + 3 * UXX * VX ** 2 + 24 * VXX ** 2)
            + Rational(1, 4320) * d(1, 3) * (4 * e * (2 * UX ** 3 * VX + 15 * UX ** 2 * VXX + 18 * UXX * VXX)
                                             - 3 * UX * VX ** 3)
            + Rational(1, 5760) * d(0, 4) * (16 * e ** 2 * (3 * UXX ** 2 - UX ** 4)
                                             - 4 * e * (7 * UX ** 2 * VX ** 2 + 8 * UXX * VX ** 2 - 12 * VXX ** 2)
                                             - VX ** 4)
            - Rational(1, 2160) * e * d(0, 5) * UX * VX * (14 * e * UX ** 2 + 15 * VX ** 2)
            - Rational(1, 4320) * d(1, 4) * (17 * e ** 2 * UX ** 4 + 27 * e * UX ** 2 * VX ** 2 + 4 * VX ** 4)
            - Rational(1, 864) * e * d(0, 6) * (e ** 2 * UX ** 4 + 6 * e * UX ** 2 * VX ** 2 + VX ** 4)
            - Rational(1, 216) * e * d(1, 5) * UX * VX * (e * UX ** 2 + VX ** 2))
    return {2: eps2, 4: eps4}


def _nls_terms(f: sp.Expr) -> Dict[int, sp.Expr]:
    """Focusing NLS."""
    d = lambda i, j: _diff(f, i, j)
    u = U
    eps2 = -Rational(1, 12) * ((d(3, 0) + Rational(3, 2) / u * d(2, 0)) * UX ** 2
                               + 2 * d(2, 1) * UX * VX - u * d(3, 0) * VX ** 2)
    eps4 = (Rational(1, 120) * ((d(4, 0) + Rational(5, 2) / u * d(3, 0)) * UXX ** 2
                                + 2 * d(3, 1) * UXX * VXX - u * d(4, 0) * VXX ** 2)
            - Rational(1, 80) * d(4, 0) * UXX * VX ** 2
            - d(3, 1) / (48 * u) * VXX * UX ** 2
            - (30 * d(3, 0) - 9 * u * d(4, 0) + 12 * u ** 2 * d(5, 0) + 4 * u ** 3 * d(6, 0)) / (3456 * u ** 3) * UX ** 4
            - (-3 * d(3, 1) + 6 * u * d(4, 1) + 2 * u ** 2 * d(5, 1)) / (432 * u ** 2) * UX ** 3 * VX
            + (9 * d(4, 0) + 9 * u * d(5, 0) + 2 * u ** 2 * d(6, 0)) / (288 * u) * UX ** 2 * VX ** 2
            + Rational(1, 2160) * (9 * d(4, 1) + 10 * u * d(5, 1)) * UX * VX ** 3
            - u / 4320 * (18 * d(5, 0) + 5 * u * d(6, 0)) * VX ** 4)
    return {2: eps2, 4: eps4}


def _al_terms(f: sp.Expr) -> Dict[int, sp.Expr]:
    d = lambda i, j: _diff(f, i, j)
    e = sp.exp(U)
    eps2 = (-Rational(1, 24) * (2 * (1 - e) * d(1, 2) + (e - 2) * d(0, 2)) / (e - 1) ** 2 * UX ** 2
            + Rational(1, 6) * d(0, 3) / (e - 1) * UX * VX
            + Rational(1, 12) * ((e - 1) * d(1, 2) - d(0, 2)) / (e - 1) * VX ** 2)
    return {2: eps2}


CATALOG_TERMS = {
    BOUSSINESQ: _bous_terms,
    TODA: _toda_terms,
    NLS: _nls_terms,
    ABLOWITZ_LADIK: _al_terms,
}


def _orders_from_terms(terms: Dict[int, sp.Expr], f: sp.Expr, max_order: int) -> Dict[int, JetPoly]:
    orders = {0: JetPoly.constant(f)}
    for k, expr in terms.items():
        if k <= max_order:
            orders[k] = JetPoly.from_sympy(expr)
    return orders


def _reflected(terms_fn, f: sp.Expr, max_order: int) -> Dict[int, JetPoly]:
    """D f = (D' f(-u, v)) pulled back along u -> -u."""
    mirrored = f.subs(U, -U)
    orders = _orders_from_terms(terms_fn(mirrored), mirrored, max_order)
    return {k: p.reflect_u() for k, p in orders.items()}


def _check_pde(potential: Potential, f: sp.Expr, name: str):
    density = ConservedDensity(potential, f, name=name)
    try:
        density.check(tol=PDE_TOL)
    except DensityError as e:
        raise DensityError(f"{name} does not solve the linear PDE of {potential.name}: {e.message}",
                           code="PDE_MISMATCH", residual=e.context.get("residual")) from e


def d_apply(spec: DOperatorSpec, f: Union[ConservedDensity, sp.Expr], check: bool = True) -> LocalFunctional:
    """Apply the operator named by ``spec`` to f, truncated at spec.max_order."""
    if spec.model == SCALAR:
        return d_scalar(spec.c, spec.p, f, max_order=spec.max_order)
    if spec.model == GENERIC2:
        return d_generic_eps2(spec.potential, spec.rho_plus, spec.rho_minus, f, max_order=spec.max_order,
                              check=check)

    expr = _expr_of(f)
    name = getattr(f, "name", "") or str(expr)
    if check:
        _check_pde(spec.model_potential(), expr, name)

    if spec.model == BOUSSINESQ_FLIPPED:
        orders = _reflected(_bous_terms, expr, spec.max_order)
    elif spec.model == NLS and spec.sign < 0:
        orders = _reflected(_nls_terms, expr, spec.max_order)
    else:
        orders = _orders_from_terms(CATALOG_TERMS[spec.model](expr), expr, spec.max_order)

    functional = LocalFunctional(orders, spec.max_order, name=f"D_{spec.label}({name})")
    logger.debug(f"D_{spec.label} applied to {name}: orders {sorted(functional.orders)}")
    return functional


def _riemann_Q_expr(potential: Potential) -> sp.Expr:
    if potential.Q is not None:
        return potential.Q
    Q = sp.integrate(sp.sqrt(potential.derivative_expr(2)), U)
    if Q.has(sp.Integral):
        raise QuadratureError(f"no closed-form Riemann invariant for {potential.name}")
    return Q


def d_generic_eps2(potential: Potential, rho_plus, rho_minus, f: Union[ConservedDensity, sp.Expr],
                   max_order: int = 2, check: bool = True) -> LocalFunctional:
    """
    The general 2-integrable perturbation, rho = rho_+(r_+) + rho_-(r_-).

    Args:
        potential: the wave potential P(u); needs a closed-form or integrable Q
        rho_plus: expression in ``r``
        rho_minus: expression in ``r``
        f: solution of f_uu = P'' f_vv
    """
    expr = _expr_of(f)
    name = getattr(f, "name", "") or str(expr)
    if check:
        _check_pde(potential, expr, name)

    Q = _riemann_Q_expr(potential)
    dQ = sp.diff(Q, U)
    drp = sp.diff(_as_expr(rho_plus, ("r",)), R).subs(R, V + Q)
    drm = sp.diff(_as_expr(rho_minus, ("r",)), R).subs(R, V - Q)
    rho_u = dQ * (drp - drm)
    rho_v = drp + drm

    P2, P3 = potential.derivative_expr(2), potential.derivative_expr(3)
    d = lambda i, j: _diff(expr, i, j)
    eps2 = Rational(1, 2) * (
        (P2 * (rho_u * d(0, 3) + rho_v * d(1, 2)) + P3 * rho_v * d(0, 2) / 2) * UX ** 2
        + 2 * (P2 * rho_v * d(0, 3) + rho_u * d(1, 2) + P3 / (4 * P2) * rho_u * d(0, 2)) * UX * VX
        + (rho_u * d(0, 3) + rho_v * d(1, 2)) * VX ** 2
    )
    orders = _orders_from_terms({2: eps2}, expr, min(max_order, 2))
    return LocalFunctional(orders, min(max_order, 2), name=f"D_generic({name})")


def d_scalar(c, p, f, max_order: int = 4) -> LocalFunctional:
    """D_{c,p} f for f = f(u); c, p and f are expressions (or strings) in u."""
    c, p, f = (_as_expr(item, ("u",)) for item in (c, p, _expr_of(f) if isinstance(f, ConservedDensity) else f))
    if V in f.free_symbols:
        raise DensityError("the scalar D-operator acts on f(u) only", code="PDE_MISMATCH")
    fd = lambda k: sp.diff(f, U, k)
    dc = lambda k: sp.diff(c, U, k)
    eps2 = -Rational(1, 24) * c * fd(3) * UX ** 2
    eps4 = ((p * fd(3) + c ** 2 * fd(4) / 480) * UXX ** 2
            - (c * dc(2) * fd(4) / 1152 + c * dc(1) * fd(5) / 1152 + c ** 2 * fd(6) / 3456
               + sp.diff(p, U) * fd(4) / 6 + p * fd(5) / 6) * UX ** 4)
    orders = _orders_from_terms({2: eps2, 4: eps4}, f, max_order)
    return LocalFunctional(orders, max_order, fields=("u",), name=f"D_cp({f})")


# FPU lattices

def fpu_hamiltonian(potential: Potential, max_order: int = 4) -> LocalFunctional:
    """Continuum Hamiltonian of the generalized FPU chain, modulo total derivatives."""
    P = potential.expr
    P2, P4 = potential.derivative_expr(2), potential.derivative_expr(4)
    orders = {
        0: JetPoly.constant(V ** 2 / 2 + P),
        2: JetPoly.from_sympy(-P2 / 24 * UX ** 2),
        4: JetPoly.from_sympy((8 * P2 * UXX ** 2 - P4 * UX ** 4) / 5760),
    }
    return LocalFunctional(orders, max_order, name=f"fpu_{potential.name}")


def fpu_candidate(potential: Potential, f: Union[ConservedDensity, sp.Expr]) -> LocalFunctional:
    """
    The only eps^2 density that can commute with the FPU Hamiltonian.

    h2 = (a u_x^2 + 2 b u_x v_x + c v_x^2) / 2 with b = -P''^2 f_vvv / (6 P'''),
    c = -P'' f_uvv / (6 P'''), a = (c - f_vv / 12) P''. Commutes only when
    P'' P'''' = P'''^2.
    """
    expr = _expr_of(f)
    P2, P3 = potential.derivative_expr(2), potential.derivative_expr(3)
    if sp.simplify(P3) == 0:
        raise DomainError(f"{potential.name} is linear; the FPU test needs P''' != 0")
    d = lambda i, j: _diff(expr, i, j)
    b = -P2 ** 2 * d(0, 3) / (6 * P3)
    c = -P2 * d(1, 2) / (6 * P3)
    a = (c - d(0, 2) / 12) * P2
    orders = _orders_from_terms({2: (a * UX ** 2 + 2 * b * UX * VX + c * VX ** 2) / 2}, expr, 2)
    return LocalFunctional(orders, 2, name=f"fpu_candidate({expr})")


@dataclass
class FpuTestReport:
    potential: str
    residual: float
    scaled_residual: float
    verdict: str
    samples: int

    def to_json(self) -> Dict:
        return {
            "potential": self.potential,
            "residual": self.residual,
            "scaled_residual": self.scaled_residual,
            "verdict": self.verdict,
            "samples": self.samples,
            "passing_family": "P = k exp(c u) + a u + b (Toda lattice)",
        }


def fpu_integrability_test(potential: Potential, box: Optional[Tuple[float, float]] = None, samples: int = 200,
                           seed: int = 0, tol: float = FPU_TOL) -> FpuTestReport:
    """
    Sample P'' P'''' - P'''^2 over the box.

    The verdict uses |P'' P'''' - P'''^2| / (1 + |P'' P''''| + P'''^2); the
    potentials that pass are exactly k exp(c u) + a u + b.
    """
    lo, hi = box or potential.box["u"]
    u = np.random.default_rng(seed).uniform(lo, hi, samples)
    P2, P3, P4 = (np.asarray(potential.d(k, u), dtype=float) for k in (2, 3, 4))
    raw = np.abs(P2 * P4 - P3 ** 2)
    scaled = raw / (1.0 + np.abs(P2 * P4) + P3 ** 2)
    verdict = PASS if float(np.max(scaled)) < tol else FAIL
    report = FpuTestReport(potential.name, float(np.max(raw)), float(np.max(scaled)), verdict, samples)
    logger.info(f"📊 FPU integrability test for {potential.name}: residual {report.residual:.3e} -> {verdict}")
    return report


# commutativity

@dataclass
class CommutativityReport:
    model: str
    order: int
    residuals: List[OrderResidual] = field(default_factory=list)
    verdict: str = FAIL
    tol: float = COMMUTATIVITY_TOL

    def to_json(self) -> Dict:
        return {
            "model": self.model,
            "order": self.order,
            "residuals": [{"order": r.order, "E_u": r.residual_u, "E_v": r.residual_v, "weak": r.weak}
                          for r in self.residuals],
            "verdict": self.verdict,
            "tol": self.tol,
        }


def certify_functionals(F: LocalFunctional, G: LocalFunctional, order: int, model: str = "custom", seed: int = 0,
                        samples: int = 20, box=None, tol: float = COMMUTATIVITY_TOL) -> CommutativityReport:
    residuals = commutativity_residual(F, G, order, seed=seed, samples=samples, box=box)
    verdict = PASS if all(r.worst < tol for r in residuals if r.order <= order) else FAIL
    return CommutativityReport(model, order, residuals, verdict, tol)


def pairwise_commutativity_certify(spec: DOperatorSpec, f, g, order: Optional[int] = None, seed: int = 0,
                                   samples: int = 20, tol: float = COMMUTATIVITY_TOL) -> CommutativityReport:
    """{D f, D g} order by order; PASS iff every order up to ``order`` is below tol."""
    order = spec.max_order if order is None else order
    F, G = d_apply(spec, f), d_apply(spec, g)
    report = certify_functionals(F, G, order, spec.label, seed, samples, spec.working_box(), tol)
    logger.info(f"📊 {spec.label} commutativity of {F.name} and {G.name} through eps^{order}: {report.verdict}")
    return report


def _certify_task(args):
    spec, f, g, order, seed = args
    return pairwise_commutativity_certify(spec, f, g, order, seed)


def certify_sweep(spec: DOperatorSpec, densities: Sequence, order: Optional[int] = None, seed: int = 0,
                  jobs: int = 1) -> List[CommutativityReport]:
    """All unordered pairs of ``densities``, optionally in a process pool."""
    tasks = [(spec, densities[i], densities[j], order, seed)
             for i in range(len(densities)) for j in range(i + 1, len(densities))]
    if jobs <= 1:
        return [_certify_task(task) for task in tasks]

    results: Dict[int, CommutativityReport] = {}
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futures = {ex.submit(_certify_task, task): index for index, task in enumerate(tasks)}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    return [results[index] for index in range(len(tasks))]


def fpu_candidate_check(potential: Potential, f, seed: int = 0, samples: int = 20,
                            tol: float = COMMUTATIVITY_TOL) -> CommutativityReport:
    """Commutativity of the eps^2 FPU candidate for f against the FPU Hamiltonian."""
    report = certify_functionals(fpu_candidate(potential, f), fpu_hamiltonian(potential, 2), 2,
                                 f"fpu_{potential.name}", seed, samples, potential.box, tol)
    logger.info(f"📊 FPU candidate check for {potential.name}: {report.verdict}")
    return report


# structural checks

def v_derivative(F: LocalFunctional) -> LocalFunctional:
    orders = {k: p.partial(("v", 0)) for k, p in F.orders.items()}
    return LocalFunctional(orders, F.truncation_order, F.fields, name=f"d/dv {F.name}")


def shift_identity_holds(spec: DOperatorSpec, h, max_order: int = 2, seed: int = 0) -> bool:
    """d/dv (D h) and D(h_v) agree modulo total derivatives through eps^max_order."""
    expr = _expr_of(h)
    left = v_derivative(d_apply(spec, expr)).truncated(max_order)
    right = d_apply(spec, sp.diff(expr, V)).truncated(max_order)
    return left.equivalent(right, seed=seed, box=spec.working_box())


def v_shift_residual(spec: DOperatorSpec, f, shift: float, seed: int = 0, samples: int = 5) -> float:
    """max |D(f(u, v + c)) - (D f)(u, v + c)| over random jet points, all orders."""
    expr = _expr_of(f)
    direct = d_apply(spec, expr.subs(V, V + shift))
    moved = d_apply(spec, expr).shift_v(shift)
    point = random_jet_point(np.random.default_rng(seed), 3, samples, spec.working_box())
    worst = 0.0
    for k in sorted(set(direct.orders) | set(moved.orders)):
        diff = direct[k] - moved[k]
        if not diff.is_zero:
            worst = max(worst, float(np.max(np.abs(diff.evaluate(point)))))
    return worst
