"""
Differential polynomials in the jets of the fields u, v.

A JetPoly is a finite sum  c(u, v) * u^(m1) * ... * v^(mk)  where the
coefficients are sympy expressions in (u, v) only and the monomial is a sorted
multiset of jet variables with order >= 1. The graded degree of a monomial is
the sum of its orders.
"""

import functools
import logging
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import sympy as sp

from wavelab.expressions import U, V, to_numeric

logger = logging.getLogger(__name__)

JetVar = Tuple[str, int]
Monomial = Tuple[JetVar, ...]
Box = Dict[str, Tuple[float, float]]

FIELD_SYMBOLS = {"u": U, "v": V}
DEFAULT_BOX: Box = {"u": (0.5, 1.5), "v": (-1.0, 1.0)}
DEFAULT_TOL = 1e-9

EXACT = "EXACT"
NUMERIC = "NUMERIC"
INDETERMINATE = "INDETERMINATE"
NOT_TOTAL = "NOT_TOTAL"

_JET_NAME = re.compile(r"^([uv])_(x+)$")


@functools.lru_cache(maxsize=None)
def jet_symbol(field_name: str, order: int) -> sp.Symbol:
    if order == 0:
        return FIELD_SYMBOLS[field_name]
    return sp.Symbol(f"{field_name}_{'x' * order}", real=True)


def parse_jet_symbol(symbol) -> Optional[JetVar]:
    if not isinstance(symbol, sp.Symbol):
        return None
    match = _JET_NAME.match(symbol.name)
    if not match:
        return None
    return match.group(1), len(match.group(2))


def monomial_degree(monomial: Monomial) -> int:
    return sum(order for _, order in monomial)


def _has_jets(expr: sp.Expr) -> bool:
    return any(parse_jet_symbol(s) is not None for s in expr.free_symbols)


class JetPoly:
    """Immutable differential polynomial; terms are kept in canonical order."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: Union[None, Mapping[Monomial, object], Iterable[Tuple[Monomial, object]]] = None):
        pairs = terms.items() if isinstance(terms, Mapping) else (terms or [])
        collected: Dict[Monomial, sp.Expr] = {}
        for monomial, coeff in pairs:
            key = tuple(sorted(monomial))
            if any(order < 1 for _, order in key):
                raise ValueError(f"jet orders in a monomial must be >= 1: {key}")
            collected[key] = collected.get(key, sp.Integer(0)) + sp.sympify(coeff)

        clean = {}
        for monomial, coeff in collected.items():
            coeff = sp.expand(coeff)
            if coeff != 0:
                clean[monomial] = coeff
        self.terms: Dict[Monomial, sp.Expr] = dict(
            sorted(clean.items(), key=lambda item: (monomial_degree(item[0]), item[0]))
        )
        self._hash = None

    # construction

    @classmethod
    def constant(cls, coeff) -> "JetPoly":
        return cls({(): coeff})

    @classmethod
    def jet(cls, field_name: str, order: int) -> "JetPoly":
        if order == 0:
            return cls.constant(FIELD_SYMBOLS[field_name])
        return cls({((field_name, order),): 1})

    @classmethod
    def from_sympy(cls, expr) -> "JetPoly":
        """Split an expression polynomial in the jet symbols into JetPoly terms."""
        expr = sp.expand(sp.sympify(expr))
        pairs = []
        for term in sp.Add.make_args(expr):
            coeff = sp.Integer(1)
            monomial: List[JetVar] = []
            for factor in sp.Mul.make_args(term):
                base, exponent = factor.as_base_exp()
                var = parse_jet_symbol(base)
                if var is not None:
                    if not (exponent.is_Integer and exponent > 0):
                        raise ValueError(f"jet {base} appears with exponent {exponent}")
                    monomial.extend([var] * int(exponent))
                elif _has_jets(factor):
                    raise ValueError(f"factor {factor} is not polynomial in the jets")
                else:
                    coeff = coeff * factor
            pairs.append((tuple(monomial), coeff))
        return cls(pairs)

    def to_sympy(self) -> sp.Expr:
        total = sp.Integer(0)
        for monomial, coeff in self.terms.items():
            total += coeff * sp.Mul(*[jet_symbol(f, m) for f, m in monomial])
        return total

    # structure

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degrees(self) -> List[int]:
        return sorted({monomial_degree(m) for m in self.terms})

    def max_order(self, field_name: Optional[str] = None) -> int:
        orders = [order for monomial in self.terms for f, order in monomial
                  if field_name is None or f == field_name]
        return max(orders, default=0)

    def __eq__(self, other) -> bool:
        return isinstance(other, JetPoly) and self.terms == other.terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(tuple(self.terms.items()))
        return self._hash

    def __repr__(self) -> str:
        return f"JetPoly({self.to_sympy()})"

    # arithmetic

    def __add__(self, other: "JetPoly") -> "JetPoly":
        other = other if isinstance(other, JetPoly) else JetPoly.constant(other)
        return JetPoly(list(self.terms.items()) + list(other.terms.items()))

    __radd__ = __add__

    def __neg__(self) -> "JetPoly":
        return self.scale(-1)

    def __sub__(self, other: "JetPoly") -> "JetPoly":
        other = other if isinstance(other, JetPoly) else JetPoly.constant(other)
        return self + (-other)

    def __mul__(self, other) -> "JetPoly":
        if not isinstance(other, JetPoly):
            return self.scale(other)
        pairs = []
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                pairs.append((m1 + m2, c1 * c2))
        return JetPoly(pairs)

    __rmul__ = __mul__

    def scale(self, factor) -> "JetPoly":
        factor = sp.sympify(factor)
        return JetPoly([(m, factor * c) for m, c in self.terms.items()])

    def subs(self, mapping: Mapping) -> "JetPoly":
        """Substitute into the (u, v) coefficients only."""
        return JetPoly([(m, c.subs(mapping)) for m, c in self.terms.items()])

    def reflect_u(self) -> "JetPoly":
        """Pull back along u -> -u: every u-jet changes sign, coefficients get u -> -u."""
        pairs = []
        for monomial, coeff in self.terms.items():
            sign = (-1) ** sum(1 for f, _ in monomial if f == "u")
            pairs.append((monomial, sign * coeff.subs(U, -U)))
        return JetPoly(pairs)

    # calculus

    def partial(self, var: JetVar) -> "JetPoly":
        field_name, order = var
        if order == 0:
            symbol = FIELD_SYMBOLS[field_name]
            return JetPoly([(m, sp.diff(c, symbol)) for m, c in self.terms.items()])
        pairs = []
        for monomial, coeff in self.terms.items():
            count = monomial.count(var)
            if count:
                reduced = list(monomial)
                reduced.remove(var)
                pairs.append((tuple(reduced), count * coeff))
        return JetPoly(pairs)

    def total_x_derivative(self) -> "JetPoly":
        pairs = []
        for monomial, coeff in self.terms.items():
            pairs.append((monomial + (("u", 1),), sp.diff(coeff, U)))
            pairs.append((monomial + (("v", 1),), sp.diff(coeff, V)))
            for var in set(monomial):
                reduced = list(monomial)
                reduced.remove(var)
                reduced.append((var[0], var[1] + 1))
                pairs.append((tuple(reduced), monomial.count(var) * coeff))
        return JetPoly(pairs)

    # numerics

    def evaluate(self, point: Mapping[JetVar, object]):
        """Evaluate at a jet point; values may be scalars or broadcastable arrays."""
        u = point[("u", 0)]
        v = point.get(("v", 0), np.zeros(np.shape(u)))
        total = np.zeros(np.broadcast(u, v).shape)
        for monomial, coeff in self.terms.items():
            value = to_numeric(coeff, (U, V))(u, v)
            for var in monomial:
                value = value * point[var]
            total = total + value
        return total

    def to_json(self) -> List[Dict]:
        out = []
        for monomial, coeff in self.terms.items():
            out.append({
                "coeff": str(coeff),
                "monomial": {
                    "u": [order for f, order in monomial if f == "u"],
                    "v": [order for f, order in monomial if f == "v"],
                },
                "degree": monomial_degree(monomial),
            })
        return out


def total_x_derivative(p: JetPoly) -> JetPoly:
    return p.total_x_derivative()


@functools.lru_cache(maxsize=4096)
def euler_op(p: JetPoly, which: str) -> JetPoly:
    """E_w p = sum_m (-D)^m dp/dw^(m)."""
    result = JetPoly()
    for order in range(p.max_order(which) + 1):
        term = p.partial((which, order))
        for _ in range(order):
            term = -term.total_x_derivative()
        result = result + term
    return result


def random_jet_point(rng: np.random.Generator, max_order: int, samples: int,
                     box: Optional[Box] = None, fields: Sequence[str] = ("u", "v")) -> Dict[JetVar, np.ndarray]:
    """(u, v) uniform in the box, every higher jet uniform in [-1, 1]."""
    box = box or DEFAULT_BOX
    point = {}
    for name in fields:
        lo, hi = box[name]
        point[(name, 0)] = rng.uniform(lo, hi, samples)
        for order in range(1, max_order + 1):
            point[(name, order)] = rng.uniform(-1.0, 1.0, samples)
    return point


def _structurally_zero(p: JetPoly) -> bool:
    for coeff in p.terms.values():
        try:
            if sp.cancel(sp.together(coeff)) != 0:
                return False
        except sp.PolynomialError:
            return False
    return True


@dataclass
class TotalDerivativeReport:
    is_total: bool
    status: str
    residual: float
    samples: int

    def __bool__(self) -> bool:
        return self.is_total


def is_total_derivative(p: JetPoly, tol: float = DEFAULT_TOL, seed: int = 0, samples: int = 20,
                        box: Optional[Box] = None, fields: Sequence[str] = ("u", "v")) -> TotalDerivativeReport:
    if tol <= 0:
        raise ValueError("tol must be positive")
    images = [euler_op(p, name) for name in fields]
    if all(_structurally_zero(image) for image in images):
        return TotalDerivativeReport(True, EXACT, 0.0, 0)

    max_order = max(image.max_order() for image in images)
    point = random_jet_point(np.random.default_rng(seed), max_order, max(samples, 20), box, fields)
    residual = max(float(np.max(np.abs(image.evaluate(point)))) for image in images)

    if residual < tol / 100:
        return TotalDerivativeReport(True, NUMERIC, residual, max(samples, 20))
    if residual < tol:
        logger.warning(f"⚠️ Total-derivative check indeterminate: residual {residual:.3e} in [{tol / 100:.1e}, {tol:.1e})")
        return TotalDerivativeReport(False, INDETERMINATE, residual, max(samples, 20))
    return TotalDerivativeReport(False, NOT_TOTAL, residual, max(samples, 20))


@dataclass(eq=False)
class LocalFunctional:
    """Density sum_k eps^k h_k, truncated at ``truncation_order``."""

    orders: Dict[int, JetPoly]
    truncation_order: int
    fields: Tuple[str, ...] = ("u", "v")
    dropped_orders: Tuple[int, ...] = ()
    name: str = ""

    def __post_init__(self):
        self.orders = {k: p for k, p in self.orders.items() if k <= self.truncation_order}

    @classmethod
    def from_density(cls, density, truncation_order: int = 0, fields: Tuple[str, ...] = ("u", "v"),
                     name: str = "") -> "LocalFunctional":
        if not isinstance(density, JetPoly):
            density = JetPoly.from_sympy(density)
        return cls({0: density}, truncation_order, fields, name=name)

    def __getitem__(self, k: int) -> JetPoly:
        return self.orders.get(k, JetPoly())

    def scaled_order(self, k: int, factor: float) -> "LocalFunctional":
        orders = dict(self.orders)
        orders[k] = self[k].scale(factor)
        return LocalFunctional(orders, self.truncation_order, self.fields, self.dropped_orders, self.name)

    def add_exact_derivative(self, k: int, q: JetPoly) -> "LocalFunctional":
        orders = dict(self.orders)
        orders[k] = self[k] + q.total_x_derivative()
        return LocalFunctional(orders, self.truncation_order, self.fields, self.dropped_orders, self.name)

    def shift_v(self, c) -> "LocalFunctional":
        """Coefficients pulled back along v -> v + c."""
        orders = {k: p.subs({V: V + c}) for k, p in self.orders.items()}
        return LocalFunctional(orders, self.truncation_order, self.fields, self.dropped_orders, self.name)

    def equivalent(self, other: "LocalFunctional", tol: float = DEFAULT_TOL, seed: int = 0,
                   box: Optional[Box] = None) -> bool:
        """Equal as functionals: densities differ by a total derivative at every stored order."""
        order = min(self.truncation_order, other.truncation_order)
        for k in range(order + 1):
            report = is_total_derivative(self[k] - other[k], tol=tol, seed=seed, box=box, fields=self.fields)
            if not report.is_total:
                return False
        return True

    def truncated(self, order: int) -> "LocalFunctional":
        return LocalFunctional(dict(self.orders), min(order, self.truncation_order), self.fields,
                               self.dropped_orders, self.name)

    def to_sympy(self, eps: Optional[sp.Symbol] = None) -> sp.Expr:
        eps = eps if eps is not None else sp.Symbol("epsilon", positive=True)
        return sum((eps ** k * p.to_sympy() for k, p in self.orders.items()), sp.Integer(0))

    def grading_violations(self) -> List[str]:
        """eps^k terms must have graded degree k and jet order at most floor(3k/2)."""
        problems = []
        for k, p in self.orders.items():
            if p.is_zero:
                continue
            if p.degrees != [k]:
                problems.append(f"order {k}: degrees {p.degrees}")
            if p.max_order() > (3 * k) // 2:
                problems.append(f"order {k}: jet order {p.max_order()} > {(3 * k) // 2}")
        return problems

    def to_json(self) -> Dict:
        return {
            "name": self.name,
            "truncation_order": self.truncation_order,
            "fields": list(self.fields),
            "dropped_orders": list(self.dropped_orders),
            "orders": {str(k): p.to_json() for k, p in sorted(self.orders.items())},
        }


def _is_scalar(F: LocalFunctional, G: LocalFunctional) -> bool:
    return F.fields == ("u",) and G.fields == ("u",)


def _bracket_pairs(F: LocalFunctional, G: LocalFunctional, k: int) -> List[Tuple[JetPoly, JetPoly]]:
    """Pairs (a, b) with bracket_k = sum a * D b."""
    pairs = []
    for i in range(k + 1):
        Fi, Gj = F[i], G[k - i]
        if Fi.is_zero or Gj.is_zero:
            continue
        if _is_scalar(F, G):
            pairs.append((euler_op(Fi, "u"), euler_op(Gj, "u")))
        else:
            pairs.append((euler_op(Fi, "u"), euler_op(Gj, "v")))
            pairs.append((euler_op(Fi, "v"), euler_op(Gj, "u")))
    return pairs


def poisson_bracket_density(F: LocalFunctional, G: LocalFunctional) -> LocalFunctional:
    """Density of {F, G}: E_u F * D E_v G + E_v F * D E_u G, order by order in eps."""
    order = min(F.truncation_order, G.truncation_order)
    orders = {}
    for k in range(order + 1):
        acc = JetPoly()
        for a, b in _bracket_pairs(F, G, k):
            acc = acc + a * b.total_x_derivative()
        orders[k] = acc
    dropped = tuple(range(order + 1, F.truncation_order + G.truncation_order + 1))
    if dropped:
        logger.debug(f"bracket {F.name or 'F'},{G.name or 'G'}: dropped eps orders {list(dropped)}")
    fields = ("u",) if _is_scalar(F, G) else ("u", "v")
    return LocalFunctional(orders, order, fields, dropped, f"{{{F.name},{G.name}}}")


class PeriodicFieldSampler:
    """
    Random band-limited periodic fields on [0, 2pi) with closed-form jets.

    Each sample gives ``nodes`` jet points along one field; perturbed copies
    along a direction phi are produced with a complex step so that
    d/deta int B(u + eta phi) dx = int E_u(B) phi dx is read off exactly.
    """

    def __init__(self, seed: int = 0, samples: int = 4, box: Optional[Box] = None,
                 fields: Sequence[str] = ("u", "v"), nodes: int = 64, modes: int = 2):
        self.box = box or DEFAULT_BOX
        self.fields = tuple(fields)
        self.nodes = nodes
        self.modes = modes
        self.x = 2 * np.pi * np.arange(nodes) / nodes
        rng = np.random.default_rng(seed)
        self.samples = []
        for _ in range(samples):
            sample = {}
            for name in self.fields:
                lo, hi = self.box[name]
                half = 0.5 * (hi - lo)
                coeffs = rng.uniform(-1.0, 1.0, (modes, 2)) * 0.8 * half / (2 * modes)
                sample[name] = (0.5 * (lo + hi), coeffs)
            directions = {name: rng.uniform(-1.0, 1.0, (modes, 2)) / modes for name in self.fields}
            self.samples.append((sample, directions))

    def _trig_jet(self, center: float, coeffs: np.ndarray, order: int) -> np.ndarray:
        out = np.full(self.nodes, center if order == 0 else 0.0)
        for j in range(coeffs.shape[0]):
            k = j + 1
            a, b = coeffs[j]
            phase = order * np.pi / 2
            out = out + k ** order * (a * np.cos(k * self.x + phase) + b * np.sin(k * self.x + phase))
        return out

    def point(self, index: int, max_order: int, direction: Optional[str] = None,
              step: float = 0.0) -> Dict[JetVar, np.ndarray]:
        sample, directions = self.samples[index]
        point = {}
        for name in self.fields:
            center, coeffs = sample[name]
            for order in range(max_order + 1):
                value = self._trig_jet(center, coeffs, order).astype(complex)
                if direction == name and step:
                    value = value + 1j * step * self._trig_jet(0.0, directions[name], order)
                point[(name, order)] = value
        return point


@dataclass
class OrderResidual:
    order: int
    residual_u: float
    residual_v: float
    weak: float = 0.0

    @property
    def worst(self) -> float:
        return max(self.residual_u, self.residual_v)


def commutativity_residual(F: LocalFunctional, G: LocalFunctional, max_order: int, seed: int = 0,
                           samples: int = 20, box: Optional[Box] = None, weak_samples: int = 4) -> List[OrderResidual]:
    """
    Pointwise Euler images of each bracket order.

    For every eps order k, E_u and E_v of the bracket density B_k are evaluated
    at ``samples`` (at least 20) random jet points and the largest modulus is
    kept. The weak image on random periodic fields rides along as a cross-check.
    """
    fields = ("u",) if _is_scalar(F, G) else ("u", "v")
    bracket = poisson_bracket_density(F, G)
    weak = weak_commutativity_residual(F, G, max_order, seed=seed, samples=weak_samples, box=box)
    rng = np.random.default_rng(seed)
    report = []
    for k in range(min(max_order, bracket.truncation_order) + 1):
        images = {name: euler_op(bracket[k], name) for name in fields}
        point = random_jet_point(rng, max(image.max_order() for image in images.values()), max(samples, 20), box,
                                 fields)
        worst = {"u": 0.0, "v": 0.0}
        for name, image in images.items():
            worst[name] = float(np.max(np.abs(image.evaluate(point))))
        report.append(OrderResidual(k, worst["u"], worst["v"], weak[k] if k < len(weak) else 0.0))
        logger.debug(f"commutativity order {k}: E_u {worst['u']:.3e}, E_v {worst['v']:.3e}, weak {report[-1].weak:.3e}")
    return report


def weak_commutativity_residual(F: LocalFunctional, G: LocalFunctional, max_order: int, seed: int = 0,
                                samples: int = 4, box: Optional[Box] = None) -> List[float]:
    """
    Weak Euler images of each bracket order.

    For every eps order k the bracket density B_k is evaluated on random
    periodic fields; the directional derivative of int B_k dx along a random
    periodic direction equals int E_w(B_k) phi dx and is computed with a
    complex step, so no numerical differentiation enters.
    """
    scalar = _is_scalar(F, G)
    fields = ("u",) if scalar else ("u", "v")
    sampler = PeriodicFieldSampler(seed, samples, box, fields)
    dx = 2 * np.pi / sampler.nodes
    step = 1e-20
    report = []
    for k in range(min(max_order, F.truncation_order, G.truncation_order) + 1):
        pairs = [(a, b.total_x_derivative()) for a, b in _bracket_pairs(F, G, k)]
        need = max([max(a.max_order(), db.max_order()) for a, db in pairs], default=0)
        worst = 0.0
        for index in range(samples):
            for name in fields:
                point = sampler.point(index, need, direction=name, step=step)
                density = sum((a.evaluate(point) * db.evaluate(point) for a, db in pairs),
                              np.zeros(sampler.nodes, dtype=complex))
                worst = max(worst, abs(float(np.imag(np.sum(density)) * dx / step)))
        report.append(worst)
    return report
