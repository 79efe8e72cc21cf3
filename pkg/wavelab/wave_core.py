"""
The unperturbed wave system u_t = v_x, v_t = d/dx P'(u) and its hodograph solutions.

Conventions used throughout the package:

* a conserved density f(u, v) solves f_uu = P''(u) f_vv;
* the flow of a Hamiltonian density h is u_s = d/dx h_v, v_s = d/dx h_u;
* writing g = h_v, the hodograph solution is the critical point in (u, v) of
  phi = f - x u - s g, i.e. x + s h_uv = f_u and s h_vv = f_v.
"""

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy as sp
from numpy.polynomial import Chebyshev
from scipy import integrate, optimize

from wavelab.errors import (CatastropheError, ClassificationError, ConvergenceError, DensityError,
                            DomainError, FitError, QuadratureError)
from wavelab.expressions import U, V, to_numeric

logger = logging.getLogger(__name__)

HYPERBOLIC = "Hyperbolic"
ELLIPTIC = "Elliptic"
BOUNDARY = "Boundary"
POINT_TYPES = {HYPERBOLIC: "I", ELLIPTIC: "II", BOUNDARY: "III"}

W3_FIRST = "W3_first_catastrophe"
W2_NOT_FIRST = "W2_not_first"
TYPE_II_UMBILIC = "TypeII_umbilic"
NONGENERIC = "Nongeneric"

BOUNDARY_BAND = 1e-12
E14_SCALES = (1.0, 4.0, 16.0, 64.0, 256.0, 1024.0)


@functools.lru_cache(maxsize=None)
def _diff(expr: sp.Expr, i: int, j: int) -> sp.Expr:
    out = expr
    if i:
        out = sp.diff(out, U, i)
    if j:
        out = sp.diff(out, V, j)
    return out


def bundle_key(i: int, j: int, prefix: str = "f") -> str:
    return prefix if i == j == 0 else f"{prefix}_{'u' * i}{'v' * j}"


@dataclass(eq=False)
class Potential:
    """P(u) with exact derivatives, its domain and (optionally) closed-form Q."""

    name: str
    expr: sp.Expr
    domain: Tuple[float, float] = (-math.inf, math.inf)
    hyperbolic: Optional[Tuple[float, float]] = None
    Q: Optional[sp.Expr] = None
    Q_elliptic: Optional[sp.Expr] = None
    u_ref: float = 1.0
    box: Dict[str, Tuple[float, float]] = field(default_factory=lambda: {"u": (0.5, 1.5), "v": (-1.0, 1.0)})

    def derivative_expr(self, k: int) -> sp.Expr:
        return _diff(self.expr, k, 0)

    def derivative(self, k: int) -> Callable:
        return to_numeric(self.derivative_expr(k), (U,))

    def d(self, k: int, u):
        return self.derivative(k)(u)

    def __call__(self, u):
        return self.d(0, u)

    def contains(self, u: float) -> bool:
        lo, hi = self.domain
        return (lo == -math.inf or u > lo) and (hi == math.inf or u < hi)

    def check_derivatives(self, samples: int = 10, seed: int = 0, max_order: int = 4) -> float:
        """Worst relative mismatch between P^(k) and a 4th-order difference of P^(k-1)."""
        rng = np.random.default_rng(seed)
        lo, hi = self.box["u"]
        points = rng.uniform(lo, hi, samples)
        worst = 0.0
        for k in range(1, max_order + 1):
            lower, exact = self.derivative(k - 1), self.derivative(k)
            for u in points:
                step = 1e-3 * (1.0 + abs(u))
                fd = (-lower(u + 2 * step) + 8 * lower(u + step) - 8 * lower(u - step) + lower(u - 2 * step)) / (12 * step)
                value = float(np.real(exact(u)))
                worst = max(worst, abs(value - float(np.real(fd))) / (1.0 + abs(value)))
        return worst

    def is_nonlinear(self, samples: int = 50, seed: int = 0) -> bool:
        rng = np.random.default_rng(seed)
        lo, hi = self.box["u"]
        return bool(np.max(np.abs(self.d(3, rng.uniform(lo, hi, samples)))) > BOUNDARY_BAND)


@dataclass(eq=False)
class ConservedDensity:
    """
    A solution f(u, v) of f_uu = P''(u) f_vv.

    Either symbolic (``expr``) or a v-polynomial with Chebyshev coefficients in u
    (``series[k]`` multiplies v^k).
    """

    potential: Potential
    expr: Optional[sp.Expr] = None
    series: Optional[Tuple[Chebyshev, ...]] = None
    construction: str = "user"
    name: str = ""

    def __post_init__(self):
        if (self.expr is None) == (self.series is None):
            raise DensityError("a conserved density needs exactly one of expr or series", code="SEED")
        if self.expr is not None:
            self.expr = sp.sympify(self.expr)
        self._cache: Dict[Tuple[int, int], Callable] = {}

    def __getstate__(self):
        # lambdified partials do not pickle; workers rebuild them
        state = dict(self.__dict__)
        state["_cache"] = {}
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)

    @property
    def is_symbolic(self) -> bool:
        return self.expr is not None

    def partial_expr(self, i: int, j: int) -> sp.Expr:
        if not self.is_symbolic:
            raise DensityError(f"density '{self.name}' has no symbolic form", code="SEED")
        return _diff(self.expr, i, j)

    def partial(self, i: int, j: int) -> Callable:
        key = (i, j)
        if key not in self._cache:
            if self.is_symbolic:
                self._cache[key] = to_numeric(self.partial_expr(i, j), (U, V))
            else:
                self._cache[key] = self._series_partial(i, j)
        return self._cache[key]

    def _series_partial(self, i: int, j: int) -> Callable:
        terms = []
        for k, coeff in enumerate(self.series):
            if k < j:
                continue
            factor = math.factorial(k) / math.factorial(k - j)
            terms.append((k - j, factor, coeff.deriv(i) if i else coeff))

        def evaluate(u, v):
            u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
            total = np.zeros(u.shape)
            for power, factor, poly in terms:
                total = total + factor * poly(u) * v ** power
            return total if total.shape else float(total)

        return evaluate

    def __call__(self, u, v):
        return self.partial(0, 0)(u, v)

    def bundle(self, u: float, v: float, order: int = 4, prefix: str = "f", suffix: str = "") -> Dict[str, float]:
        out = {}
        for total in range(order + 1):
            for i in range(total + 1):
                out[bundle_key(i, total - i, prefix) + suffix] = float(np.real(self.partial(i, total - i)(u, v)))
        return out

    def chap1_residual(self, samples: int = 50, seed: int = 0, box=None) -> float:
        """max |f_uu - P'' f_vv| / (1 + max(|f_uu|, |P'' f_vv|)) over random points of the box."""
        box = box or self.potential.box
        rng = np.random.default_rng(seed)
        u = rng.uniform(*box["u"], samples)
        v = rng.uniform(*box["v"], samples)
        left = np.asarray(self.partial(2, 0)(u, v), dtype=float)
        right = np.asarray(self.potential.d(2, u) * self.partial(0, 2)(u, v), dtype=float)
        scale = 1.0 + max(np.max(np.abs(left)), np.max(np.abs(right)))
        return float(np.max(np.abs(left - right)) / scale)

    def check(self, tol: float = 1e-8, samples: int = 50, seed: int = 0, box=None) -> float:
        residual = self.chap1_residual(samples, seed, box)
        if residual >= tol:
            raise DensityError(
                f"density '{self.name or self.expr}' fails f_uu = P'' f_vv for {self.potential.name}: residual {residual:.3e}",
                residual=residual,
            )
        return residual

    def shifted(self, x_shift: float, s_shift: float, h: "ConservedDensity") -> "ConservedDensity":
        """f + x_shift * u + s_shift * h_v; moves catastrophes by (x_shift, s_shift)."""
        return ConservedDensity(self.potential, self.expr + x_shift * U + s_shift * h.partial_expr(0, 1),
                                construction=self.construction, name=f"{self.name}+shift")

    def scaled(self, factor: float) -> "ConservedDensity":
        return ConservedDensity(self.potential, factor * self.expr, construction=self.construction,
                                name=f"{factor}*{self.name}")


# riemann invariants

def classify_point(potential: Potential, u: float, band: float = BOUNDARY_BAND) -> str:
    if not potential.contains(u):
        raise DomainError(f"u = {u} outside the domain {potential.domain} of {potential.name}", u=u)
    p2 = float(potential.d(2, u))
    if abs(p2) < band:
        return BOUNDARY
    return HYPERBOLIC if p2 > 0 else ELLIPTIC


def _quadrature_Q(potential: Potential, u: float, elliptic: bool) -> float:
    sign = -1.0 if elliptic else 1.0
    value, _ = integrate.quad(lambda w: math.sqrt(max(sign * float(potential.d(2, w)), 0.0)),
                              potential.u_ref, u, epsabs=1e-13, epsrel=1e-13, limit=200)
    return value


def riemann_Q(potential: Potential, u, elliptic: bool = False):
    """Q with Q' = sqrt(P'') (or sqrt(-P'') in the elliptic domain)."""
    closed = potential.Q_elliptic if elliptic else potential.Q
    if closed is not None:
        return to_numeric(closed, (U,))(u)
    return np.vectorize(lambda w: _quadrature_Q(potential, float(w), elliptic))(u)


def riemann_invariants(potential: Potential, u, v):
    """(r_plus, r_minus) = v +- Q(u); complex conjugate pair in the elliptic domain."""
    u_arr = np.asarray(u, dtype=float)
    p2 = np.asarray(potential.d(2, u_arr), dtype=float)
    if np.any(np.abs(p2) < BOUNDARY_BAND):
        raise DomainError("P'' vanishes: Riemann invariants degenerate", code="BOUNDARY")
    if np.all(p2 > 0):
        Q = riemann_Q(potential, u_arr)
        return v + Q, v - Q
    if np.all(p2 < 0):
        Q = riemann_Q(potential, u_arr, elliptic=True)
        return v + 1j * Q, v - 1j * Q
    raise DomainError("points straddle the hyperbolic and elliptic domains", code="BOUNDARY")


def invert_riemann(potential: Potential, r_plus, r_minus):
    """(u, v) from real Riemann invariants; Q is inverted by bracketing on the hyperbolic interval."""
    v = 0.5 * (np.asarray(r_plus) + np.asarray(r_minus))
    q = 0.5 * (np.asarray(r_plus) - np.asarray(r_minus))
    lo, hi = potential.hyperbolic or potential.domain
    lo = -math.inf if lo is None else lo
    hi = math.inf if hi is None else hi

    def solve_one(target: float) -> float:
        a, b = potential.u_ref - 1.0, potential.u_ref + 1.0
        if math.isfinite(lo):
            a = max(a, lo + 1e-12)
        if math.isfinite(hi):
            b = min(b, hi - 1e-12)
        fn = lambda w: float(riemann_Q(potential, w)) - target
        for _ in range(200):
            if fn(a) <= 0 <= fn(b):
                return optimize.brentq(fn, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
            if fn(a) > 0:
                a = a - (b - a) if not math.isfinite(lo) else 0.5 * (a + lo)
            if fn(b) < 0:
                b = b + (b - a) if not math.isfinite(hi) else 0.5 * (b + hi)
        raise DomainError(f"cannot invert Q = {target} for {potential.name}")

    u = np.vectorize(solve_one)(q)
    return (float(u), float(v)) if np.ndim(u) == 0 else (u, v)


# symbolic v-power recursion

def symbolic_recursion(potential: Potential, top: sp.Expr, next_top: sp.Expr, N: int) -> sp.Expr:
    """f = sum_k f_k(u) v^k with f_k'' = (k+2)(k+1) P'' f_{k+2}, zero integration constants."""
    if N < 0:
        raise ValueError("N must be >= 0")
    coeffs = {N: sp.sympify(top)}
    if N >= 1:
        coeffs[N - 1] = sp.sympify(next_top)
    p2 = potential.derivative_expr(2)
    for k in range(N - 2, -1, -1):
        integrand = sp.expand((k + 2) * (k + 1) * p2 * coeffs[k + 2])
        once = sp.integrate(integrand, U)
        twice = sp.integrate(once, U)
        if twice.has(sp.Integral):
            raise QuadratureError(f"sympy cannot integrate {integrand} for {potential.name}")
        coeffs[k] = sp.expand(twice)
    return sp.expand(sum(coeffs[k] * V ** k for k in coeffs))


def _as_u_function(item) -> Callable:
    if callable(item) and not isinstance(item, sp.Basic):
        return lambda u: np.broadcast_to(np.asarray(item(u), dtype=float), np.shape(u)).copy()
    return to_numeric(sp.sympify(item), (U,))


def solve_conserved_density(potential: Potential, top: Tuple, N: int, u_range: Optional[Tuple[float, float]] = None,
                            degree: int = 64, anchor: float = 0.0) -> ConservedDensity:
    """
    Build f = sum_k f_k(u) v^k from the two top coefficients (f_N, f_{N-1}).

    Args:
        potential: the wave potential
        top: pair of u-functions or expressions (f_N, f_{N-1})
        N: top v-power
        u_range: interval of the Chebyshev u-grid (defaults to the potential's box)
        degree: Chebyshev degree of every coefficient
        anchor: lower limit of both quadratures
    """
    if N < 0:
        raise ValueError("N must be >= 0")
    domain = list(u_range or potential.box["u"])
    if not domain[0] <= anchor <= domain[1]:
        # the anchor must lie inside the interpolation interval
        domain = [min(domain[0], anchor), max(domain[1], anchor)]
    p2 = potential.derivative(2)
    series: Dict[int, Chebyshev] = {N: Chebyshev.interpolate(_as_u_function(top[0]), degree, domain)}
    if N >= 1:
        series[N - 1] = Chebyshev.interpolate(_as_u_function(top[1]), degree, domain)

    for k in range(N - 2, -1, -1):
        upper = series[k + 2]
        integrand = Chebyshev.interpolate(lambda u, up=upper, k=k: (k + 2) * (k + 1) * p2(u) * up(u), degree, domain)
        coef = integrand.coef
        scale = np.max(np.abs(coef)) if coef.size else 0.0
        if not np.all(np.isfinite(coef)) or (scale > 0 and np.max(np.abs(coef[-4:])) > 1e-8 * scale):
            raise QuadratureError(f"P'' f_{k + 2} is not resolved on {domain} for {potential.name}", order=k)
        series[k] = integrand.integ(2, lbnd=anchor)

    ordered = tuple(series.get(k, Chebyshev([0.0], domain=domain)) for k in range(N + 1))
    logger.debug(f"v-power recursion for {potential.name}: N={N}, degree={degree}, domain={domain}")
    return ConservedDensity(potential, series=ordered, construction="v-power-recursion", name=f"recursion_N{N}")


# hodograph

class HodographMap:
    """Partials of phi = f - x u - s g with g = h_v, and the induced s(u, v), x(u, v)."""

    def __init__(self, f: ConservedDensity, h: ConservedDensity):
        self.f = f
        self.h = h
        self.potential = f.potential

    def f_(self, i, j, u, v):
        return self.f.partial(i, j)(u, v)

    def g_(self, i, j, u, v):
        return self.h.partial(i, j + 1)(u, v)

    def phi(self, i, j, u, v, x, s):
        value = self.f_(i, j, u, v) - s * self.g_(i, j, u, v)
        if (i, j) == (1, 0):
            value = value - x
        elif (i, j) == (0, 0):
            value = value - x * u
        return value

    def s_of(self, u, v):
        return self.f_(0, 1, u, v) / self.g_(0, 1, u, v)

    def x_of(self, u, v, s=None):
        s = self.s_of(u, v) if s is None else s
        return self.f_(1, 0, u, v) - s * self.g_(1, 0, u, v)

    def hessian(self, u, v, s):
        return (self.phi(2, 0, u, v, 0.0, s), self.phi(1, 1, u, v, 0.0, s), self.phi(0, 2, u, v, 0.0, s))

    def det(self, u, v):
        A, B, C = self.hessian(u, v, self.s_of(u, v))
        return A * C - B * B

    def det_gradient(self, u, v):
        s = self.s_of(u, v)
        gv = self.g_(0, 1, u, v)
        A, B, C = self.hessian(u, v, s)
        s_u, s_v = B / gv, C / gv
        p = lambda i, j: self.phi(i, j, u, v, 0.0, s)
        g = lambda i, j: self.g_(i, j, u, v)
        A_u, B_u, C_u = p(3, 0) - s_u * g(2, 0), p(2, 1) - s_u * g(1, 1), p(1, 2) - s_u * g(0, 2)
        A_v, B_v, C_v = p(2, 1) - s_v * g(2, 0), p(1, 2) - s_v * g(1, 1), p(0, 3) - s_v * g(0, 2)
        return A_u * C + A * C_u - 2 * B * B_u, A_v * C + A * C_v - 2 * B * B_v

    def s_gradient(self, u, v):
        s = self.s_of(u, v)
        gv = self.g_(0, 1, u, v)
        return self.phi(1, 1, u, v, 0.0, s) / gv, self.phi(0, 2, u, v, 0.0, s) / gv


def hodograph_residual(f: ConservedDensity, h: ConservedDensity, x: float, s: float, u: float, v: float) -> float:
    hmap = HodographMap(f, h)
    return max(abs(hmap.phi(1, 0, u, v, x, s)), abs(hmap.phi(0, 1, u, v, x, s)))


def hodograph_solve(f: ConservedDensity, h: ConservedDensity, x: float, s: float, guess: Tuple[float, float],
                    tol: float = 1e-12, max_iter: int = 60, singular_tol: float = 1e-13) -> Tuple[float, float]:
    """Newton iteration for x + s h_uv = f_u, s h_vv = f_v."""
    hmap = HodographMap(f, h)
    u, v = float(guess[0]), float(guess[1])
    for iteration in range(max_iter):
        F = np.array([hmap.phi(1, 0, u, v, x, s), hmap.phi(0, 1, u, v, x, s)], dtype=float)
        if np.max(np.abs(F)) < tol:
            return u, v
        A, B, C = hmap.hessian(u, v, s)
        det = A * C - B * B
        if abs(det) < singular_tol:
            raise ConvergenceError(f"singular hodograph Jacobian at x={x}, s={s} (det={det:.2e})",
                                   code="SINGULAR_JACOBIAN", x=x, s=s, u=u, v=v)
        du = (C * F[0] - B * F[1]) / det
        dv = (A * F[1] - B * F[0]) / det
        u, v = u - du, v - dv
        if not (np.isfinite(u) and np.isfinite(v)):
            break
    raise ConvergenceError(f"hodograph Newton did not converge at x={x}, s={s} after {max_iter} iterations",
                           x=x, s=s)


@dataclass
class Slice:
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray


def unperturbed_slice(f: ConservedDensity, h: ConservedDensity, s: float, u_values: Sequence[float],
                      v_guess: float, tol: float = 1e-13) -> Slice:
    """The solution at time s traced along phi_v = 0, parametrized by u."""
    hmap = HodographMap(f, h)
    u_values = np.asarray(u_values, dtype=float)
    start = int(np.argmin(np.abs(u_values - u_values[len(u_values) // 2])))
    v_out = np.empty_like(u_values)

    def solve_v(u, guess):
        return optimize.newton(lambda w: hmap.phi(0, 1, u, w, 0.0, s), guess,
                               fprime=lambda w: hmap.phi(0, 2, u, w, 0.0, s), tol=tol, maxiter=80)

    v_out[start] = solve_v(u_values[start], v_guess)
    for idx in range(start + 1, len(u_values)):
        v_out[idx] = solve_v(u_values[idx], v_out[idx - 1])
    for idx in range(start - 1, -1, -1):
        v_out[idx] = solve_v(u_values[idx], v_out[idx + 1])
    x = np.asarray(hmap.x_of(u_values, v_out, s), dtype=float)
    order = np.argsort(x)
    return Slice(x[order], u_values[order], v_out[order])


def hodograph_stencil(f: ConservedDensity, h: ConservedDensity, x: float, s: float, guess, step: float = 1e-3) -> Dict:
    """Centered 5-point differences of the hodograph solution in x and s."""
    center = hodograph_solve(f, h, x, s, guess)
    pts = {}
    for name, dx, ds in (("xp", step, 0), ("xm", -step, 0), ("sp", 0, step), ("sm", 0, -step)):
        pts[name] = np.array(hodograph_solve(f, h, x + dx, s + ds, center))
    return {
        "center": np.array(center),
        "d_x": (pts["xp"] - pts["xm"]) / (2 * step),
        "d_s": (pts["sp"] - pts["sm"]) / (2 * step),
        "points": pts,
        "step": step,
    }


def flow_residual(f: ConservedDensity, h: ConservedDensity, x: float, s: float, guess, step: float = 1e-3) -> float:
    """|u_s - d/dx h_v| + |v_s - d/dx h_u| on a centered stencil."""
    st = hodograph_stencil(f, h, x, s, guess, step)
    u, v = st["center"]
    u_x, v_x = st["d_x"]
    u_s, v_s = st["d_s"]
    hp = h.partial
    hv_x = hp(1, 1)(u, v) * u_x + hp(0, 2)(u, v) * v_x
    hu_x = hp(2, 0)(u, v) * u_x + hp(1, 1)(u, v) * v_x
    return float(max(abs(u_s - hv_x), abs(v_s - hu_x)))


def characteristic_residual(f: ConservedDensity, h: ConservedDensity, x: float, s: float, guess,
                            step: float = 1e-3) -> float:
    """r_s - lambda r_x for both Riemann invariants, lambda_pm = h_uv +- sqrt(P'') h_vv."""
    st = hodograph_stencil(f, h, x, s, guess, step)
    potential = f.potential
    u, v = st["center"]
    c = math.sqrt(float(potential.d(2, u)))
    lam = {"+": h.partial(1, 1)(u, v) + c * h.partial(0, 2)(u, v),
           "-": h.partial(1, 1)(u, v) - c * h.partial(0, 2)(u, v)}
    r = {name: np.array(riemann_invariants(potential, p[0], p[1])) for name, p in st["points"].items()}
    r_x = (r["xp"] - r["xm"]) / (2 * step)
    r_s = (r["sp"] - r["sm"]) / (2 * step)
    return float(max(abs(r_s[0] - lam["+"] * r_x[0]), abs(r_s[1] - lam["-"] * r_x[1])))


# catastrophes

@dataclass
class CriticalPoint:
    x_c: float
    t_c: float
    u_c: float
    v_c: float
    type: str
    sigma: int = 0
    flags: Dict[str, bool] = field(default_factory=dict)
    bundle: Dict[str, float] = field(default_factory=dict)
    constants: Dict[str, object] = field(default_factory=dict)

    def to_json(self) -> Dict:
        def encode(value):
            if isinstance(value, complex):
                return {"re": value.real, "im": value.imag}
            return value

        return {
            "x_c": self.x_c, "t_c": self.t_c, "u_c": self.u_c, "v_c": self.v_c,
            "type": self.type, "sigma": self.sigma, "flags": dict(self.flags),
            "bundle": {k: encode(v) for k, v in self.bundle.items()},
            "constants": {k: encode(v) for k, v in self.constants.items()},
        }


def critical_bundle(f: ConservedDensity, h: ConservedDensity, u: float, v: float, x: float, s: float,
                    order: int = 4) -> Dict[str, float]:
    """phi-derivatives at the point (named f_*0), plus g = h_v, h and P derivatives."""
    hmap = HodographMap(f, h)
    out = {}
    for total in range(order + 1):
        for i in range(total + 1):
            j = total - i
            out[bundle_key(i, j) + "0"] = float(np.real(hmap.phi(i, j, u, v, x, s)))
            out[bundle_key(i, j, "g") + "0"] = float(np.real(hmap.g_(i, j, u, v)))
    out["h_u0"] = float(h.partial(1, 0)(u, v))
    out["h_v0"] = float(h.partial(0, 1)(u, v))
    for k in range(order + 1):
        out[f"P0_{k}"] = float(np.real(f.potential.d(k, u)))
    return out


def _point(hmap: HodographMap, u: float, v: float, order: int = 4) -> CriticalPoint:
    s = float(hmap.s_of(u, v))
    x = float(hmap.x_of(u, v, s))
    kind = POINT_TYPES[classify_point(hmap.potential, u)]
    bundle = critical_bundle(hmap.f, hmap.h, u, v, x, s, order)
    sigma = 0
    if kind == "I":
        c = math.sqrt(bundle["P0_2"])
        sigma = 1 if bundle["f_uv0"] * bundle["f_vv0"] * c >= 0 else -1
    return CriticalPoint(x, s, float(u), float(v), kind, sigma, {}, bundle)


def _fold_crossings(hmap: HodographMap, box, grid: int, s_min: float) -> List[Tuple[float, float]]:
    us = np.linspace(*box["u"], grid)
    vs = np.linspace(*box["v"], grid)
    UU, VV = np.meshgrid(us, vs, indexing="ij")
    with np.errstate(all="ignore"):
        D = np.asarray(hmap.det(UU, VV), dtype=float)
        S = np.asarray(hmap.s_of(UU, VV), dtype=float)
    ok = np.isfinite(D) & np.isfinite(S) & (S >= s_min)
    points = []
    for axis in (0, 1):
        a = D[:-1, :] if axis == 0 else D[:, :-1]
        b = D[1:, :] if axis == 0 else D[:, 1:]
        oka = ok[:-1, :] & ok[1:, :] if axis == 0 else ok[:, :-1] & ok[:, 1:]
        idx = np.argwhere(oka & (np.sign(a) != np.sign(b)))
        for i, j in idx:
            da, db = a[i, j], b[i, j]
            w = da / (da - db)
            if axis == 0:
                points.append((us[i] + w * (us[i + 1] - us[i]), vs[j]))
            else:
                points.append((us[i], vs[j] + w * (vs[j + 1] - vs[j])))
    return points


def _project_to_fold(hmap: HodographMap, p: np.ndarray, steps: int = 8) -> np.ndarray:
    for _ in range(steps):
        d = hmap.det(p[0], p[1])
        gu, gv = hmap.det_gradient(p[0], p[1])
        norm = gu * gu + gv * gv
        if norm == 0:
            break
        p = p - d * np.array([gu, gv]) / norm
    return p


def fold_is_minimum(hmap: HodographMap, u: float, v: float, step: float = 1e-3) -> bool:
    """s restricted to det = 0 has a local minimum at (u, v)."""
    gu, gv = hmap.det_gradient(u, v)
    tangent = np.array([-gv, gu]) / math.hypot(gu, gv)
    s0 = hmap.s_of(u, v)
    for sign in (1.0, -1.0):
        p = _project_to_fold(hmap, np.array([u, v]) + sign * step * tangent)
        if not hmap.s_of(p[0], p[1]) > s0:
            return False
    return True


def _polish_fold(hmap: HodographMap, start) -> Optional[np.ndarray]:
    def equations(p):
        d = hmap.det(p[0], p[1])
        du, dv = hmap.det_gradient(p[0], p[1])
        su, sv = hmap.s_gradient(p[0], p[1])
        return [d, su * dv - sv * du]

    sol = optimize.root(equations, np.asarray(start, dtype=float), method="hybr", options={"xtol": 1e-14})
    if not sol.success or np.max(np.abs(equations(sol.x))) > 1e-9:
        return None
    return sol.x


def _polish_umbilic(hmap: HodographMap, start) -> Optional[np.ndarray]:
    def equations(p):
        s = hmap.s_of(p[0], p[1])
        return [hmap.phi(1, 1, p[0], p[1], 0.0, s), hmap.phi(0, 2, p[0], p[1], 0.0, s)]

    sol = optimize.root(equations, np.asarray(start, dtype=float), method="hybr", options={"xtol": 1e-14})
    if not sol.success or np.max(np.abs(equations(sol.x))) > 1e-9:
        return None
    return sol.x


def _in_box(p, box) -> bool:
    return box["u"][0] <= p[0] <= box["u"][1] and box["v"][0] <= p[1] <= box["v"][1]


def locate_catastrophe(f: ConservedDensity, h: ConservedDensity, search_box, s_min: float = 0.0,
                       grid: int = 121, max_starts: int = 12, select: Optional[int] = None) -> CriticalPoint:
    """
    First gradient catastrophe of the hodograph solution inside ``search_box``.

    Type I points are minima of s along the fold det = 0; Type II points (elliptic
    domain) are zeros of the whole Hessian of phi.
    """
    hmap = HodographMap(f, h)
    center_u = 0.5 * sum(search_box["u"])
    elliptic = classify_point(f.potential, center_u) == ELLIPTIC
    found: List[np.ndarray] = []

    if not elliptic:
        crossings = _fold_crossings(hmap, search_box, grid, s_min)
        if not crossings:
            raise CatastropheError(f"det does not vanish in {search_box}", code="NOT_FOUND")
        crossings.sort(key=lambda p: hmap.s_of(*p))
        cell = max(np.ptp(search_box["u"]), np.ptp(search_box["v"])) / (grid - 1)
        # walk the crossings in order of s until max_starts distinct in-box fold points are polished
        tried: List[Tuple[float, float]] = []
        polished: List[np.ndarray] = []
        for start in crossings:
            if any(math.hypot(start[0] - q[0], start[1] - q[1]) <= 2 * cell for q in tried):
                continue
            tried.append(start)
            p = _polish_fold(hmap, start)
            if p is None or not _in_box(p, search_box) or hmap.s_of(*p) < s_min:
                continue
            if any(np.max(np.abs(p - q)) <= 1e-6 for q in polished):
                continue
            polished.append(p)
            if fold_is_minimum(hmap, p[0], p[1], step=2 * cell):
                found.append(p)
            if len(polished) >= max_starts:
                break
    else:
        us = np.linspace(*search_box["u"], grid)
        vs = np.linspace(*search_box["v"], grid)
        UU, VV = np.meshgrid(us, vs, indexing="ij")
        with np.errstate(all="ignore"):
            S = hmap.s_of(UU, VV)
            _, B, C = hmap.hessian(UU, VV, S)
            q = np.asarray(B * B + C * C, dtype=float)
        q[~np.isfinite(q) | (np.asarray(S) < s_min)] = np.inf
        for flat in np.argsort(q, axis=None)[:max_starts]:
            i, j = np.unravel_index(flat, q.shape)
            p = _polish_umbilic(hmap, (us[i], vs[j]))
            if p is not None and _in_box(p, search_box) and hmap.s_of(*p) >= s_min:
                found.append(p)

    unique: List[np.ndarray] = []
    for p in found:
        if all(np.max(np.abs(p - q)) > 1e-6 for q in unique):
            unique.append(p)
    if not unique:
        raise CatastropheError(f"no first catastrophe inside {search_box}", code="NOT_FOUND")

    candidates = sorted((_point(hmap, p[0], p[1]) for p in unique), key=lambda cp: cp.t_c)
    if select is not None:
        return candidates[select]
    if len(candidates) > 1 and abs(candidates[1].t_c - candidates[0].t_c) < 1e-6:
        logger.warning(f"⚠️ {len(candidates)} first-catastrophe candidates at s = {candidates[0].t_c:.9f}")
        raise CatastropheError("several first-catastrophe candidates at the same time; select one by index",
                               code="MULTIPLE", candidates=candidates)
    cp = candidates[0]
    logger.info(f"✅ Catastrophe type {cp.type} at x_c={cp.x_c:.8f}, t_c={cp.t_c:.8f}, u_c={cp.u_c:.8f}, v_c={cp.v_c:.8f}")
    return cp


# classification

TYPE_I_KEYS = [bundle_key(i, t - i) + "0" for t in range(2, 5) for i in range(t + 1)]


def kernel_invariants(bundle: Dict[str, float], sigma: int) -> Dict[str, float]:
    """Generic gates at a Type I point with kernel k = (1, -sigma c), c = sqrt(P0'')."""
    c = math.sqrt(bundle["P0_2"])
    k = (1.0, -sigma * c)
    d = lambda i, j: bundle[bundle_key(i, j) + "0"]

    def form(order, vectors):
        total = 0.0
        # symmetric multilinear form from the partials
        for combo in np.ndindex(*([2] * order)):
            i = sum(1 for a in combo if a == 0)
            weight = 1.0
            for a, vec in zip(combo, vectors):
                weight *= vec[a]
            total += weight * d(i, order - i)
        return total

    e_v = (0.0, 1.0)
    e11 = d(1, 1) + sigma * c * d(0, 2)
    e12 = d(1, 2) - sigma * c * d(0, 3) + bundle["P0_3"] * d(0, 2) / (4 * bundle["P0_2"])
    cubic = form(3, [k, k, e_v])
    e14 = form(4, [k, k, k, k]) - 3 * cubic * cubic / d(0, 2) if d(0, 2) != 0 else math.nan
    return {"E11": e11, "E12": e12, "E14": e14, "fold": d(1, 1) - sigma * c * d(0, 2)}


def boussinesq_frame(potential: Potential) -> int:
    """+1 for P'' = u, -1 for P'' = -u, 0 otherwise."""
    p2 = sp.simplify(potential.derivative_expr(2))
    if sp.simplify(p2 - U) == 0:
        return 1
    if sp.simplify(p2 + U) == 0:
        return -1
    return 0


def canonical_bundle(cp: CriticalPoint, potential: Potential) -> Tuple[Dict[str, float], Dict[str, bool]]:
    """Bundle in the P'' = u frame with sigma = +1; records the reflections used."""
    frame = boussinesq_frame(potential)
    if frame == 0:
        raise ClassificationError(f"{potential.name} is not in the Boussinesq family", code="NONGENERIC")
    bundle = dict(cp.bundle)
    flips = {"u_reflected": frame == -1, "v_reflected": False}

    def transform(u_sign: int, v_sign_odd: bool):
        out = dict(bundle)
        for key, value in bundle.items():
            if not (key.startswith("f") or key.startswith("g")) or "_" not in key:
                continue
            letters = key.split("_", 1)[1].rstrip("0")
            i, j = letters.count("u"), letters.count("v")
            factor = u_sign ** i
            if v_sign_odd:
                factor *= -((-1) ** j)
            out[key] = factor * value
        return out

    if frame == -1:
        bundle = transform(-1, False)
        for key in [k for k in bundle if k.startswith("P0_")]:
            bundle[key] *= (-1) ** int(key.split("_")[1])
        bundle["h_u0"] = -bundle["h_u0"]
    c = math.sqrt(bundle["P0_2"])
    if bundle["f_uv0"] * bundle["f_vv0"] * c < 0:
        bundle = transform(1, True)
        bundle["h_v0"] = -bundle["h_v0"]
        flips["v_reflected"] = True
    return bundle, flips


def boussinesq_A0_B0(bundle: Dict[str, float]) -> Tuple[float, float]:
    """A0 and B0 in the P'' = u, sigma = +1 frame."""
    u = bundle["P0_2"]
    su = math.sqrt(u)
    A0 = bundle["g_vv0"] / (2 * bundle["g_v0"]) - bundle["g_uv0"] / (2 * su * bundle["g_v0"]) - 1 / (8 * u ** 1.5)
    B0 = (5 * bundle["f_vv0"] / (32 * u ** 2.5) + bundle["f_vvv0"] / (4 * u)
          - su * bundle["f_vvvv0"] + bundle["f_uvvv0"]) / 6
    return A0, B0


def classify_singularity(cp: CriticalPoint, f: ConservedDensity, h: ConservedDensity, tol: float = 1e-7) -> str:
    if cp.type == "I":
        missing = [k for k in TYPE_I_KEYS + ["P0_2", "P0_3"] if k not in cp.bundle]
        if missing:
            raise ClassificationError(f"derivative bundle lacks {missing}")
        scale = 1.0 + max(abs(cp.bundle[k]) for k in TYPE_I_KEYS)
        inv = kernel_invariants(cp.bundle, cp.sigma or 1)
        cp.flags.update({"generic11": abs(inv["E11"]) > tol * scale})
        cp.constants.update({"E12": inv["E12"], "E14": inv["E14"]})
        if not cp.flags["generic11"]:
            cp.flags["nongeneric"] = True
            return NONGENERIC
        if abs(inv["E12"]) > tol * scale:
            cp.flags["w2_only"] = True
            return W2_NOT_FIRST
        generic14 = math.isfinite(inv["E14"]) and abs(inv["E14"]) > tol * scale
        generic13 = True
        if boussinesq_frame(f.potential) != 0:
            bundle, _ = canonical_bundle(cp, f.potential)
            A0, B0 = boussinesq_A0_B0(bundle)
            cp.constants.update({"A0": A0, "B0": B0})
            generic13 = abs(A0 * B0) > tol
        cp.flags.update({"generic13": generic13, "generic14": generic14})
        if generic13 and generic14:
            cp.flags["generic_w3"] = True
            return W3_FIRST
        cp.flags["nongeneric"] = True
        return NONGENERIC

    if cp.type == "II":
        keys = [bundle_key(i, t - i) + "0" for t in range(2, 4) for i in range(t + 1)]
        missing = [k for k in keys + ["P0_2"] if k not in cp.bundle]
        if missing:
            raise ClassificationError(f"derivative bundle lacks {missing}")
        third = [cp.bundle[bundle_key(i, 3 - i) + "0"] for i in range(4)]
        if max(abs(t) for t in third) <= tol:
            cp.flags["nongeneric"] = True
            return NONGENERIC
        c0 = math.sqrt(-cp.bundle["P0_2"])
        cp.constants["a0"] = complex(cp.bundle["f_uvv0"], c0 * cp.bundle["f_vvv0"])
        return TYPE_II_UMBILIC

    raise ClassificationError("boundary (Type III) points are not classified", code="NONGENERIC")


# constructed instances

def _condition_rows(kind: str, potential: Potential, u_c: float):
    """Linear functionals on phi-derivatives: list of (name, {(i, j): weight})."""
    p2 = float(potential.d(2, u_c))
    p3 = float(potential.d(3, u_c))
    rows = [("phi_u", {(1, 0): 1.0}), ("phi_v", {(0, 1): 1.0})]
    if kind == "I":
        c = math.sqrt(p2)
        rows.append(("fold", {(1, 1): 1.0, (0, 2): -c}))
        rows.append(("E12", {(1, 2): 1.0, (0, 3): -c, (0, 2): p3 / (4 * p2)}))
        rows.append(("norm", {(0, 2): 1.0}))
        quartic = {}
        for a in range(5):
            key = (4 - a, a)
            quartic[key] = quartic.get(key, 0.0) + math.comb(4, a) * (-c) ** a
        quartic[(0, 2)] = quartic.get((0, 2), 0.0) - 3 * p3 * p3 / (4 * p2)
        rows.append(("E14", quartic))
    else:
        c0 = math.sqrt(-p2)
        rows.append(("phi_uv", {(1, 1): 1.0}))
        rows.append(("phi_vv", {(0, 2): 1.0}))
        rows.append(("a0_re", {(1, 2): 1.0}))
        rows.append(("a0_im", {(0, 3): c0}))
    return rows


def construct_critical_density(potential: Potential, h: ConservedDensity, u_c: float, v_c: float,
                               x_c: float = 0.0, s_c: float = 1.0, kind: str = "I", e14: float = 1.0,
                               a0: complex = 1.0 + 0.5j, norm: float = 1.0, max_degree: int = 6,
                               search_box=None, s_min: float = 0.0) -> ConservedDensity:
    """
    A polynomial-recursion density whose hodograph solution has a prescribed
    first catastrophe at (x_c, s_c, u_c, v_c).

    With a ``search_box`` a Type I construction also rejects densities whose
    fold dips below s_c elsewhere in the box, growing the quartic condition
    through ``E14_SCALES`` until none does.
    """
    point_type = classify_point(potential, u_c)
    if (kind == "I") != (point_type == HYPERBOLIC):
        raise DomainError(f"Type {kind} point requested at u_c = {u_c}, which is {point_type}")

    basis = []
    for N in range(1, max_degree + 1):
        for j in (0, 1):
            basis.append(symbolic_recursion(potential, U ** j, 0, N))
    rows = _condition_rows(kind, potential, u_c)

    g_expr = h.partial_expr(0, 1)
    g_part = lambda i, j: float(to_numeric(_diff(g_expr, i, j), (U, V))(u_c, v_c))

    def rhs_for(sign_e14: float):
        targets = {"norm": norm, "E14": sign_e14 * e14, "a0_re": complex(a0).real, "a0_im": complex(a0).imag}
        out = []
        for name, weights in rows:
            value = targets.get(name, 0.0)
            for (i, j), w in weights.items():
                value += w * s_c * g_part(i, j)
                if (i, j) == (1, 0):
                    value += w * x_c
            out.append(value)
        return np.array(out)

    matrix = np.array([[sum(w * float(to_numeric(_diff(b, i, j), (U, V))(u_c, v_c)) for (i, j), w in weights.items())
                        for b in basis] for _, weights in rows])

    scales = E14_SCALES if kind == "I" and search_box is not None else (1.0,)
    for scale in scales:
        for sign in (1.0, -1.0):
            rhs = rhs_for(sign * scale)
            coeffs, *_ = np.linalg.lstsq(matrix, rhs, rcond=None)
            if np.max(np.abs(matrix @ coeffs - rhs)) > 1e-9 * (1 + np.max(np.abs(rhs))):
                raise DensityError(f"basis of degree {max_degree} cannot meet the Type {kind} conditions", code="SEED")
            expr = sp.Add(*[sp.Float(float(a), 17) * b for a, b in zip(coeffs, basis) if abs(a) > 1e-15])
            density = ConservedDensity(potential, expr, construction="catalog", name=f"critical_{kind}")
            if kind != "I":
                return density
            hmap = HodographMap(density, h)
            if not fold_is_minimum(hmap, u_c, v_c):
                logger.debug("constructed fold point is a maximum of s; flipping the quartic sign")
                continue
            if search_box is None:
                return density
            dip = _fold_dip(hmap, search_box, s_min)
            if dip >= s_c - 1e-3 * max(1.0, abs(s_c)):
                if scale != 1.0:
                    logger.info(f"📊 quartic condition rescaled by {scale:g} to keep s = {s_c} first in the box")
                return density
            logger.debug(f"fold reaches s = {dip:.6f} < {s_c} inside {search_box} at E14 scale {scale:g}")
    if kind == "I" and search_box is not None:
        raise DensityError(f"no quartic scaling keeps s = {s_c} the first catastrophe inside {search_box}",
                           code="SEED")
    raise DensityError("constructed Type I point is not a minimum of s along the fold", code="SEED")


def _fold_dip(hmap: HodographMap, box, s_min: float, grid: int = 61) -> float:
    """Lowest s among the fold crossings of a grid over the box."""
    crossings = _fold_crossings(hmap, box, grid, s_min)
    if not crossings:
        return math.inf
    return min(float(hmap.s_of(*p)) for p in crossings)


# local shapes

@dataclass
class ShapeFit:
    exponent: float
    stderr: float
    samples: int


def power_law_fit(scale, amplitude) -> ShapeFit:
    """Slope of log(amplitude) against log(scale)."""
    x = np.log(np.asarray(scale, dtype=float))
    y = np.log(np.asarray(amplitude, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    dof = max(len(x) - 2, 1)
    stderr = math.sqrt(np.sum(resid ** 2) / dof / np.sum((x - x.mean()) ** 2))
    return ShapeFit(float(slope), float(stderr), len(x))


def local_shape_fit(cp: CriticalPoint, f: ConservedDensity, h: ConservedDensity,
                    ladder: Optional[Sequence[float]] = None, angle: float = 0.3) -> ShapeFit:
    """Exponent of |field - field_c| against |coordinate - coordinate_c| near the point."""
    hmap = HodographMap(f, h)
    ladder = np.geomspace(1e-4, 1e-2, 12) if ladder is None else np.asarray(ladder, dtype=float)
    scales, amps = [], []
    if cp.type == "II":
        c0 = math.sqrt(-float(f.potential.d(2, cp.u_c)))
        for d in ladder:
            u, v = cp.u_c + d * math.cos(angle), cp.v_c + d * math.sin(angle)
            s = hmap.s_of(u, v)
            x = hmap.x_of(u, v, s)
            w = abs(complex(v - cp.v_c, c0 * (u - cp.u_c)))
            z = math.hypot(x - cp.x_c, s - cp.t_c)
            scales.append(z)
            amps.append(w)
    else:
        for d in ladder:
            for sign in (1.0, -1.0):
                u = cp.u_c + sign * d
                try:
                    v = optimize.newton(lambda w: hmap.phi(0, 1, u, w, 0.0, cp.t_c), cp.v_c,
                                        fprime=lambda w: hmap.phi(0, 2, u, w, 0.0, cp.t_c), tol=1e-15, maxiter=80)
                except RuntimeError:
                    continue
                x = hmap.x_of(u, v, cp.t_c)
                scales.append(abs(x - cp.x_c))
                amps.append(d)
    pairs = [(s, a) for s, a in zip(scales, amps) if np.isfinite(s) and s > 1e-14 and a > 0]
    if len(pairs) < 8:
        raise FitError(f"only {len(pairs)} usable samples for the local shape fit", usable=len(pairs))
    fit = power_law_fit([p[0] for p in pairs], [p[1] for p in pairs])
    logger.debug(f"local shape exponent {fit.exponent:.4f} +- {fit.stderr:.1e} ({fit.samples} samples)")
    return fit
