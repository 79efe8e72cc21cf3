"""
Multicomponent diagonal systems u_i,t = a_i(u) u_i,x.

Covers the semihamiltonian condition, the symmetry equations for a given set of
commuting velocities A_i, the generalized hodograph x = a_i(u) t + A_i(u), and
the cubic normal form near a generic multicomponent catastrophe. All partial
derivatives are taken with fourth-order central stencils, improved by one
Richardson step.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from wavelab.errors import ClassificationError, ConvergenceError, SemihamError
from wavelab.expressions import parse_expression, state_symbols, to_numeric
from wavelab.wave_core import ConservedDensity, invert_riemann, power_law_fit, riemann_invariants

logger = logging.getLogger(__name__)

COINCIDENT_TOL = 1e-10

# stencil step per derivative order
STEPS = {1: 1e-3, 2: 5e-3, 3: 1e-2}

Box = List[Tuple[float, float]]


def _stencil(fn: Callable, u: np.ndarray, j: int, h: float) -> float:
    e = np.zeros_like(u)
    e[j] = h
    return (-fn(u + 2 * e) + 8 * fn(u + e) - 8 * fn(u - e) + fn(u - 2 * e)) / (12 * h)


def partial(fn: Callable, u, index: Sequence[int], h: Optional[float] = None, richardson: bool = True) -> float:
    """Mixed partial of fn at u; ``index`` lists the differentiation variables, e.g. (n, n, i)."""
    u = np.asarray(u, dtype=float)
    if not index:
        return float(fn(u))
    h = h or STEPS.get(len(index), 1e-2)

    def nested(step):
        def inner(w, rest=tuple(index[1:])):
            return partial(fn, w, rest, step, richardson=False) if rest else float(fn(w))
        return _stencil(inner, u, index[0], step)

    coarse = nested(h)
    if not richardson:
        return coarse
    fine = nested(h / 2)
    return (16 * fine - coarse) / 15


@dataclass(eq=False)
class DiagonalSystem:
    """
    n characteristic velocities a_i(u) and optionally n symmetry velocities A_i(u).

    Every callable takes the state as an array of shape (n,) and returns a float.
    """

    n: int
    a: List[Callable]
    A: Optional[List[Callable]] = None
    box: Optional[Box] = None
    names: Tuple[str, ...] = ()
    expressions: Dict[str, List[str]] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.a) != self.n or (self.A is not None and len(self.A) != self.n):
            raise ValueError(f"expected {self.n} velocity functions")
        self.box = self.box or [(0.0, 1.0)] * self.n
        self.names = self.names or tuple(f"u{i + 1}" for i in range(self.n))

    @classmethod
    def from_expressions(cls, a: Sequence[str], A: Optional[Sequence[str]] = None, box: Optional[Box] = None,
                         params: Optional[Dict[str, float]] = None) -> "DiagonalSystem":
        """Velocities as expressions in u1..un."""
        n = len(a)
        names = tuple(f"u{i + 1}" for i in range(n))
        symbols = [state_symbols(names)[name] for name in names]

        def compile_all(texts):
            fns = []
            for text in texts:
                numeric = to_numeric(parse_expression(text, names, params), symbols)
                fns.append(lambda w, fn=numeric: float(np.real(fn(*w))))
            return fns

        expressions = {"a": list(a)}
        if A is not None:
            expressions["A"] = list(A)
        return cls(n, compile_all(a), compile_all(A) if A is not None else None, box, names, expressions)

    def speeds(self, u) -> np.ndarray:
        return np.array([fn(u) for fn in self.a])

    def symmetries(self, u) -> np.ndarray:
        self._need_symmetries()
        return np.array([fn(u) for fn in self.A])

    def a_(self, i: int, index: Sequence[int], u) -> float:
        return partial(self.a[i], u, index)

    def A_(self, i: int, index: Sequence[int], u) -> float:
        self._need_symmetries()
        return partial(self.A[i], u, index)

    def check_distinct(self, u) -> None:
        speeds = self.speeds(u)
        for i, j in itertools.combinations(range(self.n), 2):
            if abs(speeds[i] - speeds[j]) < COINCIDENT_TOL:
                raise SemihamError(f"a_{i + 1} = a_{j + 1} at u = {np.round(u, 6).tolist()}", point=str(list(u)))

    def sample(self, samples: int, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        lo = np.array([b[0] for b in self.box])
        hi = np.array([b[1] for b in self.box])
        return lo + (hi - lo) * rng.uniform(size=(samples, self.n))

    def _need_symmetries(self):
        if self.A is None:
            raise SemihamError("the system carries no symmetry velocities A_i", code="CONFIG_INVALID")


def check_semihamiltonian(system: DiagonalSystem, samples: int = 20, seed: int = 0) -> float:
    """max |d_k(a_i,j / (a_i - a_j)) - d_j(a_i,k / (a_i - a_k))| over samples and distinct triples."""
    if system.n < 3:
        return 0.0

    def ratio(i, j):
        return lambda w: partial(system.a[i], w, (j,), 1e-4, richardson=False) / (system.a[i](w) - system.a[j](w))

    worst = 0.0
    for u in system.sample(samples, seed):
        system.check_distinct(u)
        for i, j, k in itertools.permutations(range(system.n), 3):
            if j > k:
                continue
            left = partial(ratio(i, j), u, (k,), 1e-3, richardson=False)
            right = partial(ratio(i, k), u, (j,), 1e-3, richardson=False)
            worst = max(worst, abs(left - right))
    logger.info(f"📊 semihamiltonian residual over {samples} samples: {worst:.3e}")
    return worst


def symmetry_residual(system: DiagonalSystem, samples: int = 20, seed: int = 0) -> float:
    """max |A_i,j - a_i,j (A_i - A_j) / (a_i - a_j)| for i != j."""
    system._need_symmetries()
    worst = 0.0
    for u in system.sample(samples, seed):
        system.check_distinct(u)
        a, A = system.speeds(u), system.symmetries(u)
        for i, j in itertools.permutations(range(system.n), 2):
            expected = system.a_(i, (j,), u) * (A[i] - A[j]) / (a[i] - a[j])
            worst = max(worst, abs(system.A_(i, (j,), u) - expected))
    return worst


def hodograph_jacobian(system: DiagonalSystem, u, t: float) -> np.ndarray:
    return np.array([[system.a_(i, (j,), u) * t + system.A_(i, (j,), u) for j in range(system.n)]
                     for i in range(system.n)])


def hodograph_defect(system: DiagonalSystem, x: float, t: float, u) -> np.ndarray:
    return system.speeds(u) * t + system.symmetries(u) - x


def generalized_hodograph_solve(system: DiagonalSystem, x: float, t: float, guess, tol: float = 1e-12,
                                max_iter: int = 50, singular_tol: float = 1e-12) -> np.ndarray:
    """
    Newton iteration for x = a_i(u) t + A_i(u), i = 1..n.

    Solutions move with velocity -a_i: u_i,t + a_i u_i,x = 0.
    """
    u = np.array(guess, dtype=float)
    for iteration in range(max_iter):
        F = hodograph_defect(system, x, t, u)
        if np.max(np.abs(F)) < tol:
            return u
        J = hodograph_jacobian(system, u, t)
        det = np.linalg.det(J)
        if abs(det) < singular_tol:
            raise ConvergenceError(f"singular generalized hodograph Jacobian at x={x}, t={t} (det={det:.2e})",
                                   code="SINGULAR", x=x, t=t)
        u = u - np.linalg.solve(J, F)
        if not np.all(np.isfinite(u)):
            break
    raise ConvergenceError(f"generalized hodograph Newton did not converge at x={x}, t={t}", x=x, t=t)


def transport_residual(system: DiagonalSystem, x: float, t: float, guess, step: float = 1e-4) -> float:
    """max_i |u_i,t + a_i u_i,x| on a centered stencil around (x, t)."""
    center = generalized_hodograph_solve(system, x, t, guess)
    solve = lambda dx, dt: generalized_hodograph_solve(system, x + dx, t + dt, center)
    u_x = (solve(step, 0.0) - solve(-step, 0.0)) / (2 * step)
    u_t = (solve(0.0, step) - solve(0.0, -step)) / (2 * step)
    return float(np.max(np.abs(u_t + system.speeds(center) * u_x)))


# n = 2: the wave system in Riemann invariants

def wave_diagonal_system(f: ConservedDensity, h: ConservedDensity) -> DiagonalSystem:
    """
    The hodograph equations of f and h written in r_+-.

    a_+- = -(h_uv +- c h_vv) and A_+- = f_u +- c f_v with c = sqrt(P''), so that
    x = a_+- s + A_+- is the pair of wave_core equations combined along the
    characteristic directions.
    """
    potential = f.potential

    def state(r):
        u, v = invert_riemann(potential, r[0], r[1])
        return u, v, math.sqrt(float(potential.d(2, u)))

    def speed(sign):
        def fn(r):
            u, v, c = state(r)
            return -(float(h.partial(1, 1)(u, v)) + sign * c * float(h.partial(0, 2)(u, v)))
        return fn

    def symmetry(sign):
        def fn(r):
            u, v, c = state(r)
            return float(f.partial(1, 0)(u, v)) + sign * c * float(f.partial(0, 1)(u, v))
        return fn

    return DiagonalSystem(2, [speed(1), speed(-1)], [symmetry(1), symmetry(-1)], names=("r_plus", "r_minus"))


def wave_hodograph_in_invariants(f: ConservedDensity, h: ConservedDensity, x: float, s: float,
                                 guess_uv: Tuple[float, float]) -> Tuple[float, float]:
    """Solve the wave hodograph through its diagonal form and map back to (u, v)."""
    system = wave_diagonal_system(f, h)
    r_plus, r_minus = riemann_invariants(f.potential, guess_uv[0], guess_uv[1])
    r = generalized_hodograph_solve(system, x, s, [float(r_plus), float(r_minus)])
    return invert_riemann(f.potential, r[0], r[1])


# generic catastrophes

@dataclass
class CatastropheData:
    """Base point u0 (x0 = t0 = 0) and the index of the breaking component."""

    u0: np.ndarray
    breaking: int
    a0: np.ndarray = None
    A_diag: np.ndarray = None
    a_nn: float = 0.0
    A_nnn: float = 0.0

    def to_json(self) -> Dict:
        return {
            "u0": [float(x) for x in self.u0],
            "breaking": self.breaking + 1,
            "a0": [float(x) for x in self.a0],
            "A_diag": [float(x) for x in self.A_diag],
            "a_nn": self.a_nn,
            "A_nnn": self.A_nnn,
        }


def catastrophe_data(system: DiagonalSystem, u0, breaking: int, tol: float = 1e-6) -> CatastropheData:
    """
    Check the generic-catastrophe gates at u0 and collect the normal-form constants.

    Gates: A_i(u0) = 0, A_n,n = 0 and A_j,j != 0 for j != n, A_n,nn = 0, A_n,nnn != 0.
    """
    u0 = np.asarray(u0, dtype=float)
    n = breaking
    system.check_distinct(u0)
    A0 = system.symmetries(u0)
    A_diag = np.array([system.A_(i, (i,), u0) for i in range(system.n)])
    A_nn = system.A_(n, (n, n), u0)
    A_nnn = system.A_(n, (n, n, n), u0)

    problems = []
    if np.max(np.abs(A0)) > tol:
        problems.append(f"A(u0) = {A0.tolist()} is not zero")
    if abs(A_diag[n]) > tol:
        problems.append(f"A_n,n = {A_diag[n]:.3e} is not zero")
    others = [abs(A_diag[j]) for j in range(system.n) if j != n]
    if others and min(others) <= tol:
        problems.append("a non-breaking component has A_j,j = 0")
    if abs(A_nn) > 10 * tol:
        problems.append(f"A_n,nn = {A_nn:.3e} is not zero")
    if abs(A_nnn) <= 10 * tol:
        problems.append("A_n,nnn vanishes")
    if problems:
        raise ClassificationError("catastrophe is not generic: " + "; ".join(problems), code="NONGENERIC")

    return CatastropheData(u0, n, system.speeds(u0), A_diag, system.a_(n, (n,), u0), A_nnn)


def catastrophe_identities(system: DiagonalSystem, data: CatastropheData) -> Dict[str, float]:
    """Partials of A that must vanish at a generic catastrophe, keyed like 'A_1,33'."""
    n, u0 = data.breaking, data.u0
    label = lambda m, index: f"A_{m + 1}," + "".join(str(i + 1) for i in index)
    checks = []
    rest = [i for i in range(system.n) if i != n]
    for m in rest:
        others = [i for i in rest if i != m]
        checks += [(m, (n, n)), (m, (n, n, n))]
        checks += [(m, (n, i)) for i in others] + [(m, (n, n, i)) for i in others]
        checks += [(m, (n,) + pair) for pair in itertools.combinations(others, 2)]
        checks += [(m, triple) for triple in itertools.combinations(others, 3)]
    checks += [(n, (n, i)) for i in rest] + [(n, (n, n, i)) for i in rest]
    checks += [(n, pair) for pair in itertools.combinations(rest, 2)]
    checks += [(n, (n,) + pair) for pair in itertools.combinations(rest, 2)]
    checks += [(n, triple) for triple in itertools.combinations(rest, 3)]
    return {label(m, index): abs(system.A_(m, index, u0)) for m, index in checks}


@dataclass
class NormalFormReport:
    ladder: List[float]
    deviation: List[float]
    deviation_affine: List[float]
    exponent: float
    stderr: float
    quadratic_coefficients: List[float]
    A_nnn_fit: float
    data: CatastropheData

    def to_json(self) -> Dict:
        return {
            "ladder": self.ladder,
            "deviation": self.deviation,
            "deviation_affine": self.deviation_affine,
            "exponent": self.exponent,
            "stderr": self.stderr,
            "quadratic_coefficients": self.quadratic_coefficients,
            "A_nnn_fit": self.A_nnn_fit,
            "catastrophe": self.data.to_json(),
        }


def _cubic_root(a_nn: float, A_nnn: float, T: float, Z: float) -> float:
    roots = np.roots([A_nnn / 6, 0.0, a_nn * T, -Z])
    real = roots[np.abs(roots.imag) < 1e-9].real
    if real.size != 1:
        raise ClassificationError(f"limiting cubic has {real.size} real roots at T={T}, Z={Z}", code="NONGENERIC")
    return float(real[0])


def multicomponent_normal_form_check(system: DiagonalSystem, u0, breaking: int,
                                     ladder: Optional[Sequence[float]] = None,
                                     times: Sequence[float] = (0.3, 0.6, 1.0),
                                     positions: Sequence[float] = (-0.5, 0.2, 0.7)) -> NormalFormReport:
    """
    Rescale around a generic catastrophe and measure convergence to the normal form.

    For each k, points (x, t) = (k Z + a_n0 k^(2/3) T, k^(2/3) T) are solved and
    rescaled, U_m = (u_m - u0_m) / k^(2/3), U_n = (u_n - u0_n) / k^(1/3). The
    limit is z_m = A_m,m U_m and z_n = a_n,n T U_n + A_n,nnn U_n^3 / 6. Sample
    times T must have a_n,n T of the same sign as A_n,nnn so that the limiting
    cubic has a single real root.
    """
    data = catastrophe_data(system, u0, breaking)
    n = breaking
    ladder = [2.0 ** -j for j in range(4, 13)] if ladder is None else list(ladder)
    rest = [i for i in range(system.n) if i != n]

    deviation, deviation_affine = [], []
    smallest: List[Tuple[float, float, np.ndarray]] = []
    for k in ladder:
        k13, k23 = k ** (1 / 3), k ** (2 / 3)
        worst_n, worst_m = 0.0, 0.0
        for T in times:
            for Z in positions:
                t = k23 * T
                x = k * Z + data.a0[n] * t
                U_pred = _cubic_root(data.a_nn, data.A_nnn, T, Z)
                guess = data.u0.copy()
                guess[n] += k13 * U_pred
                for m in rest:
                    guess[m] += (x - data.a0[m] * t) / data.A_diag[m]
                u = generalized_hodograph_solve(system, x, t, guess)
                U = (u - data.u0) / np.array([k13 if i == n else k23 for i in range(system.n)])
                worst_n = max(worst_n, abs(U[n] - U_pred))
                for m in rest:
                    z_m = (x - data.a0[m] * t) / k23
                    worst_m = max(worst_m, abs(U[m] - z_m / data.A_diag[m]))
                if k == ladder[-1]:
                    smallest.append((T, Z, U))
        deviation.append(worst_n)
        deviation_affine.append(worst_m)
        logger.debug(f"normal form k={k:.3e}: breaking {worst_n:.3e}, affine {worst_m:.3e}")

    fit = power_law_fit(ladder, deviation)

    # affine check: U_m against z_m at the smallest k
    k23 = ladder[-1] ** (2 / 3)
    quadratic = []
    for m in rest:
        z = np.array([(ladder[-1] * Z + (data.a0[n] - data.a0[m]) * k23 * T) / k23 for T, Z, _ in smallest])
        Um = np.array([U[m] for _, _, U in smallest])
        quadratic.append(float(np.polyfit(z, Um, 2)[0]))

    # cubic coefficient by regression of Z on the U_n monomials
    rows = np.array([[T * U[n], U[n] ** 3, T * U[n] ** 2, U[n] ** 2, U[n] ** 4] for T, _, U in smallest])
    rhs = np.array([Z for _, Z, _ in smallest])
    coeffs, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    A_nnn_fit = float(6 * coeffs[1])

    report = NormalFormReport(list(ladder), deviation, deviation_affine, fit.exponent, fit.stderr, quadratic,
                              A_nnn_fit, data)
    logger.info(f"📊 normal form convergence exponent {fit.exponent:.3f} +- {fit.stderr:.1e}, "
                f"A_n,nnn fit {A_nnn_fit:.4f} vs {data.A_nnn:.4f}")
    return report
