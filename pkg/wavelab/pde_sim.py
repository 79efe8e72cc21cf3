"""
Small-dispersion time integration of the perturbed wave systems.

Continuum models live on a periodic grid and are stepped spectrally:

* ``boussinesq``: u_t = v_x, v_t = d/dx (P'(u) - eps^2 u_xx) with P = u^3/6;
* ``boussinesq_elliptic``: the same flow for P = -u^3/6;
* ``nls_focusing`` / ``nls_defocusing``: i eps psi_t + eps^2/2 psi_xx +- |psi|^2 psi = 0,
  analysed through u = |psi|^2 and v = -eps Im(psi_x / psi).

Lattices keep one site per node, x_n = x_min + eps n, and run in the slow time
t = eps tau:

* ``toda`` / ``fpu``: w_n = q_n - q_{n-1} and p_n under H = sum p_n^2/2 + P(w_n);
* ``ablowitz_ladik`` / ``ablowitz_ladik_focusing``: complex (a_n, b_n) started on
  the reduction b = conj(a) (defocusing) or b = -conj(a) (focusing).

With these sign choices every model is, to leading order, the flow
u_t = d/dx h_v, v_t = d/dx h_u of its catalog Hamiltonian.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import special
from scipy.fft import fft, fftfreq, ifft, irfft, rfft, rfftfreq
from scipy.integrate import solve_ivp

from utils.results import write_csv, write_json
from wavelab.catalog import get_potential
from wavelab.diffpoly import JetVar, LocalFunctional
from wavelab.dop import ABLOWITZ_LADIK, BOUSSINESQ, BOUSSINESQ_FLIPPED, NLS, DOperatorSpec, d_apply
from wavelab.errors import ConfigError, DomainError, SimulationError
from wavelab.expressions import did_you_mean
from wavelab.wave_core import ConservedDensity, HodographMap, Potential, hodograph_solve

logger = logging.getLogger(__name__)

CONTINUUM = "continuum"
SCHRODINGER = "schrodinger"
LATTICE = "lattice"
AL_LATTICE = "al_lattice"

FORWARD = "forward"
INVERSE = "inverse"

VERLET = "verlet"
YOSHIDA4 = "yoshida4"
INTEGRATORS = (VERLET, YOSHIDA4)
YOSHIDA_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
YOSHIDA_W0 = -2.0 ** (1.0 / 3.0) * YOSHIDA_W1

BLOWUP_BOUND = 1e6
RESOLUTION_TOL = 1e-8
DEALIAS = 2.0 / 3.0
DEFAULT_CFL = 0.5
# the forward series has no eps^5 term, so order 5 makes the round trip O(eps^6)
INTERPOLATION_ORDER = 5
VACUUM = 1e-14
TIME_TOL = 1e-12

FILTER_NOTE = "flux modes above 2/3 of Nyquist removed before differentiation"


@dataclass(frozen=True)
class ModelInfo:
    name: str
    kind: str
    potential: Optional[str]
    operator: Optional[str] = None
    # NLS: +1 focusing; AL: reduction b = sign * conj(a)
    sign: int = 1


MODELS: Dict[str, ModelInfo] = {
    "boussinesq": ModelInfo("boussinesq", CONTINUUM, "boussinesq_flipped", BOUSSINESQ_FLIPPED),
    "boussinesq_elliptic": ModelInfo("boussinesq_elliptic", CONTINUUM, "boussinesq", BOUSSINESQ),
    "nls_focusing": ModelInfo("nls_focusing", SCHRODINGER, "nls_focusing", NLS, 1),
    "nls_defocusing": ModelInfo("nls_defocusing", SCHRODINGER, "nls_defocusing", NLS, -1),
    "toda": ModelInfo("toda", LATTICE, "toda"),
    "fpu": ModelInfo("fpu", LATTICE, "boussinesq_flipped"),
    "ablowitz_ladik": ModelInfo("ablowitz_ladik", AL_LATTICE, "ablowitz_ladik", ABLOWITZ_LADIK, 1),
    "ablowitz_ladik_focusing": ModelInfo("ablowitz_ladik_focusing", AL_LATTICE, None, None, -1),
}


def get_model(name: str) -> ModelInfo:
    if name not in MODELS:
        raise ConfigError(f"unknown model '{name}'{did_you_mean(name, MODELS)}", fields={"model": name})
    return MODELS[name]


def default_spec(model: str) -> Optional[DOperatorSpec]:
    """The D-operator whose densities are conserved by ``model`` (None for Toda/FPU chains)."""
    info = get_model(model)
    if info.operator is None:
        return None
    return DOperatorSpec(info.operator, sign=info.sign if info.operator == NLS else 1)


# grids and spectral helpers

@dataclass(frozen=True)
class Grid:
    """N equispaced nodes on the periodic interval [x_min, x_max)."""

    N: int
    x_min: float = 0.0
    x_max: float = 2 * math.pi

    def __post_init__(self):
        problems = {}
        if self.N < 2:
            problems["N"] = f"need at least 2 nodes, got {self.N}"
        if not self.x_max > self.x_min:
            problems["x_max"] = f"x_max must exceed x_min, got [{self.x_min}, {self.x_max}]"
        if problems:
            raise ConfigError("invalid grid", fields=problems)

    @classmethod
    def lattice(cls, sites: int, epsilon: float, x_min: float = 0.0) -> "Grid":
        return cls(sites, x_min, x_min + epsilon * sites)

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return self.length / self.N

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.N)

    def to_json(self) -> Dict:
        return {"N": self.N, "x_min": self.x_min, "x_max": self.x_max}


def _real_wavenumbers(N: int, length: float) -> np.ndarray:
    k = 2 * np.pi * rfftfreq(N, d=length / N)
    if N % 2 == 0:
        k[-1] = 0.0
    return k


def _complex_wavenumbers(N: int, length: float) -> np.ndarray:
    k = 2 * np.pi * fftfreq(N, d=length / N)
    if N % 2 == 0:
        k[N // 2] = 0.0
    return k


def spectral_derivative(values: np.ndarray, length: float, order: int = 1) -> np.ndarray:
    values = np.asarray(values)
    if order == 0:
        return values.copy()
    N = values.size
    if np.iscomplexobj(values):
        k = _complex_wavenumbers(N, length)
        return ifft(fft(values) * (1j * k) ** order)
    k = _real_wavenumbers(N, length)
    return irfft(rfft(values) * (1j * k) ** order, n=N)


def _antiderivative(values: np.ndarray, length: float) -> np.ndarray:
    """Periodic antiderivative of a zero-mean real field."""
    N = values.size
    k = _real_wavenumbers(N, length)
    coeffs = rfft(values)
    out = np.zeros_like(coeffs)
    nonzero = k != 0
    out[nonzero] = coeffs[nonzero] / (1j * k[nonzero])
    return irfft(out, n=N)


def spectral_tail(values: np.ndarray) -> float:
    """Share of the fluctuation energy carried by the top third of the spectrum."""
    values = np.asarray(values)
    N = values.size
    coeffs = fft(values - np.mean(values))
    energy = np.abs(coeffs) ** 2
    total = float(np.sum(energy))
    # fluctuations at roundoff level count as resolved
    floor = 1e-13 * N * float(np.max(np.abs(values)))
    if total <= floor ** 2:
        return 0.0
    modes = np.abs(fftfreq(N) * N)
    return float(np.sum(energy[modes > DEALIAS * N / 2]) / total)


# interpolation between lattices and continuum fields

def interpolation_coefficients(direction: str = FORWARD, order: int = INTERPOLATION_ORDER) -> np.ndarray:
    """
    Taylor coefficients c_k of the transform sum_k c_k (eps d/dx)^k.

    forward: eps D / (1 - exp(-eps D)), c_k = B_k / k! with c_1 = +1/2;
    inverse: (1 - exp(-eps D)) / (eps D), c_k = (-1)^k / (k + 1)!.
    """
    ks = np.arange(order + 1)
    if direction == FORWARD:
        coeffs = special.bernoulli(order)[:order + 1] / special.factorial(ks)
        if order >= 1:
            coeffs[1] = 0.5
        return coeffs
    if direction == INVERSE:
        return (-1.0) ** ks / special.factorial(ks + 1)
    raise ConfigError(f"unknown direction '{direction}'{did_you_mean(direction, [FORWARD, INVERSE])}",
                      fields={"direction": direction})


def _transform_symbol(z: np.ndarray, direction: str, order: Optional[int]) -> np.ndarray:
    if order is not None:
        return npoly.polyval(z, interpolation_coefficients(direction, order))
    safe = np.where(z == 0, 1.0, z)
    ratio = -np.expm1(-safe) / safe
    if direction == FORWARD:
        return np.where(z == 0, 1.0, 1.0 / ratio)
    if direction == INVERSE:
        return np.where(z == 0, 1.0, ratio)
    raise ConfigError(f"unknown direction '{direction}'", fields={"direction": direction})


def interpolation_transform(values, epsilon: float, direction: str = FORWARD, length: Optional[float] = None,
                            order: Optional[int] = INTERPOLATION_ORDER, mirrored: bool = False) -> np.ndarray:
    """
    Map lattice values w to the continuum field u (``forward``) or back (``inverse``).

    forward: u = w + eps/2 w' + eps^2/12 w'' - eps^4/720 w'''' + ..., truncated at
    eps^order (``order=None`` applies the exact Fourier symbol). ``mirrored``
    swaps the cell to the right of each site, u = eps D / (exp(eps D) - 1) w,
    as used by the Ablowitz-Ladik chart. Without ``length`` the nodes are
    taken eps apart.
    """
    values = np.asarray(values, dtype=float)
    if direction not in (FORWARD, INVERSE):
        raise ConfigError(f"unknown direction '{direction}'{did_you_mean(direction, [FORWARD, INVERSE])}",
                          fields={"direction": direction})
    if epsilon == 0 or np.ptp(values) == 0:
        return values.copy()
    N = values.size
    length = abs(epsilon) * N if length is None else length
    scale = -epsilon if mirrored else epsilon
    z = 1j * scale * 2 * np.pi * rfftfreq(N, d=length / N)
    return irfft(rfft(values) * _transform_symbol(z, direction, order), n=N)


def lattice_continuum_defect(potential: Potential, u, epsilon: float, length: float) -> float:
    """
    Sup distance between the exact lattice force and its eps^2 continuum expansion.

    The lattice side is eps^-1 [P'(w(x + eps)) - P'(w(x))] with w the cell average
    to the left of x; the continuum side is
    d/dx P'(u) + eps^2/24 [2 P'' u_xxx + 4 P''' u_x u_xx + P'''' u_x^3].
    """
    u = np.asarray(u, dtype=float)
    N = u.size
    z = 1j * epsilon * 2 * np.pi * rfftfreq(N, d=length / N)
    safe = np.where(z == 0, 1.0, z)
    right = np.where(z == 0, 1.0, np.expm1(safe) / safe)
    left = np.where(z == 0, 1.0, -np.expm1(-safe) / safe)
    coeffs = rfft(u)
    w_right, w_left = irfft(coeffs * right, n=N), irfft(coeffs * left, n=N)
    exact = (potential.d(1, w_right) - potential.d(1, w_left)) / epsilon

    ux, uxx, uxxx = (spectral_derivative(u, length, k) for k in (1, 2, 3))
    P2, P3, P4 = (potential.d(k, u) for k in (2, 3, 4))
    expansion = P2 * ux + epsilon ** 2 / 24 * (2 * P2 * uxxx + 4 * P3 * ux * uxx + P4 * ux ** 3)
    return float(np.max(np.abs(exact - expansion)))


# states

@dataclass(eq=False)
class GridState:
    """Fields on a periodic grid; NLS states carry psi and derive (u, v) on demand."""

    model: str
    grid: Grid
    epsilon: float
    u: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    t: float = 0.0
    psi: Optional[np.ndarray] = None
    potential: Optional[Potential] = None
    info: Dict[str, object] = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return get_model(self.model).kind

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def fields(self) -> Tuple[np.ndarray, np.ndarray]:
        if self.psi is None:
            return self.u, self.v
        u = np.abs(self.psi) ** 2
        dpsi = spectral_derivative(self.psi, self.grid.length, 1)
        vacuum = u <= VACUUM * np.max(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = -self.epsilon * np.imag(np.conj(self.psi) * dpsi) / u
        if vacuum.any():
            logger.warning(f"⚠️ {int(vacuum.sum())} vacuum nodes masked in the (u, v) chart at t={self.t:.6f}")
            v = np.where(vacuum, np.nan, v)
        return u, v

    def arrays(self) -> Dict[str, np.ndarray]:
        if self.psi is None:
            return {"u": self.u, "v": self.v}
        return {"psi": self.psi}


@dataclass(eq=False)
class LatticeState:
    """One-dimensional chain; (w, p) for Toda/FPU, complex (a, b) for Ablowitz-Ladik."""

    model: str
    epsilon: float
    w: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None
    a: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    t: float = 0.0
    x_min: float = 0.0
    potential: Optional[Potential] = None
    integrator: str = YOSHIDA4
    order: Optional[int] = INTERPOLATION_ORDER
    rtol: float = 1e-12
    atol: float = 1e-14
    info: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.integrator not in INTEGRATORS:
            raise ConfigError(f"unknown integrator '{self.integrator}'{did_you_mean(self.integrator, INTEGRATORS)}",
                              fields={"integrator": self.integrator})

    @property
    def kind(self) -> str:
        return get_model(self.model).kind

    @property
    def sites(self) -> int:
        return (self.w if self.a is None else self.a).size

    @property
    def grid(self) -> Grid:
        return Grid.lattice(self.sites, self.epsilon, self.x_min)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def reduction(self) -> int:
        return get_model(self.model).sign

    def al_variables(self) -> Tuple[np.ndarray, np.ndarray]:
        """w_n = -log(1 - a_n b_n) and v_n = (log(a_n/a_{n-1}) - log(b_n/b_{n-1})) / 2i."""
        a, b = self.a, self.b
        w = np.real(-np.log(1 - a * b))
        v = np.real((np.log(a / np.roll(a, 1)) - np.log(b / np.roll(b, 1))) / 2j)
        return w, v

    def fields(self) -> Tuple[np.ndarray, np.ndarray]:
        if self.a is None:
            return interpolation_transform(self.w, self.epsilon, FORWARD, order=self.order), self.p
        w, v = self.al_variables()
        return interpolation_transform(w, self.epsilon, FORWARD, order=self.order, mirrored=True), v

    def arrays(self) -> Dict[str, np.ndarray]:
        if self.a is None:
            return {"w": self.w, "p": self.p}
        return {"a": self.a, "b": self.b}


State = Union[GridState, LatticeState]


# initial data

def _smooth_step(s: np.ndarray) -> np.ndarray:
    """C-infinity step, 0 for s <= 0 and 1 for s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        rise = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        fall = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return rise / (rise + fall)


def hodograph_fields(f: ConservedDensity, h: ConservedDensity, t0: float, grid: Grid,
                     guess: Optional[Tuple[float, float]] = None,
                     taper: float = 0.0) -> Tuple[np.ndarray, np.ndarray, Dict]:
    """
    Node-wise hodograph solution at time t0, made periodic when ``taper`` > 0.

    The core [x_min + taper L/2, x_max - taper L/2] is solved by continuation
    from its middle node. Across the wrap the field blends, with a C-infinity
    step, the linear extrapolations of both core ends.
    """
    x = grid.x
    pad = 0.5 * taper * grid.length
    core = (x >= grid.x_min + pad - TIME_TOL) & (x <= grid.x_max - pad + TIME_TOL)
    index = np.flatnonzero(core)
    if index.size < 2:
        raise ConfigError(f"taper {taper} leaves no core nodes", fields={"taper": str(taper)})
    guess = guess if guess is not None else (f.potential.u_ref, 0.0)

    u, v = np.full(grid.N, np.nan), np.full(grid.N, np.nan)
    middle = 0.5 * (x[index[0]] + x[index[-1]])
    start = int(index[np.argmin(np.abs(x[index] - middle))])
    u[start], v[start] = hodograph_solve(f, h, x[start], t0, guess)
    for i in range(start + 1, index[-1] + 1):
        u[i], v[i] = hodograph_solve(f, h, x[i], t0, (u[i - 1], v[i - 1]))
    for i in range(start - 1, index[0] - 1, -1):
        u[i], v[i] = hodograph_solve(f, h, x[i], t0, (u[i + 1], v[i + 1]))

    info: Dict[str, object] = {"t0": t0, "core": [float(x[index[0]]), float(x[index[-1]])]}
    if taper <= 0 or index.size == grid.N:
        return u, v, info

    hmap = HodographMap(f, h)

    def slopes(i):
        A, B, C = hmap.hessian(u[i], v[i], t0)
        det = A * C - B * B
        return C / det, -B / det

    lo, hi = int(index[0]), int(index[-1])
    (ux_lo, vx_lo), (ux_hi, vx_hi) = slopes(lo), slopes(hi)
    gap = x[lo] + grid.length - x[hi]
    for i in np.flatnonzero(~core):
        xi = x[i] if x[i] > x[hi] else x[i] + grid.length
        weight = float(_smooth_step(np.array([(xi - x[hi]) / gap]))[0])
        left_offset = xi - grid.length - x[lo]
        u[i] = (1 - weight) * (u[hi] + ux_hi * (xi - x[hi])) + weight * (u[lo] + ux_lo * left_offset)
        v[i] = (1 - weight) * (v[hi] + vx_hi * (xi - x[hi])) + weight * (v[lo] + vx_lo * left_offset)
    info.update({"taper": taper, "blend": "C-infinity step between linear extrapolations of the core ends"})
    logger.debug(f"hodograph data tapered over {grid.N - index.size} of {grid.N} nodes")
    return u, v, info


def _profile(item, x: np.ndarray) -> np.ndarray:
    if callable(item):
        return np.broadcast_to(np.asarray(item(x), dtype=float), x.shape).copy()
    return np.full(x.shape, float(item))


def _quantized_mean(total: float, quantum: float) -> Tuple[float, float]:
    target = quantum * round(total / quantum)
    return target, target - total


def make_initial_state(model: str, f: Optional[ConservedDensity] = None, h: Optional[ConservedDensity] = None,
                       t0: float = 0.0, grid: Optional[Grid] = None, epsilon: float = 0.1,
                       guess: Optional[Tuple[float, float]] = None, fields: Optional[Tuple] = None,
                       potential: Optional[Potential] = None, taper: float = 0.0, integrator: str = YOSHIDA4,
                       order: Optional[int] = INTERPOLATION_ORDER) -> State:
    """
    Initial state of ``model`` from the unperturbed hodograph solution of (f, h) at t0.

    ``fields`` = (u, v), constants or callables of x, replaces the hodograph
    data. Lattice models read the continuum fields at x_n = x_min + eps n and
    apply the inverse interpolation; the lattice grid must therefore have
    length eps N.

    Raises:
        ConvergenceError: SINGULAR_JACOBIAN when t0 is past the catastrophe
        DomainError: fields outside the model's chart
    """
    info = get_model(model)
    if not epsilon > 0:
        raise ConfigError("epsilon must be positive", fields={"epsilon": str(epsilon)})
    lattice = info.kind in (LATTICE, AL_LATTICE)
    if grid is None:
        grid = Grid.lattice(256, epsilon) if lattice else Grid(256)
    if lattice and abs(grid.length - epsilon * grid.N) > 1e-9 * grid.length:
        raise ConfigError("a lattice grid must have length eps * N",
                          fields={"grid": f"length {grid.length} != {epsilon} * {grid.N}"})
    if potential is None:
        if f is not None:
            potential = f.potential
        elif info.potential is not None:
            potential = get_potential(info.potential)

    x = grid.x
    if fields is not None:
        u, v = _profile(fields[0], x), _profile(fields[1], x)
        extra: Dict[str, object] = {"initial": "prescribed fields"}
    else:
        if f is None or h is None:
            raise ConfigError("hodograph initial data needs both f and h", fields={"f": "missing", "h": "missing"})
        u, v, extra = hodograph_fields(f, h, t0, grid, guess, taper)
        extra["initial"] = f"hodograph of {f.name or f.expr} under {h.name or h.expr}"

    logger.info(f"🚀 {model} initial state: N={grid.N}, eps={epsilon}, t0={t0}")

    if info.kind == CONTINUUM:
        return GridState(model, grid, epsilon, u, v, t0, potential=potential, info=extra)

    if info.kind == SCHRODINGER:
        if np.any(u < 0):
            raise DomainError("NLS initial data needs u = |psi|^2 >= 0", code="DOMAIN")
        mean, shift = _quantized_mean(float(np.mean(v)) * grid.length, 2 * np.pi * epsilon)
        if abs(shift) > 1e-12:
            logger.warning(f"⚠️ mean velocity shifted by {shift / grid.length:.3e} so that psi is periodic")
        extra["velocity_shift"] = shift / grid.length
        phase = mean / grid.length * (x - grid.x_min) + _antiderivative(v - np.mean(v), grid.length)
        psi = np.sqrt(u) * np.exp(-1j * phase / epsilon)
        return GridState(model, grid, epsilon, None, None, t0, psi=psi, potential=potential, info=extra)

    if info.kind == LATTICE:
        w = interpolation_transform(u, epsilon, INVERSE, order=order)
        return LatticeState(model, epsilon, w=w, p=v.copy(), t=t0, x_min=grid.x_min, potential=potential,
                            integrator=integrator, order=order, info=extra)

    w = interpolation_transform(u, epsilon, INVERSE, order=order, mirrored=True)
    modulus = 1 - np.exp(-w) if info.sign > 0 else np.exp(-w) - 1
    if np.any(modulus <= 0):
        side = "positive" if info.sign > 0 else "negative"
        raise DomainError(f"{model} needs w_n {side} at every site", code="DOMAIN")
    total, shift = _quantized_mean(float(np.sum(v)), 2 * np.pi)
    if abs(shift) > 1e-12:
        logger.warning(f"⚠️ phase increments shifted by {shift / v.size:.3e} so that a_n is periodic")
    extra["velocity_shift"] = shift / v.size
    theta = np.cumsum(v + shift / v.size)
    a = np.sqrt(modulus) * np.exp(1j * theta)
    b = info.sign * np.conj(a)
    return LatticeState(model, epsilon, a=a, b=b, t=t0, x_min=grid.x_min, potential=potential, order=order,
                        info=extra)


# steppers

def _boussinesq_step(state: GridState, dt: float):
    """Strang splitting: exact linear dispersion, exact nonlinear kick with a dealiased flux."""
    N, length, eps = state.grid.N, state.grid.length, state.epsilon
    k = _real_wavenumbers(N, length)
    omega = eps * k * k
    keep = np.arange(N // 2 + 1) <= DEALIAS * N / 2

    def dispersion(U, V, h):
        c = np.cos(omega * h)
        sn = h * np.sinc(omega * h / np.pi)
        return c * U + 1j * k * sn * V, c * V + 1j * eps ** 2 * k ** 3 * sn * U

    U, V = dispersion(rfft(state.u), rfft(state.v), dt / 2)
    u = irfft(U, n=N)
    flux = rfft(np.broadcast_to(state.potential.d(1, u), u.shape)) * keep
    V = V + dt * 1j * k * flux
    U, V = dispersion(U, V, dt / 2)
    state.u, state.v = irfft(U, n=N), irfft(V, n=N)


def _nls_step(state: GridState, dt: float):
    N, length, eps = state.grid.N, state.grid.length, state.epsilon
    k = 2 * np.pi * fftfreq(N, d=length / N)
    half = np.exp(-1j * eps * k * k * dt / 4)
    sign = get_model(state.model).sign
    psi = ifft(fft(state.psi) * half)
    psi = psi * np.exp(1j * sign * np.abs(psi) ** 2 * dt / eps)
    state.psi = ifft(fft(psi) * half)


def _lattice_force(state: LatticeState, w: np.ndarray) -> np.ndarray:
    dP = np.broadcast_to(state.potential.d(1, w), w.shape)
    return np.roll(dP, -1) - dP


def _verlet(state: LatticeState, h: float):
    p = state.p + 0.5 * h * _lattice_force(state, state.w)
    state.w = state.w + h * (p - np.roll(p, 1))
    state.p = p + 0.5 * h * _lattice_force(state, state.w)


def _lattice_step(state: LatticeState, dt: float):
    h = dt / state.epsilon
    if state.integrator == VERLET:
        _verlet(state, h)
        return
    for weight in (YOSHIDA_W1, YOSHIDA_W0, YOSHIDA_W1):
        _verlet(state, weight * h)


def _al_rhs(tau, y, M):
    a, b = y[:M], y[M:]
    factor = 0.5 * (1 - a * b)
    da = 1j * (factor * (np.roll(a, 1) + np.roll(a, -1)) - a)
    db = -1j * (factor * (np.roll(b, 1) + np.roll(b, -1)) - b)
    return np.concatenate([da, db])


def _al_step(state: LatticeState, dt: float):
    M = state.a.size
    sol = solve_ivp(_al_rhs, (0.0, dt / state.epsilon), np.concatenate([state.a, state.b]), method="DOP853",
                    rtol=state.rtol, atol=state.atol, args=(M,))
    if not sol.success:
        raise SimulationError(f"Ablowitz-Ladik integration failed at t={state.t}: {sol.message}", t=state.t)
    state.a, state.b = sol.y[:M, -1].copy(), sol.y[M:, -1].copy()


STEPPERS: Dict[str, Callable] = {
    CONTINUUM: _boussinesq_step,
    SCHRODINGER: _nls_step,
    LATTICE: _lattice_step,
    AL_LATTICE: _al_step,
}


def step(state: State, dt: float) -> State:
    """
    Advance ``state`` in place by dt (slow time) and return it.

    Boussinesq and NLS use second order Strang splitting with the linear
    dispersion solved exactly per Fourier mode; stability needs
    dt sqrt(max |P''|) < dx and dt max |psi|^2 < eps respectively. Toda/FPU
    chains use Stormer-Verlet (order 2) or its triple-jump composition
    (order 4), stable for dt sqrt(max P'') < eps. Ablowitz-Ladik steps are
    adaptive DOP853 solves at rtol 1e-12; their log-norm drifts with that
    tolerance rather than being conserved by the scheme.
    """
    if not dt > 0:
        raise ConfigError("dt must be positive", fields={"dt": str(dt)})
    STEPPERS[state.kind](state, dt)
    state.t += dt
    return state


def stable_dt(state: State, cfl: float = DEFAULT_CFL) -> float:
    kind = state.kind
    if kind == CONTINUUM:
        speed = math.sqrt(float(np.max(np.abs(state.potential.d(2, state.u)))))
        return cfl * state.grid.dx / max(speed, 1e-12)
    if kind == SCHRODINGER:
        return cfl * state.epsilon / max(float(np.max(np.abs(state.psi) ** 2)), 1e-12)
    if kind == LATTICE:
        stiffness = math.sqrt(float(np.max(np.abs(state.potential.d(2, state.w)))))
        return cfl * state.epsilon / max(stiffness, 1e-12)
    return math.inf


# monitors

def field_norm(state: State) -> float:
    norm = 0.0
    for values in state.arrays().values():
        if not np.all(np.isfinite(values)):
            return math.inf
        norm = max(norm, float(np.max(np.abs(values))))
    return norm


def resolution_fraction(state: State) -> float:
    """Largest top-third spectral share among the stepped fields (0 for lattices)."""
    if state.kind == CONTINUUM:
        flux = np.broadcast_to(state.potential.d(1, state.u), state.u.shape)
        return max(spectral_tail(state.u), spectral_tail(state.v), spectral_tail(flux))
    if state.kind == SCHRODINGER:
        return spectral_tail(state.psi)
    return 0.0


def field_jets(u: np.ndarray, v: np.ndarray, length: float, max_order: int) -> Dict[JetVar, np.ndarray]:
    jets: Dict[JetVar, np.ndarray] = {}
    for name, values in (("u", u), ("v", v)):
        for order in range(max_order + 1):
            jets[(name, order)] = spectral_derivative(values, length, order)
    return jets


def functional_value(F: LocalFunctional, u: np.ndarray, v: np.ndarray, epsilon: float, length: float) -> float:
    """sum_k eps^k int F_k dx by the periodic trapezoid rule."""
    top = max((p.max_order() for p in F.orders.values()), default=0)
    jets = field_jets(u, v, length, top)
    dx = length / u.size
    total = 0.0
    for k, p in sorted(F.orders.items()):
        if p.is_zero:
            continue
        total += epsilon ** k * float(np.sum(np.real(p.evaluate(jets)))) * dx
    return total


def monitor_conserved(state: State, spec: Optional[DOperatorSpec] = None, densities: Sequence = (),
                      check: bool = True) -> Dict[str, float]:
    """
    Values of H_f = int D f dx on the state's continuum fields.

    Items may be densities (sent through ``d_apply(spec, f)``) or ready
    LocalFunctionals such as the FPU chain Hamiltonian.
    """
    u, v = state.fields()
    grid = state.grid
    values = {}
    for item in densities:
        if isinstance(item, LocalFunctional):
            functional = item
        else:
            spec = spec or default_spec(state.model)
            if spec is None:
                raise ConfigError(f"{state.model} has no D-operator; pass LocalFunctionals", fields={"spec": "missing"})
            functional = d_apply(spec, item, check=check)
        name = functional.name or getattr(item, "name", "") or f"H_{len(values)}"
        values[name] = functional_value(functional, u, v, state.epsilon, grid.length)
    return values


def lattice_energy(state: LatticeState) -> float:
    return float(np.sum(0.5 * state.p ** 2 + np.broadcast_to(state.potential(state.w), state.w.shape)))


def al_hopping_sum(state: LatticeState) -> float:
    """sum 1/2 (a_n b_{n-1} + b_n a_{n-1}); on the reduction this is sum sqrt((1-e^-w_n)(1-e^-w_{n-1})) cos v_n."""
    a, b = state.a, state.b
    return float(np.sum(np.real(0.5 * (a * np.roll(b, 1) + b * np.roll(a, 1)))))


def default_monitors(state: State) -> Dict[str, float]:
    kind = state.kind
    if kind == CONTINUUM:
        dx, length = state.grid.dx, state.grid.length
        ux = spectral_derivative(state.u, length, 1)
        P = np.broadcast_to(state.potential(state.u), state.u.shape)
        density = 0.5 * state.v ** 2 + P + 0.5 * state.epsilon ** 2 * ux ** 2
        return {"mass": float(np.sum(state.u)) * dx, "momentum": float(np.sum(state.v)) * dx,
                "energy": float(np.sum(density)) * dx}
    if kind == SCHRODINGER:
        dx, length = state.grid.dx, state.grid.length
        rho = np.abs(state.psi) ** 2
        dpsi = spectral_derivative(state.psi, length, 1)
        sign = get_model(state.model).sign
        current = -state.epsilon * np.imag(np.conj(state.psi) * dpsi)
        density = 0.5 * state.epsilon ** 2 * np.abs(dpsi) ** 2 - 0.5 * sign * rho ** 2
        return {"mass": float(np.sum(rho)) * dx, "momentum": float(np.sum(current)) * dx,
                "energy": float(np.sum(density)) * dx}
    if kind == LATTICE:
        return {"momentum": float(np.sum(state.p)), "stretch": float(np.sum(state.w)),
                "energy": lattice_energy(state)}
    log_norm = float(np.sum(np.real(np.log(1 - state.a * state.b))))
    hopping = al_hopping_sum(state)
    return {"energy": hopping + log_norm, "log_norm": log_norm, "hopping": hopping,
            "reduction": float(np.max(np.abs(state.b - state.reduction * np.conj(state.a))))}


# trajectories

def _frozen(values: np.ndarray) -> np.ndarray:
    out = np.array(values, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Snapshot:
    """Immutable copy of a state at time t with its monitor values."""

    t: float
    x: np.ndarray
    columns: Mapping[str, np.ndarray]
    monitors: Mapping[str, float]

    @property
    def u(self) -> np.ndarray:
        return self.columns["u"]

    @property
    def v(self) -> np.ndarray:
        return self.columns["v"]

    def to_rows(self) -> Tuple[List[str], List[List[float]]]:
        header = ["x"] + list(self.columns)
        data = [self.x] + [self.columns[name] for name in self.columns]
        return header, [list(row) for row in zip(*data)]

    def to_json(self) -> Dict:
        return {"t": self.t, "monitors": dict(self.monitors)}


def take_snapshot(state: State, spec: Optional[DOperatorSpec] = None, densities: Sequence = ()) -> Snapshot:
    u, v = state.fields()
    columns: Dict[str, np.ndarray] = {"u": u, "v": v}
    for name, values in state.arrays().items():
        if name in columns:
            continue
        if np.iscomplexobj(values):
            columns[f"re_{name}"], columns[f"im_{name}"] = np.real(values), np.imag(values)
        else:
            columns[name] = values
    monitors = default_monitors(state)
    if densities:
        monitors.update(monitor_conserved(state, spec, densities))
    return Snapshot(float(state.t), _frozen(state.x),
                    MappingProxyType({name: _frozen(values) for name, values in columns.items()}),
                    MappingProxyType(monitors))


def _schedule_times(t0: float, t_end: float, schedule) -> List[float]:
    if schedule is None:
        return [t0] if t_end - t0 <= TIME_TOL else [t0, t_end]
    if isinstance(schedule, int):
        if schedule < 1:
            raise ConfigError("a snapshot schedule needs at least one time", fields={"schedule": str(schedule)})
        return list(np.linspace(t0, t_end, schedule)) if t_end > t0 else [t0] * schedule
    times = sorted(float(t) for t in schedule)
    if times and (times[0] < t0 - TIME_TOL or times[-1] > t_end + TIME_TOL):
        raise ConfigError(f"snapshot times must lie in [{t0}, {t_end}]",
                          fields={"schedule": f"[{times[0]}, {times[-1]}]"})
    return times


def _guard_blowup(state: State, bound: float, trajectory: List[Snapshot]):
    norm = field_norm(state)
    if norm > bound:
        logger.warning(f"⚠️ BLOWUP in {state.model} at t={state.t:.6f}: max |field| = {norm:.3e}")
        raise SimulationError(f"{state.model} left the bound {bound:.1e} at t={state.t:.6f}", code="BLOWUP",
                              trajectory=list(trajectory), t=state.t, norm=norm)


def _guard_resolution(state: State, tol: Optional[float], trajectory: List[Snapshot]):
    if tol is None:
        return
    fraction = resolution_fraction(state)
    if fraction > tol:
        logger.warning(f"⚠️ {state.model} under-resolved at t={state.t:.6f}: top third carries {fraction:.2e}")
        raise SimulationError(f"top third of the spectrum carries {fraction:.2e} > {tol:.0e} of the energy",
                              code="UNDER_RESOLVED", trajectory=list(trajectory), t=state.t, fraction=fraction)


def run_to(state: State, t_end: float, schedule=None, dt: Optional[float] = None, cfl: float = DEFAULT_CFL,
           spec: Optional[DOperatorSpec] = None, densities: Sequence = (), blowup: float = BLOWUP_BOUND,
           resolution_tol: Optional[float] = RESOLUTION_TOL) -> List[Snapshot]:
    """
    Step ``state`` to t_end, storing a snapshot at every scheduled time.

    ``schedule`` is None (start and end), a count of equispaced times or a
    sequence of times. Each step uses min(dt, stable_dt(state, cfl)) and is
    shortened to land on the next snapshot time.

    Raises:
        SimulationError: BLOWUP or UNDER_RESOLVED, carrying the snapshots taken so far
    """
    if t_end < state.t - TIME_TOL:
        raise ConfigError(f"t_end={t_end} precedes the state time {state.t}", fields={"t_end": str(t_end)})
    times = _schedule_times(state.t, t_end, schedule)
    if state.kind == CONTINUUM and "filter" not in state.info:
        logger.warning(f"⚠️ {state.model}: {FILTER_NOTE}")
        state.info["filter"] = FILTER_NOTE

    logger.info(f"🚀 {state.model}: t={state.t:.6f} -> {t_end:.6f}, {len(times)} snapshots")
    trajectory: List[Snapshot] = []
    steps = 0
    _guard_blowup(state, blowup, trajectory)
    for target in times:
        while state.t < target - TIME_TOL:
            h = min(dt if dt is not None else math.inf, stable_dt(state, cfl))
            remaining = target - state.t
            count = max(1, math.ceil(remaining / h - 1e-9))
            step(state, remaining / count)
            steps += 1
            if count == 1:
                state.t = target
            _guard_blowup(state, blowup, trajectory)
        if state.kind in (CONTINUUM, SCHRODINGER):
            _guard_resolution(state, resolution_tol, trajectory)
        trajectory.append(take_snapshot(state, spec, densities))
    logger.info(f"✅ {state.model} reached t={state.t:.6f} in {steps} steps")
    return trajectory


# persistence

def snapshot_path(out_dir: str, run_id: str, t: float) -> str:
    return os.path.join(out_dir, run_id, f"{t:012.6f}.csv")


def run_manifest(state: State, dt: Optional[float] = None, cfl: float = DEFAULT_CFL,
                 seed: Optional[int] = None) -> Dict:
    grid = state.grid
    manifest = {
        "model": state.model,
        "epsilon": state.epsilon,
        "grid": grid.to_json(),
        "dt_policy": {"dt_max": dt, "cfl": cfl, "rule": "min(dt_max, stable_dt) per step, shortened at snapshots"},
        "seed": seed,
        "info": dict(state.info),
    }
    if state.kind == CONTINUUM:
        manifest["filter"] = FILTER_NOTE
    if isinstance(state, LatticeState):
        manifest["integrator"] = "DOP853" if state.kind == AL_LATTICE else state.integrator
        manifest["interpolation_order"] = state.order
    return manifest


def save_trajectory(trajectory: Sequence[Snapshot], out_dir: str, run_id: str,
                    manifest: Optional[Dict] = None) -> str:
    """Writes {out_dir}/{run_id}/{t:012.6f}.csv per snapshot plus manifest.json."""
    run_dir = os.path.join(out_dir, run_id)
    files = []
    for snap in trajectory:
        path = snapshot_path(out_dir, run_id, snap.t)
        header, rows = snap.to_rows()
        write_csv(path, header, rows)
        files.append(os.path.basename(path))
    series: Dict[str, List[float]] = {}
    for snap in trajectory:
        for name, value in snap.monitors.items():
            series.setdefault(name, []).append(value)
    payload = dict(manifest or {})
    payload.update({"run_id": run_id, "times": [snap.t for snap in trajectory], "snapshots": files,
                    "monitors": series})
    write_json(os.path.join(run_dir, "manifest.json"), payload)
    logger.info(f"📊 saved {len(files)} snapshots to {run_dir}")
    return run_dir
