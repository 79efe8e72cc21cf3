"""
Universality near a gradient catastrophe

Closed-form constants at Type I (Boussinesq family) and Type II points,
epsilon ladders of perturbed runs, scaling-exponent fits and comparisons of
rescaled simulations against the P_I^2 and tritronquee profiles.
"""

import cmath
import logging
import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, stats
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline

from wavelab.errors import ClassificationError, ConvergenceError, DomainError, FitError, PainleveError, WindowError
from wavelab.painleve import SECTOR, P12Surface, TritronqueeEvaluator
from wavelab.pde_sim import AL_LATTICE, DEFAULT_CFL, LATTICE, Grid, get_model, make_initial_state, run_to
from wavelab.wave_core import (BOUNDARY_BAND, TYPE_II_UMBILIC, W3_FIRST, ConservedDensity, CriticalPoint,
                               boussinesq_A0_B0, boussinesq_frame, canonical_bundle, classify_singularity,
                               hodograph_solve, power_law_fit, riemann_invariants)

logger = logging.getLogger(__name__)

HYPERBOLIC_AMPLITUDE = 2.0 / 7.0
HYPERBOLIC_WIDTH = 6.0 / 7.0
HYPERBOLIC_T_SCALE = 4.0 / 7.0
ELLIPTIC_AMPLITUDE = 2.0 / 5.0
ELLIPTIC_WIDTH = 4.0 / 5.0

WINDOW_X = 4.0
WINDOW_T = 2.0
WINDOW_Z = 4.0
SAMPLES = 161
PAD_NODES = 8

AMPLITUDE_TOL = {"I": 0.03, "II": 0.04}
WIDTH_TOL = 0.05
PROFILE_TOL = {"I": 0.05, "II": 0.08}
SLICE_TOL = 1e-9

Profile = Union[P12Surface, TritronqueeEvaluator]


# constants

@dataclass
class HyperbolicConstants:
    """
    Constants of the Type I asymptotics.

    Closed-form values live in the P'' = u frame with r_minus breaking;
    ``flips`` records the reflections that lead there. Calibrated values
    (``calibrated=True``) stay in the native frame, break ``invariant`` and
    carry no T dependence (gamma = inf).
    """

    u_c: float
    A0: float
    B0: float
    A2: float
    A4: float
    alpha: float
    beta: float
    gamma: float
    c_plus: float
    c_minus: float
    f_vv0: float
    mirrored: bool = False
    flips: Dict[str, bool] = field(default_factory=dict)
    calibrated: bool = False
    invariant: str = "minus"

    @property
    def break_speed(self) -> float:
        return self.c_minus if self.invariant == "minus" else self.c_plus

    @property
    def other_speed(self) -> float:
        return self.c_plus if self.invariant == "minus" else self.c_minus

    def to_json(self) -> Dict:
        payload = asdict(self)
        for key in ("A0", "B0", "A2", "A4", "gamma"):
            if not math.isfinite(payload[key]):
                payload[key] = None
        return payload


@dataclass
class EllipticConstants:
    u_c: float
    lam: complex
    mu: complex
    alpha: complex
    beta: complex
    speed: complex
    branch: int = 0
    admissible: List[int] = field(default_factory=list)
    calibrated: bool = False

    @property
    def direction(self) -> float:
        return line_direction(self.alpha)

    def to_json(self) -> Dict:
        encode = lambda z: {"re": z.real, "im": z.imag}
        return {
            "u_c": self.u_c, "lambda": encode(self.lam), "mu": encode(self.mu), "alpha": encode(self.alpha),
            "beta": encode(self.beta), "speed": encode(self.speed), "branch": self.branch,
            "admissible": list(self.admissible), "direction": self.direction, "calibrated": self.calibrated,
        }


def _real_root(value: float, degree: int) -> float:
    return math.copysign(abs(value) ** (1.0 / degree), value)


def _speeds(bundle: Dict[str, float]) -> Tuple[float, float]:
    c = math.sqrt(bundle["P0_2"])
    return bundle["g_u0"] + c * bundle["g_v0"], bundle["g_u0"] - c * bundle["g_v0"]


def hyperbolic_constants(cp: CriticalPoint, f: ConservedDensity, h: ConservedDensity,
                         tol: float = 1e-7) -> HyperbolicConstants:
    """
    A0, B0, A2, A4 and the scalings alpha, beta, gamma at a generic W3 point.

    B0 < 0 takes the real seventh root; alpha then changes sign and the
    profile is read with the X axis reversed (``mirrored``).

    Raises:
        ClassificationError: NONGENERIC for anything but a first W3 catastrophe
            of a Boussinesq-family potential
    """
    if cp.type != "I":
        raise ClassificationError(f"Type {cp.type} point has no hyperbolic constants", code="NONGENERIC")
    verdict = classify_singularity(cp, f, h, tol)
    if verdict != W3_FIRST:
        raise ClassificationError(f"catastrophe is {verdict}, not a generic first W3 point", code="NONGENERIC",
                                  verdict=verdict)
    bundle, flips = canonical_bundle(cp, f.potential)
    A0, B0 = boussinesq_A0_B0(bundle)
    if A0 == 0 or B0 == 0:
        raise ClassificationError(f"A0={A0}, B0={B0}: the scaling is degenerate", code="NONGENERIC")

    u_c = bundle["P0_2"]
    b = _real_root(B0, 7)
    alpha = -2 ** (10 / 7) * 3 ** (4 / 7) * u_c ** (3 / 14) * b
    beta = (2 / 3) ** (1 / 7) * u_c ** (1 / 14) / b ** 2
    gamma = -2 ** (9 / 7) * 3 ** (5 / 7) * u_c ** (1 / 7) * b ** 3 / A0
    c_plus, c_minus = _speeds(bundle)
    constants = HyperbolicConstants(
        u_c=u_c, A0=A0, B0=B0, A2=6 * math.sqrt(u_c) * B0, A4=72 / 5 * u_c * B0,
        alpha=alpha, beta=beta, gamma=gamma, c_plus=c_plus, c_minus=c_minus, f_vv0=bundle["f_vv0"],
        mirrored=B0 < 0, flips=flips,
    )
    if constants.mirrored:
        logger.info("B0 < 0: real seventh root taken, profile read with X reversed")
    logger.info(f"📊 Type I constants: A0={A0:.6g}, B0={B0:.6g}, alpha={alpha:.6g}, beta={beta:.6g}, gamma={gamma:.6g}")
    return constants


def line_direction(alpha: complex) -> float:
    """Direction of the line Z = x / alpha, x real, as an angle in [0, pi)."""
    return (-cmath.phase(alpha)) % math.pi


def sector_admissible(alpha: complex) -> bool:
    """True when both rays of Z = x / alpha stay inside |arg Z| < 4 pi / 5."""
    direction = line_direction(alpha)
    return math.pi - SECTOR < direction < SECTOR


def fifth_root_branches(value: complex) -> List[complex]:
    modulus, phase = abs(value) ** 0.2, cmath.phase(value)
    return [modulus * cmath.exp(1j * (phase + 2 * math.pi * k) / 5) for k in range(5)]


def select_branch(value: complex, branch: Optional[int] = None) -> Tuple[complex, int, List[int]]:
    """
    A fifth root of ``value`` whose real-x line lies in the pole-free sector.

    Without an explicit ``branch`` the admissible root whose line is closest
    to the imaginary axis wins.
    """
    roots = fifth_root_branches(value)
    admissible = [k for k, root in enumerate(roots) if sector_admissible(root)]
    if not admissible:
        raise ClassificationError("no fifth root places the real line inside the sector", code="NO_ADMISSIBLE_BRANCH")
    if branch is None:
        branch = min(admissible, key=lambda k: abs(line_direction(roots[k]) - math.pi / 2))
    elif branch not in admissible:
        raise ClassificationError(f"branch {branch} is not admissible; choose one of {admissible}",
                                  code="NO_ADMISSIBLE_BRANCH", branch=branch)
    return roots[branch], branch, admissible


def elliptic_constants(cp: CriticalPoint, f: ConservedDensity, h: ConservedDensity,
                       branch: Optional[int] = None, tol: float = 1e-7) -> EllipticConstants:
    """
    lambda, mu and the P_I scalings alpha^5 = 6 lambda mu^2, beta = 6 mu / alpha^2.

    The closed forms hold for P'' = -u; other potentials go through
    calibrate_constants.
    """
    if cp.type != "II":
        raise ClassificationError(f"Type {cp.type} point has no elliptic constants", code="NONGENERIC")
    verdict = classify_singularity(cp, f, h, tol)
    if verdict != TYPE_II_UMBILIC:
        raise ClassificationError(f"catastrophe is {verdict}, not a generic umbilic", code="NONGENERIC",
                                  verdict=verdict)
    if boussinesq_frame(f.potential) != -1:
        raise ClassificationError(f"closed forms need P'' = -u, not {f.potential.name}; use calibrate_constants",
                                  code="NONGENERIC")
    b = cp.bundle
    u_c = -b["P0_2"]
    root = math.sqrt(u_c)
    lam = 0.5 * complex(b["f_uvv0"], -root * b["f_vvv0"])
    mu = 4j * root
    if lam == 0:
        raise ClassificationError("lambda vanishes at the umbilic", code="NONGENERIC")
    alpha, chosen, admissible = select_branch(6 * lam * mu ** 2, branch)
    constants = EllipticConstants(u_c=u_c, lam=lam, mu=mu, alpha=alpha, beta=6 * mu / alpha ** 2,
                                  speed=complex(b["g_u0"], -root * b["g_v0"]), branch=chosen,
                                  admissible=admissible)
    logger.info(f"📊 Type II constants: lambda={lam:.6g}, alpha={alpha:.6g} (branch {chosen} of {admissible})")
    return constants


# exponent fits

@dataclass
class ScalingFit:
    exponent: float
    stderr: float
    low: float
    high: float
    samples: int
    span: float

    def agrees(self, expected: float, tol: float) -> bool:
        return abs(self.exponent - expected) <= tol

    def to_json(self) -> Dict:
        return asdict(self)


def fit_scaling_exponent(epsilons: Sequence[float], amplitudes: Sequence[float],
                         confidence: float = 0.95) -> ScalingFit:
    """
    Least-squares slope of log(amplitude) against log(epsilon) with a
    Student-t confidence band.

    Raises:
        FitError: RANGE for fewer than three points, non-positive data or a
            ladder spanning less than half a decade
    """
    eps = np.asarray(epsilons, dtype=float)
    amp = np.asarray(amplitudes, dtype=float)
    if eps.shape != amp.shape or eps.size < 3:
        raise FitError(f"need at least three (epsilon, amplitude) pairs, got {eps.size}", code="RANGE")
    if not (np.all(np.isfinite(eps)) and np.all(np.isfinite(amp)) and np.all(eps > 0) and np.all(amp > 0)):
        raise FitError("epsilons and amplitudes must be finite and positive", code="RANGE")
    span = float(np.log10(eps.max() / eps.min()))
    if span < 0.5:
        raise FitError(f"ladder spans {span:.2f} decades; at least half a decade is needed", code="RANGE", span=span)
    if eps.size < 4 or span < 1.0:
        logger.warning(f"⚠️ short ladder: {eps.size} values over {span:.2f} decades")

    shape = power_law_fit(eps, amp)
    half = float(stats.t.ppf(0.5 + confidence / 2, max(eps.size - 2, 1))) * shape.stderr
    return ScalingFit(shape.exponent, shape.stderr, shape.exponent - half, shape.exponent + half, eps.size, span)


def fwhm(x: np.ndarray, values: np.ndarray) -> float:
    """Full width at half maximum around the global maximum, crossings linearly interpolated."""
    x = np.asarray(x, dtype=float)
    values = np.asarray(values, dtype=float)
    peak = int(np.nanargmax(values))
    half = 0.5 * values[peak]

    def crossing(direction: int) -> float:
        i = peak
        while 0 <= i + direction < values.size:
            j = i + direction
            if values[j] < half:
                return float(x[i] + (half - values[i]) * (x[j] - x[i]) / (values[j] - values[i]))
            i = j
        raise FitError("profile does not drop to half maximum inside the window", code="RANGE")

    return crossing(1) - crossing(-1)


# simulated fields

@dataclass
class FieldSlice:
    t: float
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray

    @classmethod
    def from_snapshot(cls, snapshot) -> "FieldSlice":
        return cls(float(snapshot.t), np.array(snapshot.x), np.array(snapshot.u), np.array(snapshot.v))

    def finite(self) -> "FieldSlice":
        keep = np.isfinite(self.u) & np.isfinite(self.v)
        return FieldSlice(self.t, self.x[keep], self.u[keep], self.v[keep])

    def around(self, points: np.ndarray, pad: int = PAD_NODES) -> "FieldSlice":
        """Nodes covering [min(points), max(points)] plus pad nodes on each side."""
        lo = max(int(np.searchsorted(self.x, np.min(points), side="right")) - 1 - pad, 0)
        hi = min(int(np.searchsorted(self.x, np.max(points), side="left")) + 1 + pad, self.x.size)
        return FieldSlice(self.t, self.x[lo:hi], self.u[lo:hi], self.v[lo:hi])

    def reflected(self) -> "FieldSlice":
        """u(x) -> u(-x), v(x) -> -v(-x)."""
        return FieldSlice(self.t, -self.x[::-1], self.u[::-1], -self.v[::-1])


def _spline(x: np.ndarray, values: np.ndarray):
    if np.iscomplexobj(values):
        real, imag = CubicSpline(x, values.real), CubicSpline(x, values.imag)
        return lambda points: real(points) + 1j * imag(points)
    return CubicSpline(x, values)


def _check_inside(fields: FieldSlice, points: np.ndarray):
    if points.min() < fields.x[0] or points.max() > fields.x[-1]:
        raise WindowError(f"window [{points.min():.6g}, {points.max():.6g}] leaves the simulated range "
                          f"[{fields.x[0]:.6g}, {fields.x[-1]:.6g}]")


def _convertible(fields: FieldSlice, potential, x_c: float) -> FieldSlice:
    """The contiguous nodes around x_c where P'' keeps its sign at x_c and stays off the boundary band."""
    with np.errstate(all="ignore"):
        p2 = np.broadcast_to(np.asarray(potential.d(2, fields.u), dtype=float), fields.u.shape)
    center = int(np.argmin(np.abs(fields.x - x_c)))
    good = np.isfinite(p2) & (np.abs(p2) >= BOUNDARY_BAND) & (np.sign(p2) == np.sign(p2[center]))
    if not good[center]:
        return fields
    bad = np.flatnonzero(~good)
    lo = int(bad[bad < center].max()) + 1 if np.any(bad < center) else 0
    hi = int(bad[bad > center].min()) if np.any(bad > center) else fields.x.size
    if lo > 0 or hi < fields.x.size:
        logger.debug(f"calibrating on [{fields.x[lo]:.6g}, {fields.x[hi - 1]:.6g}], P'' degenerates outside")
    return FieldSlice(fields.t, fields.x[lo:hi], fields.u[lo:hi], fields.v[lo:hi])


def unperturbed_fields(f: ConservedDensity, h: ConservedDensity, fields: FieldSlice) -> Tuple[np.ndarray, np.ndarray]:
    """Hodograph solution on the slice nodes, Newton seeded by the simulated values; NaN where it fails."""
    u0, v0 = np.full(fields.x.shape, np.nan), np.full(fields.x.shape, np.nan)
    failed = 0
    for i, (x, u, v) in enumerate(zip(fields.x, fields.u, fields.v)):
        try:
            u0[i], v0[i] = hodograph_solve(f, h, float(x), fields.t, (float(u), float(v)))
        except ConvergenceError:
            failed += 1
    if failed:
        logger.debug(f"hodograph Newton failed at {failed} of {fields.x.size} nodes")
    return u0, v0


def breaking_invariant(cp: CriticalPoint) -> str:
    """r_minus breaks for sigma >= 0, r_plus otherwise."""
    return "minus" if cp.sigma >= 0 else "plus"


def _invariants(potential, fields: FieldSlice, u_c: float, v_c: float, invariant: str):
    """(r_break, r_other) on the slice and at the critical values."""
    r_plus, r_minus = riemann_invariants(potential, fields.u, fields.v)
    c_plus, c_minus = riemann_invariants(potential, u_c, v_c)
    if invariant == "minus":
        return r_minus, r_plus, c_minus, c_plus
    return r_plus, r_minus, c_plus, c_minus


def _hyperbolic_frame(fields: FieldSlice, cp: CriticalPoint, constants: HyperbolicConstants):
    fields = fields.finite()
    x_c, v_c = cp.x_c, cp.v_c
    if not constants.calibrated:
        if constants.flips.get("u_reflected"):
            raise DomainError("closed-form constants sit in the u-reflected frame; calibrate this potential instead")
        if constants.flips.get("v_reflected"):
            fields, x_c, v_c = fields.reflected(), -x_c, -v_c
    return fields, x_c, v_c


def deviation_profile(fields: FieldSlice, cp: CriticalPoint, f: ConservedDensity, h: ConservedDensity,
                      reach: float) -> Tuple[np.ndarray, np.ndarray]:
    """r - r0 of the breaking invariant on |x - x_c| <= reach, NaN-free."""
    fields = fields.finite()
    near = np.abs(fields.x - cp.x_c) <= reach
    local = FieldSlice(fields.t, fields.x[near], fields.u[near], fields.v[near])
    if local.x.size < 3:
        raise WindowError(f"fewer than three nodes within {reach} of x_c={cp.x_c}")
    u0, v0 = unperturbed_fields(f, h, local)
    keep = np.isfinite(u0)
    invariant = breaking_invariant(cp)
    r, _, _, _ = _invariants(f.potential, local, cp.u_c, cp.v_c, invariant)
    unperturbed = FieldSlice(local.t, local.x[keep], u0[keep], v0[keep])
    r0, _, _, _ = _invariants(f.potential, unperturbed, cp.u_c, cp.v_c, invariant)
    return local.x[keep], r[keep] - r0


def elliptic_deviation(fields: FieldSlice, cp: CriticalPoint, potential) -> complex:
    """r(x_c) - r(u_c, v_c) for r = v - i Q_e(u)."""
    fields = fields.finite()
    _check_inside(fields, np.array([cp.x_c]))
    fields = fields.around(np.array([cp.x_c]))
    r = riemann_invariants(potential, fields.u, fields.v)[1]
    r_c = riemann_invariants(potential, cp.u_c, cp.v_c)[1]
    return complex(_spline(fields.x, r)(cp.x_c)) - complex(r_c)


def antiholomorphic_defect(before: FieldSlice, after: FieldSlice, cp: CriticalPoint, potential,
                           speed: complex, reach: float) -> float:
    """
    max |dr/dx_-| near x_c for r = v - i Q_e(u), with x_+- = x + c t, x + conj(c) t.

    dr/dx_- = (r_t - c r_x) / (conj(c) - c), r_t by a backward difference.
    """
    dt = after.t - before.t
    if dt <= 0 or speed.imag == 0:
        raise DomainError("the defect needs two increasing times and a complex speed")
    after, before = after.finite(), before.finite()
    near = np.abs(after.x - cp.x_c) <= reach
    points = after.x[near]
    _check_inside(before, points)
    after, before = after.around(points), before.around(points)
    r_after = _spline(after.x, riemann_invariants(potential, after.u, after.v)[1])
    r_before = _spline(before.x, riemann_invariants(potential, before.u, before.v)[1])
    r_t = (r_after(points) - r_before(points)) / dt
    r_x = np.gradient(r_after(points), points)
    return float(np.max(np.abs((r_t - speed * r_x) / (np.conj(speed) - speed))))


# profile comparisons

@dataclass
class ProfileComparison:
    kind: str
    epsilon: float
    t: float
    coordinate: np.ndarray
    second: np.ndarray
    simulated: np.ndarray
    predicted: np.ndarray
    sup_error: float
    l2_error: float
    relative_error: float
    r_plus_error: Optional[float] = None

    def to_rows(self) -> Tuple[List[str], List[List[float]]]:
        if self.kind == "I":
            header = ["X", "T", "scaled", "profile"]
            rows = zip(self.coordinate, self.second, self.simulated, self.predicted)
        else:
            header = ["re_Z", "im_Z", "re_scaled", "im_scaled", "re_W", "im_W"]
            rows = zip(self.coordinate.real, self.coordinate.imag, self.simulated.real, self.simulated.imag,
                       self.predicted.real, self.predicted.imag)
        return header, [list(row) for row in rows]

    def to_json(self) -> Dict:
        return {"kind": self.kind, "epsilon": self.epsilon, "t": self.t, "sup_error": self.sup_error,
                "l2_error": self.l2_error, "relative_error": self.relative_error,
                "r_plus_error": self.r_plus_error, "samples": int(self.coordinate.size)}


def _errors(coordinate: np.ndarray, diff: np.ndarray, predicted: np.ndarray) -> Tuple[float, float, float]:
    sup = float(np.max(np.abs(diff)))
    if coordinate.size > 1:
        l2 = float(math.sqrt(trapezoid(np.abs(diff) ** 2, np.real(coordinate))))
    else:
        l2 = sup
    scale = float(np.max(np.abs(predicted)))
    return sup, l2, sup / scale if scale > 0 else math.inf


def _p12_values(profile: P12Surface, X: np.ndarray, T: np.ndarray, derivative: int = 0) -> np.ndarray:
    evaluate = profile.U if derivative == 0 else profile.U_XX
    if np.all(T == T[0]):
        return np.asarray(evaluate(X, float(T[0])), dtype=float)
    return np.array([float(np.asarray(evaluate(np.array([Xi]), float(Ti)))[0]) for Xi, Ti in zip(X, T)])


def compare_profiles(fields: FieldSlice, cp: CriticalPoint, constants: Union[HyperbolicConstants, EllipticConstants],
                     profile: Profile, epsilon: float, potential, window: Optional[Tuple[float, float]] = None,
                     samples: int = SAMPLES) -> ProfileComparison:
    """
    Rescaled simulation against the Painleve profile on a window around x_c.

    Hyperbolic: X = x_-/(eps^{6/7} alpha), T = x_+/(eps^{4/7} gamma) and
    (r_- - r_-(u_c, v_c))/(beta eps^{2/7}) against U(X, T); the r_+ column
    is checked against the U_XX correction when the constants are closed-form.
    Elliptic: Z = x_+/(alpha eps^{4/5}) and (r - r(u_c, v_c))/(beta eps^{2/5})
    against W0(Z).

    Raises:
        WindowError: the window leaves the simulation or the solved profile range
    """
    if isinstance(constants, HyperbolicConstants):
        return _hyperbolic_comparison(fields, cp, constants, profile, epsilon, potential,
                                      window or (WINDOW_X, WINDOW_T), samples)
    return _elliptic_comparison(fields, cp, constants, profile, epsilon, potential, (window or (WINDOW_Z,))[0],
                                samples)


def _hyperbolic_comparison(fields, cp, constants: HyperbolicConstants, profile: P12Surface, epsilon: float,
                           potential, window: Tuple[float, float], samples: int) -> ProfileComparison:
    fields, x_c, v_c = _hyperbolic_frame(fields, cp, constants)
    dt = fields.t - cp.t_c

    X = np.linspace(-window[0], window[0], samples) if samples > 1 else np.zeros(1)
    inner = epsilon ** HYPERBOLIC_WIDTH * constants.alpha
    points = x_c - constants.break_speed * dt + inner * X
    _check_inside(fields, points)
    fields = fields.around(points)
    r_break, r_other, rc_break, rc_other = _invariants(potential, fields, cp.u_c, v_c, constants.invariant)
    x_other = points - x_c + constants.other_speed * dt
    if math.isinf(constants.gamma):
        T = np.zeros_like(X)
    else:
        T = x_other / (epsilon ** HYPERBOLIC_T_SCALE * constants.gamma)
    if np.max(np.abs(T)) > window[1]:
        raise WindowError(f"|T| reaches {np.max(np.abs(T)):.3g} > {window[1]}")

    amplitude = constants.beta * epsilon ** HYPERBOLIC_AMPLITUDE
    simulated = (_spline(fields.x, r_break)(points) - rc_break) / amplitude
    predicted = _p12_values(profile, X, T)
    sup, l2, relative = _errors(X, simulated - predicted, predicted)

    r_plus_error = None
    if not constants.calibrated:
        correction = epsilon ** HYPERBOLIC_T_SCALE / (4 * constants.u_c) * constants.beta / constants.alpha ** 2
        expected = (rc_other + x_other / (2 * math.sqrt(constants.u_c) * constants.f_vv0)
                    - correction * _p12_values(profile, X, T, derivative=2))
        r_plus_error = float(np.max(np.abs(_spline(fields.x, r_other)(points) - expected)))

    logger.info(f"📊 eps={epsilon:.4g}: sup |scaled - U| = {sup:.3e} (relative {relative:.3e})")
    return ProfileComparison("I", epsilon, fields.t, X, T, simulated, predicted, sup, l2, relative, r_plus_error)


def _elliptic_comparison(fields, cp, constants: EllipticConstants, profile: TritronqueeEvaluator, epsilon: float,
                         potential, window: float, samples: int) -> ProfileComparison:
    fields = fields.finite()
    dt = fields.t - cp.t_c
    scale = constants.alpha * epsilon ** ELLIPTIC_WIDTH
    offsets = np.linspace(-window, window, samples) * abs(scale) if samples > 1 else np.zeros(1)
    points = cp.x_c + offsets
    _check_inside(fields, points)
    Z = (offsets + constants.speed * dt) / scale
    if not TritronqueeEvaluator.in_sector(Z):
        raise WindowError("the mapped Z-line leaves the sector |arg Z| < 4 pi / 5")

    # P'' may vanish on the slice away from the window
    fields = fields.around(points)
    r = riemann_invariants(potential, fields.u, fields.v)[1]
    r_c = riemann_invariants(potential, cp.u_c, cp.v_c)[1]
    simulated = (_spline(fields.x, r)(points) - r_c) / (constants.beta * epsilon ** ELLIPTIC_AMPLITUDE)
    predicted = profile(Z)
    sup, l2, relative = _errors(offsets / abs(scale), simulated - predicted, predicted)
    logger.info(f"📊 eps={epsilon:.4g}: sup |scaled - W0| = {sup:.3e} (relative {relative:.3e})")
    return ProfileComparison("II", epsilon, fields.t, Z, np.zeros(Z.size), simulated, predicted, sup, l2, relative)


# calibration

def _require_critical_time(fields: FieldSlice, cp: CriticalPoint):
    if abs(fields.t - cp.t_c) > SLICE_TOL * max(1.0, abs(cp.t_c)):
        raise WindowError(f"calibration uses the slice at t_c={cp.t_c}, got t={fields.t}")


def _scale_range(fields: FieldSlice, x_c: float, window: float, power: float, epsilon: float) -> Tuple[float, float]:
    """Bounds on |alpha| keeping the window between a few nodes and the simulated range."""
    spacing = float(np.median(np.diff(fields.x)))
    room = 0.9 * min(x_c - fields.x[0], fields.x[-1] - x_c)
    lo = 3 * spacing / (window * epsilon ** power)
    hi = room / (window * epsilon ** power)
    if not lo < hi:
        raise WindowError("the simulated range is too short to calibrate the inner scale")
    return lo, hi


def _projected_misfit(data: np.ndarray, shape: np.ndarray) -> Tuple[float, complex]:
    """min over c of |data - c shape|^2 / |data|^2, and the minimizing c."""
    coeff = np.vdot(shape, data) / np.vdot(shape, shape)
    norm = float(np.vdot(data, data).real)
    misfit = float(np.vdot(data - coeff * shape, data - coeff * shape).real) / norm if norm > 0 else 1.0
    return misfit, coeff


def calibrate_constants(fields: FieldSlice, cp: CriticalPoint, potential, epsilon: float, profile: Profile,
                        window: Optional[float] = None, samples: int = 81,
                        scan: int = 48) -> Union[HyperbolicConstants, EllipticConstants]:
    """
    One-slice least-squares fit of the profile constants at t = t_c.

    beta enters linearly and is projected out; the inner scale alpha is
    scanned on a log grid (both signs, or admissible directions for the
    elliptic case) and then refined. Hyperbolic calibrations set T = 0.
    The scan stays on the nodes around x_c where P'' keeps its sign.
    """
    _require_critical_time(fields, cp)
    fields = _convertible(fields.finite(), potential, cp.x_c)
    if cp.type == "I":
        return _calibrate_hyperbolic(fields, cp, potential, epsilon, profile, window or WINDOW_X, samples, scan)
    return _calibrate_elliptic(fields, cp, potential, epsilon, profile, window or WINDOW_Z, samples, scan)


def _calibrate_hyperbolic(fields, cp, potential, epsilon, profile: P12Surface, window, samples, scan):
    invariant = breaking_invariant(cp)
    r_break, _, rc_break, _ = _invariants(potential, fields, cp.u_c, cp.v_c, invariant)
    spline = _spline(fields.x, r_break)
    X = np.linspace(-window, window, samples)
    shape = _p12_values(profile, X, np.zeros_like(X)) * epsilon ** HYPERBOLIC_AMPLITUDE
    lo, hi = _scale_range(fields, cp.x_c, window, HYPERBOLIC_WIDTH, epsilon)

    def misfit(log_scale: float, sign: float) -> Tuple[float, complex]:
        points = cp.x_c + sign * math.exp(log_scale) * epsilon ** HYPERBOLIC_WIDTH * X
        return _projected_misfit(spline(points) - rc_break, shape)

    grid = np.linspace(math.log(lo), math.log(hi), scan)
    best = min(((misfit(s, sign)[0], s, sign) for sign in (1.0, -1.0) for s in grid))
    _, start, sign = best
    step = grid[1] - grid[0]
    refined = optimize.minimize_scalar(lambda s: misfit(s, sign)[0], bounds=(start - step, start + step),
                                       method="bounded", options={"xatol": 1e-10})
    value, beta = misfit(float(refined.x), sign)
    alpha = sign * math.exp(float(refined.x))

    c_plus, c_minus = _speeds(cp.bundle)
    constants = HyperbolicConstants(
        u_c=cp.u_c, A0=math.nan, B0=math.nan, A2=math.nan, A4=math.nan, alpha=alpha, beta=float(np.real(beta)),
        gamma=math.inf, c_plus=c_plus, c_minus=c_minus, f_vv0=cp.bundle["f_vv0"], mirrored=alpha > 0,
        calibrated=True, invariant=invariant,
    )
    logger.info(f"✅ calibrated Type I constants at eps={epsilon:.4g}: alpha={alpha:.6g}, beta={constants.beta:.6g}, "
                f"misfit {value:.2e}")
    return constants


def _calibrate_elliptic(fields, cp, potential, epsilon, profile: TritronqueeEvaluator, window, samples, scan):
    r = riemann_invariants(potential, fields.u, fields.v)[1]
    r_c = complex(riemann_invariants(potential, cp.u_c, cp.v_c)[1])
    spline = _spline(fields.x, r)
    s = np.linspace(-window, window, samples)
    lo, hi = _scale_range(fields, cp.x_c, window, ELLIPTIC_WIDTH, epsilon)
    lines: Dict[float, np.ndarray] = {}

    def line(theta: float) -> Optional[np.ndarray]:
        if theta not in lines:
            try:
                lines[theta] = profile(s * cmath.exp(-1j * theta)) * epsilon ** ELLIPTIC_AMPLITUDE
            except PainleveError:
                lines[theta] = None
        return lines[theta]

    def misfit(log_scale: float, theta: float) -> Tuple[float, complex]:
        if not sector_admissible(cmath.exp(1j * theta)):
            return 1.0, 0j
        shape = line(theta)
        if shape is None:
            return 1.0, 0j
        points = cp.x_c + math.exp(log_scale) * epsilon ** ELLIPTIC_WIDTH * s
        return _projected_misfit(spline(points) - r_c, shape)

    thetas = [t for t in np.linspace(-math.pi, math.pi, 2 * scan, endpoint=False)
              if sector_admissible(cmath.exp(1j * t))]
    scales = np.linspace(math.log(lo), math.log(hi), scan)
    best = min(((misfit(a, t)[0], a, t) for t in thetas for a in scales))
    _, start_scale, start_theta = best
    refined = optimize.minimize(lambda p: misfit(float(p[0]), float(p[1]))[0], np.array([start_scale, start_theta]),
                                method="Nelder-Mead", options={"xatol": 1e-8, "fatol": 1e-12})
    log_scale, theta = float(refined.x[0]), float(refined.x[1])
    value, beta = misfit(log_scale, theta)
    alpha = cmath.exp(complex(log_scale, theta))

    root = math.sqrt(-cp.bundle["P0_2"])
    constants = EllipticConstants(u_c=cp.u_c, lam=complex(math.nan, math.nan), mu=4j * root, alpha=alpha,
                                  beta=complex(beta), speed=complex(cp.bundle["g_u0"], -root * cp.bundle["g_v0"]),
                                  branch=-1, calibrated=True)
    logger.info(f"✅ calibrated Type II constants at eps={epsilon:.4g}: alpha={alpha:.6g}, beta={complex(beta):.6g}, "
                f"misfit {value:.2e}")
    return constants


# epsilon ladders

@dataclass
class LadderMember:
    epsilon: float
    fields: FieldSlice
    amplitude: float
    width: Optional[float] = None
    defect: Optional[float] = None
    comparison: Optional[ProfileComparison] = None

    def row(self) -> List[float]:
        return [self.epsilon, self.amplitude, math.nan if self.width is None else self.width]


@dataclass
class LadderResult:
    kind: str
    model: str
    members: List[LadderMember]
    amplitude_fit: ScalingFit
    width_fit: Optional[ScalingFit] = None
    constants: Optional[Union[HyperbolicConstants, EllipticConstants]] = None

    @property
    def expected(self) -> Dict[str, float]:
        if self.kind == "I":
            return {"amplitude": HYPERBOLIC_AMPLITUDE, "width": HYPERBOLIC_WIDTH}
        return {"amplitude": ELLIPTIC_AMPLITUDE}

    @property
    def tolerance(self) -> Dict[str, float]:
        out = {"amplitude": AMPLITUDE_TOL[self.kind]}
        if self.width_fit is not None:
            out["width"] = WIDTH_TOL
        if self.comparisons:
            out["profile"] = PROFILE_TOL[self.kind]
        return out

    @property
    def comparisons(self) -> List[ProfileComparison]:
        return [m.comparison for m in self.members if m.comparison is not None]

    def to_rows(self) -> Tuple[List[str], List[List[float]]]:
        return ["epsilon", "amplitude", "width"], [m.row() for m in self.members]

    def verdict(self) -> Dict:
        checks = {"amplitude": self.amplitude_fit.agrees(self.expected["amplitude"], AMPLITUDE_TOL[self.kind])}
        fits = {"amplitude": self.amplitude_fit.to_json()}
        if self.width_fit is not None:
            checks["width"] = self.width_fit.agrees(HYPERBOLIC_WIDTH, WIDTH_TOL)
            fits["width"] = self.width_fit.to_json()
        comparisons = self.comparisons
        if comparisons:
            smallest = min(comparisons, key=lambda c: c.epsilon)
            checks["profile"] = smallest.relative_error <= PROFILE_TOL[self.kind]
        return {
            "exponent_fit": fits,
            "expected": self.expected,
            "tolerance": self.tolerance,
            "checks": checks,
            "profile_errors": [c.to_json() for c in comparisons],
            "pass": all(checks.values()),
        }


def _ladder_grid(model: str, epsilon: float, domain: Tuple[float, float], N: int) -> Grid:
    if get_model(model).kind in (LATTICE, AL_LATTICE):
        return Grid.lattice(int(round((domain[1] - domain[0]) / epsilon)), epsilon, domain[0])
    return Grid(N, domain[0], domain[1])


def _ladder_task(args) -> Dict:
    model, f, h, epsilon, domain, N, t0, t_end, lead, taper, guess, cfl = args
    grid = _ladder_grid(model, epsilon, domain, N)
    state = make_initial_state(model, f, h, t0=t0, grid=grid, epsilon=epsilon, guess=guess, taper=taper)
    times = [t_end - lead, t_end] if lead > 0 else [t_end]
    trajectory = run_to(state, t_end, schedule=times, cfl=cfl)
    return {
        "epsilon": epsilon,
        "slices": [(s.t, np.array(s.x), np.array(s.u), np.array(s.v)) for s in trajectory],
    }


def run_ladder(model: str, f: ConservedDensity, h: ConservedDensity, cp: CriticalPoint, epsilons: Sequence[float],
               domain: Tuple[float, float], N: int = 1024, t0: float = 0.0, taper: float = 0.2,
               guess: Optional[Tuple[float, float]] = None, reach: Optional[float] = None,
               profile: Optional[Profile] = None, constants=None, jobs: int = 1,
               cfl: float = DEFAULT_CFL) -> LadderResult:
    """
    Perturbed runs to t_c for every epsilon, then exponent fits and, with a
    ``profile``, rescaled comparisons.

    Without ``constants`` the closed forms are tried and, when the potential
    has none, the constants are calibrated once at the largest epsilon and
    used unchanged for the smaller ones.
    """
    epsilons = sorted((float(e) for e in epsilons), reverse=True)
    if not epsilons:
        raise FitError("an epsilon ladder needs at least one value", code="RANGE")
    elliptic = cp.type == "II"
    reach = reach if reach is not None else 0.1 * (domain[1] - domain[0])
    lead = 1e-3 * max(1.0, abs(cp.t_c)) if elliptic else 0.0
    tasks = [(model, f, h, eps, domain, N, t0, cp.t_c, lead, taper, guess, cfl) for eps in epsilons]

    logger.info(f"🚀 {model} ladder over {len(tasks)} epsilons, jobs={jobs}")
    if jobs <= 1:
        outputs = [_ladder_task(task) for task in tasks]
    else:
        results: Dict[int, Dict] = {}
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futures = {ex.submit(_ladder_task, task): index for index, task in enumerate(tasks)}
            for future in as_completed(futures):
                results[futures[future]] = future.result()
        outputs = [results[index] for index in range(len(tasks))]

    potential = f.potential
    members: List[LadderMember] = []
    for output in outputs:
        slices = [FieldSlice(*item) for item in output["slices"]]
        final = slices[-1]
        if elliptic:
            amplitude = abs(elliptic_deviation(final, cp, potential))
            member = LadderMember(output["epsilon"], final, amplitude)
            if len(slices) > 1:
                speed = complex(cp.bundle["g_u0"], -math.sqrt(-cp.bundle["P0_2"]) * cp.bundle["g_v0"])
                member.defect = antiholomorphic_defect(slices[-2], final, cp, potential, speed,
                                                       0.1 * reach)
        else:
            x, deviation = deviation_profile(final, cp, f, h, reach)
            magnitude = np.abs(deviation)
            member = LadderMember(output["epsilon"], final, float(np.max(magnitude)), fwhm(x, magnitude))
        logger.info(f"📊 eps={member.epsilon:.4g}: amplitude {member.amplitude:.6e}"
                    + (f", width {member.width:.6e}" if member.width is not None else ""))
        members.append(member)

    eps = [m.epsilon for m in members]
    amplitude_fit = fit_scaling_exponent(eps, [m.amplitude for m in members])
    width_fit = None if elliptic else fit_scaling_exponent(eps, [m.width for m in members])

    if profile is not None:
        if constants is None:
            constants = _ladder_constants(cp, f, h, members[0], profile)
        for member in members:
            member.comparison = compare_profiles(member.fields, cp, constants, profile, member.epsilon, potential)

    result = LadderResult("II" if elliptic else "I", model, members, amplitude_fit, width_fit, constants)
    logger.info(f"✅ amplitude exponent {amplitude_fit.exponent:.4f} +- {amplitude_fit.stderr:.4f} "
                f"(expected {result.expected['amplitude']:.4f})")
    return result


def _ladder_constants(cp: CriticalPoint, f: ConservedDensity, h: ConservedDensity, member: LadderMember,
                      profile: Profile):
    frame = boussinesq_frame(f.potential)
    if cp.type == "I" and frame == 1:
        return hyperbolic_constants(cp, f, h)
    if cp.type == "II" and frame == -1:
        return elliptic_constants(cp, f, h)
    logger.info(f"closed forms unavailable for {f.potential.name}; calibrating at eps={member.epsilon:.4g}")
    return calibrate_constants(member.fields, cp, f.potential, member.epsilon, profile)
