"""
Painleve transcendents used as universality profiles.

* the tritronquee solution W0 of W'' = 6 W^2 - Z, asymptotic to -sqrt(Z/6) in
  |arg Z| < 4 pi/5, seeded from its asymptotic series at |Z| = R_max and pinned
  to its origin value off the real axis;
* the real pole-free solution U(X, T) of the fourth order equation
  X = T U - [U^3/6 + (U'^2 + 2 U U'')/24 + U''''/240], solved as a boundary
  value problem clamped to the cubic-root branch and continued in T.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_bvp, solve_ivp
from scipy.interpolate import CubicSpline, PPoly

from wavelab.errors import PainleveError, WindowError

logger = logging.getLogger(__name__)

SECTOR = 4 * math.pi / 5
BLOWUP = 1e6
SEED_TOL = 1e-6
# Z-step of the stencil measuring the ODE defect on dense output
DEFECT_STEP = 5e-3

P12_T_START = -5.0
P12_STEP = 0.25


# tritronquee

def tritronquee_seed(Z: complex) -> Tuple[complex, complex, complex]:
    """Asymptotic series W ~ -sqrt(Z/6) - 1/(48 Z^2) + 49 sqrt(6)/4608 Z^(-9/2) with its first two derivatives."""
    Z = complex(Z)
    c = 49 * math.sqrt(6) / 4608
    root = np.sqrt(Z)
    W = -root / math.sqrt(6) - 1 / (48 * Z ** 2) + c * root ** -9
    dW = -1 / (2 * math.sqrt(6) * root) + 1 / (24 * Z ** 3) - 4.5 * c * root ** -11
    d2W = 1 / (4 * math.sqrt(6) * root ** 3) - 1 / (8 * Z ** 4) + 24.75 * c * root ** -13
    return W, dW, d2W


def seed_residual(Z: complex) -> float:
    W, _, d2W = tritronquee_seed(Z)
    return abs(d2W - 6 * W ** 2 + Z)


@dataclass
class PoleEvent:
    Z: complex
    ray: float

    def to_json(self) -> Dict:
        return {"re": self.Z.real, "im": self.Z.imag, "modulus": abs(self.Z), "ray": self.ray}


@dataclass
class RayProfile:
    """Samples of W0 along Z = rho exp(i angle)."""

    angle: float
    Z: np.ndarray
    W: np.ndarray
    dW: np.ndarray
    residual: np.ndarray
    pole: Optional[PoleEvent] = None

    def near(self, rho: float) -> complex:
        return complex(self.W[np.argmin(np.abs(np.abs(self.Z) - rho))])


@dataclass
class TritronqueeProfile:
    rays: List[RayProfile]
    R_max: float
    seed_residual: float
    origin: Tuple[complex, complex]
    pole_events: List[PoleEvent] = field(default_factory=list)

    @property
    def path(self) -> np.ndarray:
        return np.concatenate([ray.Z for ray in self.rays])

    @property
    def W(self) -> np.ndarray:
        return np.concatenate([ray.W for ray in self.rays])

    @property
    def residual(self) -> np.ndarray:
        return np.concatenate([ray.residual for ray in self.rays])

    def ray(self, angle: float) -> RayProfile:
        return min(self.rays, key=lambda r: abs(r.angle - angle))

    def to_rows(self) -> List[Dict]:
        return [{"ray": ray.angle, "re_z": z.real, "im_z": z.imag, "re_w": w.real, "im_w": w.imag,
                 "residual": res}
                for ray in self.rays for z, w, res in zip(ray.Z, ray.W, ray.residual)]

    def to_json(self) -> Dict:
        return {
            "R_max": self.R_max,
            "seed_residual": self.seed_residual,
            "origin": {"W": self.origin[0].real, "dW": self.origin[1].real},
            "rays": [{"angle": ray.angle, "samples": len(ray.Z),
                      "max_residual": float(np.max(ray.residual)) if len(ray.residual) else 0.0,
                      "pole": ray.pole.to_json() if ray.pole else None} for ray in self.rays],
            "pole_events": [event.to_json() for event in self.pole_events],
        }


def _integrate_path(z0: complex, z1: complex, w: complex, dw: complex, taus: np.ndarray, rtol: float, atol: float,
                    threshold: float = BLOWUP):
    """
    Integrate W'' = 6 W^2 - Z along the segment Z = z0 + tau (z1 - z0), tau in [0, 1].

    Returns (W, dW, residual, end state, pole location or None) for the samples
    reached before a blowup.
    """
    dz = complex(z1 - z0)

    def rhs(tau, y):
        return [dz * y[1], dz * (6 * y[0] ** 2 - (z0 + tau * dz))]

    def blowup(tau, y):
        return abs(y[0]) - threshold

    blowup.terminal = True
    blowup.direction = 1

    sol = solve_ivp(rhs, (0.0, 1.0), np.array([w, dw], dtype=complex), method="DOP853", rtol=rtol, atol=atol,
                    dense_output=True, events=blowup)
    end = sol.t[-1]
    pole = None
    delta = DEFECT_STEP / abs(dz) if dz != 0 else 0.0
    if sol.status != 0:
        pole = z0 + (sol.t_events[0][0] if sol.status == 1 else end) * dz
        taus = taus[taus <= end - 2 * delta]

    Y = sol.sol(taus) if len(taus) else np.zeros((2, 0), dtype=complex)
    if len(taus):
        dWp = sum(weight * sol.sol(taus + shift * delta)[1]
                  for weight, shift in ((-1, 2), (8, 1), (-8, -1), (1, -2))) / (12 * delta)
        residual = np.abs(dWp / dz - 6 * Y[0] ** 2 + (z0 + taus * dz))
    else:
        residual = np.zeros(0)
    return Y[0], Y[1], residual, (complex(sol.y[0, -1]), complex(sol.y[1, -1])), pole


def _outward_ray(task) -> RayProfile:
    angle, origin, reach, samples, rtol, atol = task
    direction = np.exp(1j * angle)
    rho = np.linspace(0.0, reach, samples)
    W, dW, residual, _, pole = _integrate_path(0j, reach * direction, origin[0], origin[1], rho / reach, rtol, atol)
    event = PoleEvent(complex(pole), angle) if pole is not None else None
    return RayProfile(angle, rho[:len(W)] * direction, W, dW, residual, event)


def _sector_ray(task) -> RayProfile:
    """
    W0 on Z = tau * R_max exp(i angle), tau in [0, 1], as a two-point problem:
    W(0) from the real-axis solve and W(R_max exp(i angle)) from the asymptotic seed.
    """
    angle, origin, R_max, R_min, samples, tol = task
    end = R_max * np.exp(1j * angle)
    seed_w, _, _ = tritronquee_seed(end)
    defect = seed_residual(end)
    if defect > SEED_TOL:
        raise PainleveError(f"asymptotic seed residual {defect:.2e} at Z={end:.4f} exceeds {SEED_TOL}",
                            code="SEED_INACCURATE", R_max=R_max, ray=angle)

    def fun(tau, y):
        return np.vstack([end * y[1], end * (6 * y[0] ** 2 - tau * end)])

    def fun_jac(tau, y):
        jac = np.zeros((2, 2, tau.size), dtype=complex)
        jac[0, 1] = end
        jac[1, 0] = 12 * end * y[0]
        return jac

    def bc(ya, yb):
        return np.array([ya[0] - origin[0], yb[0] - seed_w])

    def bc_jac(ya, yb):
        return np.array([[1, 0], [0, 0]], dtype=complex), np.array([[0, 0], [1, 0]], dtype=complex)

    tau = np.linspace(0.0, 1.0, 401)
    Z = tau * end
    blend = np.exp(-np.abs(Z))
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.where(Z == 0, 0j, -0.5 / np.sqrt(6 * Z))
    guess = np.vstack([-np.sqrt(Z / 6) * (1 - blend) + origin[0] * blend,
                       slope * (1 - blend) + origin[1] * blend])

    sol = solve_bvp(fun, bc, tau, guess, fun_jac=fun_jac, bc_jac=bc_jac, tol=tol, max_nodes=200000)
    if not sol.success:
        raise PainleveError(f"tritronquee on ray {angle:.4f} did not converge: {sol.message}",
                            code="NO_CONVERGENCE", ray=angle)

    rho = np.linspace(R_max, R_min, samples)
    taus = rho / R_max
    Y = sol.sol(taus)
    dY = sol.sol(taus, 1)
    residual = np.abs(dY[1] / end - 6 * Y[0] ** 2 + taus * end)
    return RayProfile(float(angle), taus * end, Y[0], Y[1], residual)


def _map_rays(worker: Callable, tasks: List[tuple], jobs: int) -> List[RayProfile]:
    if jobs <= 1:
        return [worker(task) for task in tasks]
    by_index: Dict[int, RayProfile] = {}
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futures = {ex.submit(worker, task): index for index, task in enumerate(tasks)}
        for future in as_completed(futures):
            by_index[futures[future]] = future.result()
    return [by_index[index] for index in range(len(tasks))]


def _real_ray(R_max: float, R_min: float, samples: int, rtol: float,
              atol: float) -> Tuple[RayProfile, Tuple[complex, complex]]:
    W0, dW0, _ = tritronquee_seed(R_max)
    rho = np.linspace(R_max, R_min, samples)
    taus = (R_max - rho) / R_max
    W, dW, residual, origin, pole = _integrate_path(complex(R_max), 0j, W0, dW0, taus, rtol, atol)
    if pole is not None:
        raise PainleveError(f"pole on the positive real axis near {pole:.4f}", code="POLE_HIT")
    logger.info(f"✅ tritronquee on the real ray: W0(0) = {origin[0].real:.12f}, W0'(0) = {origin[1].real:.12f}")
    return RayProfile(0.0, rho.astype(complex), W, dW, residual), origin


def solve_tritronquee(rays: Sequence[float] = (0.0,), R_max: float = 40.0, R_min: float = 0.0, samples: int = 81,
                      reach: float = 10.0, rtol: float = 1e-12, atol: float = 1e-14, bvp_tol: float = 1e-10,
                      jobs: int = 1) -> TritronqueeProfile:
    """
    Tritronquee W0 along the given rays.

    Every ray is seeded at |Z| = R_max from the asymptotic series. The real ray
    is integrated inward; there perturbations of the seed only oscillate. Other
    rays inside |arg Z| < 4pi/5 are solved between the seed at R_max exp(i angle)
    and the origin data of the real ray, which pins the solution that decays
    outward along the ray. Rays on or past the sector edge run outward from the
    origin to ``reach`` and report pole events.
    """
    defect = seed_residual(R_max)
    if defect > SEED_TOL:
        raise PainleveError(f"asymptotic seed residual {defect:.2e} at R_max={R_max} exceeds {SEED_TOL}",
                            code="SEED_INACCURATE", R_max=R_max)

    real_ray, origin = _real_ray(R_max, R_min, samples, rtol, atol)

    inside = [float(a) for a in rays if a != 0.0 and abs(a) < SECTOR]
    outside = [float(a) for a in rays if abs(a) >= SECTOR]
    for angle in outside:
        logger.warning(f"⚠️ ray arg Z = {angle:.4f} lies outside |arg Z| < 4pi/5")
    by_angle = {ray.angle: ray for ray in _map_rays(_sector_ray, [(a, origin, R_max, R_min, samples, bvp_tol)
                                                                  for a in inside], jobs)}
    by_angle.update({ray.angle: ray for ray in _map_rays(_outward_ray, [(a, origin, reach, samples, rtol, atol)
                                                                        for a in outside], jobs)})
    by_angle[0.0] = real_ray

    profiles = [by_angle[float(a)] for a in dict.fromkeys(rays)]
    events = [ray.pole for ray in profiles if ray.pole is not None]
    for event in events:
        logger.warning(f"⚠️ POLE_HIT on ray {event.ray:.4f} at Z = {event.Z:.4f}")
    return TritronqueeProfile(profiles, R_max, defect, origin, events)


@dataclass
class PoleMap:
    angles: np.ndarray
    radii: np.ndarray
    hits: np.ndarray
    theta_max: float
    radius: float

    @property
    def count(self) -> int:
        return int(self.hits.sum())

    @property
    def verdict(self) -> str:
        region = f"|arg Z| <= {self.theta_max:.4f}, |Z| <= {self.radius:g}"
        if self.count == 0:
            return f"no poles detected in {region} (numerical evidence, not a proof)"
        return f"{self.count} pole events detected in {region}"

    def to_json(self) -> Dict:
        return {"angles": self.angles.tolist(), "radii": self.radii.tolist(),
                "hits": self.hits.astype(int).tolist(), "verdict": self.verdict}


def scan_pole_sector(radius: float = 8.0, theta_max: float = 0.7 * SECTOR, n_angles: int = 15, n_radii: int = 8,
                     samples: int = 161, jobs: int = 1) -> PoleMap:
    """
    Pole events of W0 on a symmetric angular grid, binned by |Z|.

    Each ray runs outward from the origin data, so a blowup is seen where it
    happens; inside the sector the drift over |Z| <= radius stays far below
    the blowup threshold.
    """
    angles = np.linspace(-theta_max, theta_max, n_angles)
    radii = np.linspace(0.0, radius, n_radii + 1)
    _, origin = _real_ray(40.0, 0.0, 2, 1e-12, 1e-14)
    scan = _map_rays(_outward_ray, [(float(a), origin, radius, samples, 1e-12, 1e-14) for a in angles if a != 0.0],
                     jobs)

    hits = np.zeros((n_angles, n_radii), dtype=bool)
    for event in (ray.pole for ray in scan if ray.pole is not None):
        i = int(np.argmin(np.abs(angles - event.ray)))
        j = min(int(np.searchsorted(radii, abs(event.Z), side="right")) - 1, n_radii - 1)
        hits[i, j] = True
    result = PoleMap(angles, radii, hits, theta_max, radius)
    logger.info(f"📊 {result.verdict}")
    return result


class TritronqueeEvaluator:
    """W0 at arbitrary points, integrated from the origin along the polyline through the requested Z."""

    def __init__(self, origin: Optional[Tuple[complex, complex]] = None, rtol: float = 1e-12, atol: float = 1e-14):
        self.origin = origin or solve_tritronquee(rays=(0.0,), samples=2).origin
        self.rtol = rtol
        self.atol = atol

    @staticmethod
    def in_sector(Z) -> bool:
        Z = np.asarray(Z, dtype=complex)
        return bool(np.all((np.abs(np.angle(Z)) < SECTOR) | (Z == 0)))

    def __call__(self, Z) -> np.ndarray:
        points = np.atleast_1d(np.asarray(Z, dtype=complex))
        values = np.empty(points.shape, dtype=complex)
        here, w, dw = 0j, self.origin[0], self.origin[1]
        for index, target in enumerate(points):
            if target != here:
                _, _, _, (w, dw), pole = _integrate_path(here, target, w, dw, np.zeros(0), self.rtol, self.atol)
                if pole is not None:
                    raise PainleveError(f"pole near Z = {pole:.4f} on the way to {target:.4f}", code="POLE_HIT")
                here = target
            values[index] = w
        return values


# P_I^2

def cubic_branch(X: float, T: float) -> float:
    """The real root of X = T U - U^3/6 continuing (-6 X)^(1/3)."""
    roots = np.roots([-1 / 6, 0.0, T, -X])
    real = roots[np.abs(roots.imag) < 1e-6].real
    if real.size != 1:
        raise PainleveError(f"cubic X = T U - U^3/6 has {real.size} real roots at X={X}, T={T}; increase L",
                            code="BRANCH_AMBIGUOUS", X=X, T=T)
    return float(real[0])


def cubic_branch_slope(U: float, T: float) -> float:
    return 1.0 / (T - U * U / 2)


@dataclass
class P12Profile:
    """
    Solution on the solver mesh X; rows of Y are U, U', U'' and U'''/240.
    ``interpolant`` is the collocation spline when the profile comes from the solver.
    """

    T: float
    X: np.ndarray
    Y: np.ndarray
    residual: np.ndarray
    boundary_defect: Tuple[float, float]
    L: float
    interpolant: Optional[PPoly] = field(default=None, repr=False)

    @property
    def U(self) -> np.ndarray:
        return self.Y[0]

    def spline(self) -> PPoly:
        return self.interpolant if self.interpolant is not None else CubicSpline(self.X, self.Y, axis=1)

    def __call__(self, X, derivative: int = 0) -> np.ndarray:
        """U (derivative 0), U' or U''."""
        X = np.asarray(X, dtype=float)
        if np.any(np.abs(X) > self.L):
            raise WindowError(f"X outside the solved window [-{self.L}, {self.L}]")
        return self.spline()(X)[derivative]

    def sign_changes(self) -> int:
        slope = np.sign(self.Y[1])
        slope = slope[slope != 0]
        return int(np.count_nonzero(np.diff(slope)))

    def is_monotone_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.U) < 0))

    @property
    def endpoint_ratio(self) -> float:
        return float(self.U[0] / (6 * self.L) ** (1 / 3))

    def to_rows(self) -> List[Dict]:
        return [{"X": x, "U": u, "U_X": ux, "U_XX": uxx, "residual": r}
                for x, u, ux, uxx, r in zip(self.X, self.Y[0], self.Y[1], self.Y[2], self.residual)]

    def to_json(self) -> Dict:
        return {
            "T": self.T,
            "L": self.L,
            "nodes": len(self.X),
            "max_residual": float(np.max(self.residual)),
            "boundary_defect": list(self.boundary_defect),
            "endpoint_ratio": self.endpoint_ratio,
            "sign_changes": self.sign_changes(),
        }


def p12_residual(profile: P12Profile, refine: int = 2) -> float:
    """Max defect of X - T U + [U^3/6 + (U'^2 + 2 U U'')/24 + U''''/240] on a refined uniform grid."""
    grid = np.linspace(profile.X[0], profile.X[-1], refine * (len(profile.X) - 1) + 1)
    spline = profile.spline()
    U, U1, U2, _ = spline(grid)
    U4 = spline(grid, 1)[3]
    defect = grid - profile.T * U + U ** 3 / 6 + (U1 ** 2 + 2 * U * U2) / 24 + U4
    return float(np.max(np.abs(defect)))


class P12Solver:
    """
    Collocation solver for the P_I^2 profile with a cached continuation ladder in T.

    Profiles for T <= T_start come straight from the cubic-branch guess; larger T
    are reached from the nearest cached solution in steps of at most ``step``.
    """

    def __init__(self, L: float = 60.0, N: int = 1000, tol: float = 1e-10, step: float = P12_STEP,
                 T_start: float = P12_T_START, continuation_tol: float = 1e-6, max_nodes: int = 200000):
        if N < 2:
            raise ValueError("N must be at least 2")
        self.L = L
        self.N = N
        self.tol = tol
        self.step = step
        self.T_start = T_start
        self.continuation_tol = continuation_tol
        self.max_nodes = max_nodes
        self._ladder: Dict[float, Tuple[np.ndarray, np.ndarray]] = {}
        self._profiles: Dict[float, P12Profile] = {}

    def boundary_values(self, T: float) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        left, right = cubic_branch(-self.L, T), cubic_branch(self.L, T)
        return (left, cubic_branch_slope(left, T)), (right, cubic_branch_slope(right, T))

    def cubic_guess(self, T: float) -> Tuple[np.ndarray, np.ndarray]:
        X = np.linspace(-self.L, self.L, self.N)
        U = np.array([cubic_branch(x, T) for x in X])
        U1 = 1.0 / (T - U ** 2 / 2)
        Y = np.vstack([U, U1, U * U1 ** 3, np.zeros_like(U)])
        return X, Y

    def _solve_at(self, T: float, X: np.ndarray, Y: np.ndarray, tol: float):
        (ua, dua), (ub, dub) = self.boundary_values(T)

        def fun(x, y):
            return np.vstack([y[1], y[2], 240 * y[3],
                              T * y[0] - x - y[0] ** 3 / 6 - (y[1] ** 2 + 2 * y[0] * y[2]) / 24])

        def fun_jac(x, y):
            jac = np.zeros((4, 4, x.size))
            jac[0, 1] = jac[1, 2] = 1.0
            jac[2, 3] = 240.0
            jac[3, 0] = T - y[0] ** 2 / 2 - y[2] / 12
            jac[3, 1] = -y[1] / 12
            jac[3, 2] = -y[0] / 12
            return jac

        def bc(ya, yb):
            return np.array([ya[0] - ua, ya[1] - dua, yb[0] - ub, yb[1] - dub])

        def bc_jac(ya, yb):
            left, right = np.zeros((4, 4)), np.zeros((4, 4))
            left[0, 0] = left[1, 1] = 1.0
            right[2, 0] = right[3, 1] = 1.0
            return left, right

        sol = solve_bvp(fun, bc, X, Y, fun_jac=fun_jac, bc_jac=bc_jac, tol=tol, max_nodes=self.max_nodes)
        if not sol.success:
            raise PainleveError(f"P_I^2 collocation failed at T={T}: {sol.message}; "
                                f"try a larger L or a finer continuation step", code="NO_CONVERGENCE", T=T)
        return sol

    def _nearest(self, T: float) -> Tuple[float, Tuple[np.ndarray, np.ndarray]]:
        if not self._ladder:
            start = self.T_start
            sol = self._solve_at(start, *self.cubic_guess(start), self.continuation_tol)
            self._ladder[start] = (sol.x, sol.y)
        T0 = min(self._ladder, key=lambda key: abs(key - T))
        return T0, self._ladder[T0]

    def solve(self, T: float) -> P12Profile:
        T = float(T)
        if T in self._profiles:
            return self._profiles[T]
        logger.info(f"🚀 P_I^2 profile at T={T} (L={self.L}, tol={self.tol:.0e})")

        if T <= self.T_start:
            X, Y = self.cubic_guess(T)
        else:
            T0, (X, Y) = self._nearest(T)
            n_steps = max(int(math.ceil(abs(T - T0) / self.step - 1e-12)), 1)
            for Tk in np.linspace(T0, T, n_steps + 1)[1:-1]:
                sol = self._solve_at(float(Tk), X, Y, self.continuation_tol)
                X, Y = sol.x, sol.y
                self._ladder[float(Tk)] = (X, Y)
                logger.debug(f"continuation T={Tk:.4f}: {len(X)} nodes")

        sol = self._solve_at(T, X, Y, self.tol)
        self._ladder[T] = (sol.x, sol.y)
        residual = np.zeros(len(sol.x))
        residual[:-1] = sol.rms_residuals
        residual[1:] = np.maximum(residual[1:], sol.rms_residuals)
        (ua, _), (ub, _) = self.boundary_values(T)
        profile = P12Profile(T, sol.x, sol.y, residual, (abs(sol.y[0, 0] - ua), abs(sol.y[0, -1] - ub)), self.L,
                             sol.sol)
        self._profiles[T] = profile
        logger.info(f"✅ P_I^2 at T={T}: {len(sol.x)} nodes, max rms residual {np.max(sol.rms_residuals):.2e}")
        return profile


def solve_p12(T: float, L: float = 60.0, N: int = 1000, tol: float = 1e-10, step: float = P12_STEP,
              solver: Optional[P12Solver] = None) -> P12Profile:
    if N < 1000:
        logger.warning(f"⚠️ P_I^2 grid of {N} nodes is below the recommended 1000")
    solver = solver or P12Solver(L=L, N=N, tol=tol, step=step)
    return solver.solve(T)


class P12Surface:
    """U(X, T) and U_XX(X, T) on a rectangle, linear in T between solved profiles."""

    def __init__(self, T_values: Sequence[float], solver: Optional[P12Solver] = None):
        self.solver = solver or P12Solver()
        self.T_values = sorted(float(T) for T in T_values)
        self.profiles = {T: self.solver.solve(T) for T in self.T_values}

    def _interpolate(self, X, T: float, derivative: int) -> np.ndarray:
        if not self.T_values[0] <= T <= self.T_values[-1]:
            raise WindowError(f"T={T} outside the solved range [{self.T_values[0]}, {self.T_values[-1]}]")
        if T in self.profiles:
            return self.profiles[T](X, derivative)
        k = int(np.searchsorted(self.T_values, T))
        T0, T1 = self.T_values[k - 1], self.T_values[k]
        weight = (T - T0) / (T1 - T0)
        return (1 - weight) * self.profiles[T0](X, derivative) + weight * self.profiles[T1](X, derivative)

    def U(self, X, T: float) -> np.ndarray:
        return self._interpolate(X, T, 0)

    def U_XX(self, X, T: float) -> np.ndarray:
        return self._interpolate(X, T, 2)
