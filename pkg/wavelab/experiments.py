"""
Experiment runner: one handler per experiment kind, each writing its result
files into the run directory and returning a verdict.

run_experiment wraps a handler with the run manifest (config echo, versions,
timings), verdict.json and the conversion of failures into exit statuses.
"""

import datetime
import json
import logging
import os
import platform
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import matplotlib
import numpy as np
import scipy
import sympy as sp

from utils.logger import log_debug_message
from utils.plotdata import emit_plotdata
from utils.results import write_csv, write_json
from wavelab import __version__
from wavelab.catalog import resolve_density, resolve_potential
from wavelab.config import (CRITICAL, DOP_CHECK, FPU_TEST, HODOGRAPH, PAINLEVE, SEMIHAM, SIMULATE, UNIVERSALITY,
                            ExperimentConfig, merge_defaults, split_list, validate_config)
from wavelab.dop import (PASS, DOperatorSpec, certify_sweep, d_apply, fpu_candidate_check,
                         fpu_integrability_test)
from wavelab.errors import ClassificationError, ConfigError, LabError, SimulationError
from wavelab.expressions import X, parse_expression, to_numeric
from wavelab.painleve import (SEED_TOL, P12Solver, P12Surface, TritronqueeEvaluator, p12_residual,
                               scan_pole_sector, solve_tritronquee)
from wavelab.pde_sim import (AL_LATTICE, LATTICE, Grid, get_model, make_initial_state, run_manifest, run_to,
                             save_trajectory)
from wavelab.semiham import (DiagonalSystem, catastrophe_identities, check_semihamiltonian,
                             multicomponent_normal_form_check, symmetry_residual)
from wavelab.universality import elliptic_constants, hyperbolic_constants, run_ladder
from wavelab.wave_core import (TYPE_II_UMBILIC, W3_FIRST, characteristic_residual, classify_singularity,
                               construct_critical_density, hodograph_residual, hodograph_solve, local_shape_fit,
                               locate_catastrophe)

logger = logging.getLogger(__name__)

SHAPE_TOL = 0.02
CONSERVED_MONITORS = ("mass", "momentum", "energy", "stretch")

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_ERROR = 2

TIMINGS_FILE = "timings.txt"


@dataclass
class ExperimentResult:
    kind: str
    run_dir: str
    verdict: Dict = field(default_factory=dict)
    files: List[str] = field(default_factory=list)
    error: Optional[Dict] = None
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return self.error is None and bool(self.verdict.get("pass"))

    @property
    def exit_code(self) -> int:
        if self.error is not None:
            return EXIT_ERROR
        return EXIT_PASS if self.passed else EXIT_FAIL


# shared builders

def _potential(config: ExperimentConfig, section: str = "model", fallback: Optional[str] = None):
    name = config.get(section, "potential").strip() or fallback or ""
    return resolve_potential(name, config.value(section, "params"))


def _density(config: ExperimentConfig, key: str, potential, section: str = "model"):
    return resolve_density(config.get(section, key), potential, config.value(section, "params"))


def _search_box(config: ExperimentConfig) -> Dict:
    return {"u": (config.value("search", "u_min"), config.value("search", "u_max")),
            "v": (config.value("search", "v_min"), config.value("search", "v_max"))}


def _instance(config: ExperimentConfig, fallback: Optional[str] = None):
    """(f, h) from [model], with f built by [construct] when left blank."""
    potential = _potential(config, fallback=fallback)
    h = _density(config, "h", potential)
    if config.get("model", "f").strip():
        return _density(config, "f", potential), h
    kind = config.get("construct", "kind")
    f = construct_critical_density(potential, h, u_c=config.value("construct", "u_c"),
                                   v_c=config.value("construct", "v_c"), x_c=config.value("construct", "x_c"),
                                   s_c=config.value("construct", "s_c"), kind=kind,
                                   search_box=_search_box(config), s_min=config.value("search", "s_min"))
    return f, h


def _search(config: ExperimentConfig, f, h):
    cp = locate_catastrophe(f, h, _search_box(config), s_min=config.value("search", "s_min"),
                            grid=config.value("search", "grid"), select=config.value("search", "select"))
    return cp, classify_singularity(cp, f, h)


# handlers: (config, run_dir) -> (verdict, files)

def run_hodograph(config: ExperimentConfig, run_dir: str) -> Tuple[Dict, List[str]]:
    potential = _potential(config)
    f, h = _density(config, "f", potential), _density(config, "h", potential)
    t = config.value("grid", "t")
    x = np.linspace(config.value("grid", "x_min"), config.value("grid", "x_max"), config.value("grid", "N"))
    guess = config.value("grid", "guess") or (potential.u_ref, 0.0)

    # continuation outward from the middle node
    start = len(x) // 2
    u, v = np.empty_like(x), np.empty_like(x)
    u[start], v[start] = hodograph_solve(f, h, x[start], t, guess)
    for idx in range(start + 1, len(x)):
        u[idx], v[idx] = hodograph_solve(f, h, x[idx], t, (u[idx - 1], v[idx - 1]))
    for idx in range(start - 1, -1, -1):
        u[idx], v[idx] = hodograph_solve(f, h, x[idx], t, (u[idx + 1], v[idx + 1]))
    residual = np.array([hodograph_residual(f, h, xi, t, ui, vi) for xi, ui, vi in zip(x, u, v)])

    path = write_csv(os.path.join(run_dir, "hodograph.csv"), ["x", "u", "v", "residual"],
                     [list(row) for row in zip(x, u, v, residual)])
    worst = float(np.max(residual))
    checks = {"residual": worst < config.tol}
    verdict = {
        "checks": checks,
        "max_residual": worst,
        "characteristic_residual": characteristic_residual(f, h, x[start], t, (u[start], v[start])),
        "pass": all(checks.values()),
    }
    return verdict, [path]


def run_critical(config: ExperimentConfig, run_dir: str) -> Tuple[Dict, List[str]]:
    f, h = _instance(config)
    cp, classification = _search(config, f, h)
    fit = local_shape_fit(cp, f, h)
    expected = 1 / 3 if cp.type == "I" else 1 / 2

    constants, note = None, None
    try:
        constants = (hyperbolic_constants(cp, f, h) if cp.type == "I" else elliptic_constants(cp, f, h)).to_json()
    except ClassificationError as e:
        note = str(e)
        logger.warning(f"⚠️ no closed-form constants: {e}")

    checks = {
        "classification": classification in (W3_FIRST, TYPE_II_UMBILIC),
        "shape_exponent": abs(fit.exponent - expected) <= SHAPE_TOL,
    }
    payload = {
        "critical_point": cp.to_json(),
        "classification": classification,
        "shape_fit": {**asdict(fit), "expected": expected, "tolerance": SHAPE_TOL},
        "constants": constants,
        "constants_note": note,
    }
    path = write_json(os.path.join(run_dir, "critical.json"), payload)
    logger.info(f"📊 type {cp.type} point at x={cp.x_c:.6f}, t={cp.t_c:.6f}: {classification}, "
                f"shape exponent {fit.exponent:.4f}")
    verdict = {"checks": checks, "classification": classification, "shape_exponent": fit.exponent,
               "pass": all(checks.values())}
    return verdict, [path]


def _optional_text(config: ExperimentConfig, key: str) -> Optional[str]:
    text = config.get("system", key).strip()
    return text or None


def run_dop_check(config: ExperimentConfig, run_dir: str) -> Tuple[Dict, List[str]]:
    potential_text = _optional_text(config, "potential")
    potential = resolve_potential(potential_text) if potential_text else None
    spec = DOperatorSpec(config.get("system", "model"), max_order=config.value("system", "order"),
                         sign=config.value("system", "sign"), potential=potential,
                         rho_plus=_optional_text(config, "rho_plus"), rho_minus=_optional_text(config, "rho_minus"),
                         c=_optional_text(config, "c"), p=_optional_text(config, "p"))
    base = spec.model_potential() or resolve_potential("quadratic")
    names = split_list(config.get("system", "densities"))
    if len(names) < 2:
        raise ConfigError("dop-check needs at least two densities", fields={"system.densities": str(len(names))})
    densities = [resolve_density(name, base) for name in names]

    if os.getenv("WAVELAB_DEBUG_LOG"):
        for name, density in zip(names, densities):
            log_debug_message(f"D[{name}] = {json.dumps(d_apply(spec, density).to_json(), default=str)}")

    reports = certify_sweep(spec, densities, spec.max_order, seed=config.seed, jobs=config.jobs)
    pairs = [(names[i], names[j]) for i in range(len(names)) for j in range(i + 1, len(names))]
    payload = {
        "model": spec.label,
        "order": spec.max_order,
        "pairs": [{"f": f, "g": g, **report.to_json()} for (f, g), report in zip(pairs, reports)],
    }
    path = write_json(os.path.join(run_dir, "dop_check.json"), payload)
    checks = {f"{f} | {g}": report.verdict == PASS for (f, g), report in zip(pairs, reports)}
    return {"checks": checks, "model": spec.label, "order": spec.max_order, "pass": all(checks.values())}, [path]


def run_fpu_test(config: ExperimentConfig, run_dir: str) -> Tuple[Dict, List[str]]:
    potential = _potential(config)
    lo, hi = config.value("model", "u_min"), config.value("model", "u_max")
    box = (lo, hi) if lo is not None and hi is not None else None
    report = fpu_integrability_test(potential, box, config.value("model", "samples"), seed=config.seed,
                                    tol=config.tol)
    verdict = {**report.to_json(), "tol": config.tol}
    checks = {"fpu": report.verdict == PASS}
    candidate = config.get("model", "candidate").strip()
    if candidate:
        candidate_report = fpu_candidate_check(potential, resolve_density(candidate, potential), seed=config.seed)
        verdict["candidate"] = candidate_report.to_json()
    verdict.update({"checks": checks, "pass": all(checks.values())})
    return verdict, []


def _p12_run(config: ExperimentConfig, run_dir: str) -> Tuple[Dict, List[str]]:
    residual_tol = config.value("painleve", "residual_tol")
    solver = P12Solver(L=config.value("painleve", "L"), N=config.value("painleve", "N"))
    profiles, files, summaries, checks = [], [], [], {}
    for T in config.value("painleve", "T_values"):
        profile = solver.solve(T)
        residual = p12_residual(profile)
        rows = profile.to_rows()
        files.append(write_csv(os.path.join(run_dir, f"p12_T{T:+.3f}.csv"), list(rows[0]),
                               [list(row.values()) for row in rows]))
        checks[f"T={T:g}"] = residual < residual_tol and max(profile.boundary_defect) < residual_tol
        summaries.append({**profile.to_json(), "defect": residual})
        profiles.append(profile)
    files.append(write_json(os.path.join(run_dir, "p12.json"), {"profiles": summaries, "residual_tol": residual_tol}))
    files += emit_plotdata({"profiles": profiles}, "p12", run_dir)
    return {"checks": checks, "profiles": summaries, "pass": all(checks.values())}, files


def _tritronquee_run(config: ExperimentConfig, run_dir: str) -> Tuple[Dict, List[str]]:
    reach = config.value("painleve", "reach")
    profile = solve_tritronquee(rays=config.value("painleve", "rays") or [0.0], R_max=config.value("painleve", "R_max"),
                                samples=config.value("painleve", "samples"),
                                reach=reach if reach is not None else 10.0, jobs=config.jobs)
    rows = profile.to_rows()
    files = [write_csv(os.path.join(run_dir, "tritronquee.csv"), list(rows[0]), [list(r.values()) for r in rows]),
             write_json(os.path.join(run_dir, "tritronquee.json"), profile.to_json())]
    files += emit_plotdata({"profile": profile}, "tritronquee", run_dir)
    checks = {"seed": profile.seed_residual < SEED_TOL, "rays_pole_free": not profile.pole_events}
    verdict = {"seed_residual": profile.seed_residual, "pole_events": len(profile.pole_events)}

    if config.value("painleve", "scan"):
        poles = scan_pole_sector(radius=config.value("painleve", "scan_radius"),
                                 n_angles=config.value("painleve", "n_angles"),
                                 n_radii=config.value("painleve", "n_radii"), jobs=config.jobs)
        files.append(write_json(os.path.join(run_dir, "poles.json"), poles.to_json()))
        files += emit_plotdata({"poles": poles}, "poles", run_dir)
        checks["sector_pole_free"] = poles.count == 0
        verdict["scan"] = poles.verdict
    verdict.update({"checks": checks, "pass": all(checks.values())})
    return verdict, files


def run_painleve(config: ExperimentConfig, run_dir: str) -> Tuple[Dict, List[str]]:
    if config.get("painleve", "mode") == "p12":
        return _p12_run(config, run_dir)
    return _tritronquee_run(config, run_dir)


def _field(text: str):
    fn = to_numeric(parse_expression(text, ("x",)), [X])
    return lambda x: np.broadcast_to(np.real(fn(x)), np.shape(x)).astype(float)


def run_simulate(config: ExperimentConfig, run_dir: str) -> Tuple[Dict, List[str]]:
    model = config.get("model", "model")
    info = get_model(model)
    epsilon = config.value("grid", "epsilon")
    N, x_min = config.value("grid", "N"), config.value("grid", "x_min")
    if info.kind in (LATTICE, AL_LATTICE):
        grid = Grid.lattice(N, epsilon, x_min)
    else:
        grid = Grid(N, x_min, config.value("grid", "x_max"))
    t0, dt, cfl = config.value("grid", "t0"), config.value("grid", "dt"), config.value("grid", "cfl")

    if config.get("model", "f").strip() or config.get("construct", "kind") in ("I", "II"):
        if not config.get("model", "h").strip():
            raise ConfigError("hodograph initial data needs [model] h", fields={"model.h": "missing"})
        f, h = _instance(config, fallback=info.potential)
        state = make_initial_state(model, f, h, t0=t0, grid=grid, epsilon=epsilon,
                                   guess=config.value("grid", "guess"), taper=config.value("grid", "taper"))
    else:
        fields = (_field(config.get("model", "u0")), _field(config.get("model", "v0")))
        state = make_initial_state(model, t0=t0, grid=grid, epsilon=epsilon, fields=fields)

    manifest = run_manifest(state, dt, cfl, config.seed)
    try:
        trajectory = run_to(state, config.value("grid", "t_end"), schedule=config.value("grid", "snapshots"), dt=dt,
                            cfl=cfl)
    except SimulationError as e:
        if e.trajectory:
            save_trajectory(e.trajectory, run_dir, "trajectory", {**manifest, "error": e.to_dict()})
        raise
    traj_dir = save_trajectory(trajectory, run_dir, "trajectory", manifest)

    drift_tol = config.value("grid", "drift_tol")
    drifts = {}
    for name in CONSERVED_MONITORS:
        if name not in trajectory[0].monitors:
            continue
        series = np.array([snap.monitors[name] for snap in trajectory])
        drifts[name] = float((series.max() - series.min()) / max(1.0, abs(series[0])))
    checks = {f"{name}_drift": value <= drift_tol for name, value in drifts.items()}
    files = sorted(os.path.join(traj_dir, name) for name in os.listdir(traj_dir))
    return {"checks": checks, "drifts": drifts, "drift_tol": drift_tol, "t_end": trajectory[-1].t,
            "pass": all(checks.values())}, files


def run_universality(config: ExperimentConfig, run_dir: str) -> Tuple[Dict, List[str]]:
    f, h = _instance(config)
    cp, classification = _search(config, f, h)
    choice = config.get("painleve", "profile")
    profile = None
    if choice == "auto":
        profile = P12Surface(config.value("painleve", "T_values")) if cp.type == "I" else TritronqueeEvaluator()

    result = run_ladder(config.get("model", "model"), f, h, cp, config.value("ladder", "epsilons"),
                        (config.value("ladder", "x_min"), config.value("ladder", "x_max")),
                        N=config.value("ladder", "N"), t0=config.value("ladder", "t0"),
                        taper=config.value("ladder", "taper"), guess=config.value("ladder", "guess"),
                        reach=config.value("ladder", "reach"), profile=profile, jobs=config.jobs,
                        cfl=config.value("ladder", "cfl"))
    header, rows = result.to_rows()
    files = [write_csv(os.path.join(run_dir, "ladder.csv"), header, rows)]
    for comparison in result.comparisons:
        header, rows = comparison.to_rows()
        files.append(write_csv(os.path.join(run_dir, f"profile_eps{comparison.epsilon:.6g}.csv"), header, rows))
    verdict = result.verdict()
    files.append(write_json(os.path.join(run_dir, "universality.json"), {
        "critical_point": cp.to_json(),
        "classification": classification,
        "constants": result.constants.to_json() if result.constants is not None else None,
        "verdict": verdict,
    }))
    files += emit_plotdata({"ladder": result}, "ladder", run_dir)
    return verdict, files


def run_semiham(config: ExperimentConfig, run_dir: str) -> Tuple[Dict, List[str]]:
    a = split_list(config.get("system", "a"))
    A = split_list(config.get("system", "A"))
    system = DiagonalSystem.from_expressions(a, A, [tuple(config.value("system", "box"))] * len(a),
                                             config.value("system", "params"))
    samples, tol = config.value("system", "samples"), config.value("system", "residual_tol")
    semihamiltonian = check_semihamiltonian(system, samples, config.seed)
    symmetry = symmetry_residual(system, samples, config.seed)
    report = multicomponent_normal_form_check(system, config.value("system", "point"),
                                              config.value("system", "breaking") - 1)
    identities = catastrophe_identities(system, report.data)
    worst_identity = max(identities.values()) if identities else 0.0

    path = write_json(os.path.join(run_dir, "semiham.json"), {
        "semihamiltonian_residual": semihamiltonian,
        "symmetry_residual": symmetry,
        "identities": identities,
        "normal_form": report.to_json(),
    })
    checks = {
        "semihamiltonian": semihamiltonian < tol,
        "symmetry": symmetry < tol,
        "identities": worst_identity < tol,
        "normal_form_exponent": abs(report.exponent - 1 / 3) <= config.value("system", "exponent_tol"),
    }
    return {"checks": checks, "normal_form_exponent": report.exponent, "pass": all(checks.values())}, [path]


EXPERIMENTS: Dict[str, Callable[[ExperimentConfig, str], Tuple[Dict, List[str]]]] = {
    HODOGRAPH: run_hodograph,
    CRITICAL: run_critical,
    DOP_CHECK: run_dop_check,
    FPU_TEST: run_fpu_test,
    PAINLEVE: run_painleve,
    SIMULATE: run_simulate,
    UNIVERSALITY: run_universality,
    SEMIHAM: run_semiham,
}


def versions() -> Dict[str, str]:
    return {
        "wavelab": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "sympy": sp.__version__,
        "matplotlib": matplotlib.__version__,
    }


def run_directory(config: ExperimentConfig) -> str:
    return os.path.join(config.out_dir, config.kind)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """
    Run one experiment into {out_dir}/{kind}/.

    The directory receives config.ini, the handler's result files,
    verdict.json and manifest.json. Library errors are caught here, logged and
    recorded in the manifest; the result's exit_code is 0 on PASS, 1 on a FAIL
    verdict and 2 on error.
    """
    run_dir = run_directory(config)
    result = ExperimentResult(config.kind, run_dir)
    started = datetime.datetime.now(datetime.timezone.utc)
    clock = time.perf_counter()
    logger.info("=" * 60)
    logger.info(f"🚀 {config.kind} experiment -> {run_dir} (seed {config.seed}, jobs {config.jobs})")
    logger.info("=" * 60)

    try:
        config = validate_config(merge_defaults(config))
        config.save(os.path.join(run_dir, "config.ini"))
        result.verdict, result.files = EXPERIMENTS[config.kind](config, run_dir)
        write_json(os.path.join(run_dir, "verdict.json"), result.verdict)
    except LabError as e:
        logger.error(f"❌ {config.kind} failed: {e}")
        result.error = e.to_dict()
        if isinstance(e, ConfigError) and e.fields:
            result.error["fields"] = dict(e.fields)

    elapsed = time.perf_counter() - clock
    result.seconds = round(elapsed, 3)
    manifest = {
        "kind": config.kind,
        "config": config.to_json(),
        "config_text": config.to_text(),
        "versions": versions(),
        "files": [os.path.relpath(path, run_dir) for path in result.files],
        "pass": result.passed,
        "error": result.error,
    }
    write_json(os.path.join(run_dir, "manifest.json"), manifest)
    # wall-clock data stays out of the JSON so identical runs give identical files
    with open(os.path.join(run_dir, TIMINGS_FILE), "w", encoding="utf-8") as f:
        f.write(f"started={started.isoformat(timespec='seconds')}\nseconds={result.seconds}\n")
    log_debug_message(f"{config.kind} manifest: {json.dumps(manifest, default=str)}")

    if result.error is None:
        status = "✅ PASS" if result.passed else "❌ FAIL"
        logger.info(f"{status} {config.kind} in {elapsed:.2f}s")
        failed = [name for name, ok in result.verdict.get("checks", {}).items() if not ok]
        if failed:
            logger.info(f"📊 failed checks: {', '.join(failed)}")
    return result
