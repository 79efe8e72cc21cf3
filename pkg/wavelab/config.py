"""
Experiment configuration: INI text with an [experiment] header section and
kind-specific sections, merged over per-kind defaults and validated field by
field before anything runs.
"""

import configparser
import io
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional

from wavelab.errors import ConfigError
from wavelab.expressions import did_you_mean

logger = logging.getLogger(__name__)

HODOGRAPH = "hodograph"
CRITICAL = "critical"
DOP_CHECK = "dop-check"
FPU_TEST = "fpu-test"
PAINLEVE = "painleve"
SIMULATE = "simulate"
UNIVERSALITY = "universality"
SEMIHAM = "semiham"

KINDS = (HODOGRAPH, CRITICAL, DOP_CHECK, FPU_TEST, PAINLEVE, SIMULATE, UNIVERSALITY, SEMIHAM)

EXPERIMENT = "experiment"
GLOBAL_KEYS = ("kind", "out_dir", "seed", "tol", "jobs")

DEFAULT_SEED = 0
DEFAULT_TOL = 1e-8
PAINLEVE_MODES = ("p12", "tritronquee")
PROFILE_CHOICES = ("auto", "none")

_MODEL = {"potential": "boussinesq_flipped", "params": "", "f": "", "h": "bous_flipped_hamiltonian"}
_CONSTRUCT = {"kind": "I", "u_c": "1.0", "v_c": "0.0", "x_c": "0.0", "s_c": "1.0"}
_SEARCH = {"u_min": "0.9", "u_max": "1.1", "v_min": "-0.1", "v_max": "0.1", "s_min": "0.0", "grid": "121",
           "select": ""}

# every value is a string, exactly as it appears in the INI text
DEFAULT_CONFIGS: Dict[str, Dict[str, Dict[str, str]]] = {
    HODOGRAPH: {
        "model": {"potential": "quadratic", "params": "", "f": "(u^3 + 3*u*v^2)/6", "h": "(u^2 + v^2)/2"},
        "grid": {"x_min": "0.5", "x_max": "1.5", "N": "41", "t": "0.3", "guess": "1.4, 0.2"},
    },
    CRITICAL: {
        "model": dict(_MODEL),
        "construct": dict(_CONSTRUCT),
        "search": dict(_SEARCH),
    },
    DOP_CHECK: {
        "system": {"model": "boussinesq", "order": "", "sign": "1", "potential": "",
                   "densities": "tricomi(4,0); tricomi(3,1)", "rho_plus": "", "rho_minus": "", "c": "", "p": ""},
    },
    FPU_TEST: {
        "model": {"potential": "exp(u)", "params": "", "u_min": "", "u_max": "", "samples": "200", "candidate": ""},
    },
    PAINLEVE: {
        "painleve": {"mode": "p12", "T_values": "3", "L": "60", "N": "1000", "rays": "0", "R_max": "40",
                     "reach": "10", "samples": "81", "scan": "yes", "scan_radius": "8", "n_angles": "15",
                     "n_radii": "8", "residual_tol": "1e-6"},
    },
    SIMULATE: {
        "model": {"model": "boussinesq", "potential": "", "params": "", "f": "", "h": "", "u0": "1 + 0.1*sin(x)",
                  "v0": "0"},
        "construct": {"kind": "", "u_c": "1.0", "v_c": "0.0", "x_c": "0.0", "s_c": "1.0"},
        "grid": {"N": "64", "x_min": "0", "x_max": "6.283185307179586", "epsilon": "0.1", "t0": "0",
                 "t_end": "1", "snapshots": "5", "dt": "5e-4", "cfl": "0.5", "taper": "0", "guess": "",
                 "drift_tol": "1e-5"},
    },
    UNIVERSALITY: {
        "model": {"model": "boussinesq", **_MODEL},
        "construct": dict(_CONSTRUCT),
        "search": dict(_SEARCH),
        "ladder": {"epsilons": "0.08, 0.04, 0.02, 0.01", "N": "1024", "x_min": "-2", "x_max": "2", "t0": "0.5",
                   "taper": "0.2", "guess": "", "reach": "", "cfl": "0.5"},
        "painleve": {"profile": "auto", "T_values": "0"},
    },
    SEMIHAM: {
        "system": {"a": "1 + u1 + u1^2/2; 2 + u2 + u2^2/2; 3 + u3 + u3^2/2",
                   "A": "4*u1 + u1^2/2; 4*u2 + u2^2/2; u3^3 + u3^4/4",
                   "box": "-0.1, 0.1", "params": "", "point": "0, 0, 0", "breaking": "3", "samples": "20",
                   "residual_tol": "1e-6", "exponent_tol": "0.05"},
    },
}


def parse_floats(text: str) -> List[float]:
    """'0.1, 0.05' -> [0.1, 0.05]; blank -> []."""
    return [float(item) for item in text.split(",") if item.strip()]


def split_list(text: str) -> List[str]:
    """Semicolon separated items (expressions may contain commas)."""
    return [item.strip() for item in text.split(";") if item.strip()]


def parse_params(text: str) -> Dict[str, float]:
    """'kappa=3, a=0.5' -> {'kappa': 3.0, 'a': 0.5}."""
    params = {}
    for item in text.split(","):
        if not item.strip():
            continue
        name, sep, value = item.partition("=")
        if not sep or not name.strip():
            raise ValueError(f"expected name=value, got '{item.strip()}'")
        params[name.strip()] = float(value)
    return params


def _yes_no(text: str) -> bool:
    value = text.strip().lower()
    if value not in ("yes", "no", "true", "false", "1", "0"):
        raise ValueError(f"expected yes or no, got '{text}'")
    return value in ("yes", "true", "1")


def _optional(convert: Callable) -> Callable:
    return lambda text: convert(text) if text.strip() else None


def _pair(text: str) -> List[float]:
    values = parse_floats(text)
    if len(values) != 2:
        raise ValueError(f"expected two numbers, got {len(values)}")
    return values


# converters by key name; keys not listed are free text
FIELD_TYPES: Dict[str, Callable] = {
    "params": parse_params,
    "x_min": float, "x_max": float, "N": int, "t": float, "guess": _optional(_pair),
    "u_c": float, "v_c": float, "x_c": float, "s_c": float,
    "u_min": _optional(float), "u_max": _optional(float), "v_min": float, "v_max": float, "s_min": float,
    "grid": int, "select": _optional(int),
    "order": _optional(int), "sign": int, "samples": int,
    "T_values": parse_floats, "L": float, "rays": parse_floats, "R_max": float, "reach": _optional(float),
    "scan": _yes_no, "scan_radius": float, "n_angles": int, "n_radii": int, "residual_tol": float,
    "epsilon": float, "t0": float, "t_end": float, "snapshots": int, "dt": _optional(float), "cfl": float,
    "taper": float, "drift_tol": float, "epsilons": parse_floats,
    "box": _pair, "point": parse_floats, "breaking": int, "exponent_tol": float,
}


def env_defaults() -> Dict[str, object]:
    """Output root and worker count from the environment; the CLI entry point loads .env first."""
    jobs = os.getenv("WAVELAB_JOBS", "1")
    try:
        jobs = int(jobs)
    except ValueError:
        raise ConfigError(f"WAVELAB_JOBS must be an integer, got '{jobs}'", fields={"WAVELAB_JOBS": jobs})
    return {"out_dir": os.getenv("WAVELAB_OUT", "results"), "jobs": jobs}


@dataclass
class ExperimentConfig:
    kind: str
    sections: Dict[str, Dict[str, str]] = field(default_factory=dict)
    out_dir: str = "results"
    seed: int = DEFAULT_SEED
    tol: float = DEFAULT_TOL
    jobs: int = 1

    def section(self, name: str) -> Dict[str, str]:
        return self.sections.get(name, {})

    def get(self, section: str, key: str) -> str:
        return self.section(section).get(key, "")

    def value(self, section: str, key: str):
        """The typed value of a field (converted with FIELD_TYPES)."""
        text = self.get(section, key)
        convert = FIELD_TYPES.get(key)
        return convert(text) if convert else text

    def with_overrides(self, out_dir: Optional[str] = None, seed: Optional[int] = None, tol: Optional[float] = None,
                       jobs: Optional[int] = None) -> "ExperimentConfig":
        changes = {name: value for name, value in
                   (("out_dir", out_dir), ("seed", seed), ("tol", tol), ("jobs", jobs)) if value is not None}
        return validate_config(replace(self, **changes))

    def to_text(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        parser[EXPERIMENT] = {"kind": self.kind, "out_dir": self.out_dir, "seed": str(self.seed),
                              "tol": repr(float(self.tol)), "jobs": str(self.jobs)}
        for name, values in self.sections.items():
            parser[name] = values
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()

    def to_json(self) -> Dict:
        return {"kind": self.kind, "out_dir": self.out_dir, "seed": self.seed, "tol": self.tol, "jobs": self.jobs,
                "sections": {name: dict(values) for name, values in self.sections.items()}}

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"unreadable config: {e}", fields={"text": type(e).__name__}) from e
        if not parser.has_section(EXPERIMENT):
            raise ConfigError("config has no [experiment] section", fields={"experiment": "missing"})

        header = dict(parser[EXPERIMENT])
        problems = {}
        for key in header:
            if key not in GLOBAL_KEYS:
                problems[f"{EXPERIMENT}.{key}"] = f"unknown key{did_you_mean(key, GLOBAL_KEYS)}"
        kind = header.get("kind", "").strip()
        if kind not in KINDS:
            problems[f"{EXPERIMENT}.kind"] = f"unknown experiment kind '{kind}'{did_you_mean(kind, KINDS)}"
            raise ConfigError("invalid config", fields=problems)

        env = env_defaults()
        numbers = {}
        for key, convert, fallback in (("seed", int, DEFAULT_SEED), ("tol", float, DEFAULT_TOL),
                                       ("jobs", int, env["jobs"])):
            try:
                numbers[key] = convert(header[key]) if header.get(key, "").strip() else fallback
            except ValueError:
                problems[f"{EXPERIMENT}.{key}"] = f"not a valid {convert.__name__}: '{header[key]}'"
        if problems:
            raise ConfigError("invalid config", fields=problems)

        sections = {name: dict(parser[name]) for name in parser.sections() if name != EXPERIMENT}
        config = cls(kind, sections, header.get("out_dir", "").strip() or env["out_dir"], **numbers)
        return validate_config(merge_defaults(config))

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                text = f.read()
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found", fields={"config": path})
        logger.info(f"loaded config {path}")
        return cls.parse(text)

    def save(self, path: str) -> str:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_text())
        return path


def merge_defaults(config: ExperimentConfig) -> ExperimentConfig:
    """Section-wise {**defaults, **file}; sections the kind does not know are kept for validation to reject."""
    defaults = DEFAULT_CONFIGS.get(config.kind)
    if defaults is None:
        return config
    merged = {name: {**values, **config.sections.get(name, {})} for name, values in defaults.items()}
    for name, values in config.sections.items():
        if name not in merged:
            merged[name] = dict(values)
    return replace(config, sections=merged)


def _kind_problems(config: ExperimentConfig) -> Dict[str, str]:
    problems = {}
    kind = config.kind
    if kind in (HODOGRAPH, SIMULATE) and config.value("grid", "x_max") <= config.value("grid", "x_min"):
        problems["grid.x_max"] = "x_max must exceed x_min"
    if kind == HODOGRAPH and config.value("grid", "N") < 2:
        problems["grid.N"] = "need at least 2 nodes"
    if kind in (CRITICAL, UNIVERSALITY):
        if config.value("search", "u_max") is None or config.value("search", "u_min") is None:
            problems["search.u_min"] = "the search box needs u_min and u_max"
        if not config.get("model", "f").strip() and config.get("construct", "kind") not in ("I", "II"):
            problems["construct.kind"] = "without [model] f the construct kind must be I or II"
    if kind == SIMULATE:
        if config.value("grid", "t_end") < config.value("grid", "t0"):
            problems["grid.t_end"] = "t_end precedes t0"
        if not config.value("grid", "epsilon") > 0:
            problems["grid.epsilon"] = "epsilon must be positive"
    if kind == PAINLEVE:
        mode = config.get("painleve", "mode")
        if mode not in PAINLEVE_MODES:
            problems["painleve.mode"] = f"unknown mode '{mode}'{did_you_mean(mode, PAINLEVE_MODES)}"
        if mode == "p12" and not config.value("painleve", "T_values"):
            problems["painleve.T_values"] = "at least one T is needed"
    if kind == UNIVERSALITY:
        epsilons = config.value("ladder", "epsilons")
        if not epsilons:
            problems["ladder.epsilons"] = "empty epsilon ladder"
        elif len(epsilons) < 3:
            problems["ladder.epsilons"] = f"an exponent fit needs at least three epsilons, got {len(epsilons)}"
        elif min(epsilons) <= 0:
            problems["ladder.epsilons"] = "epsilons must be positive"
        profile = config.get("painleve", "profile")
        if profile not in PROFILE_CHOICES:
            problems["painleve.profile"] = f"unknown profile '{profile}'{did_you_mean(profile, PROFILE_CHOICES)}"
    if kind == SEMIHAM:
        n = len(split_list(config.get("system", "a")))
        if n == 0:
            problems["system.a"] = "no characteristic velocities"
        if len(split_list(config.get("system", "A"))) != n:
            problems["system.A"] = f"expected {n} symmetry velocities"
        if len(config.value("system", "point")) != n:
            problems["system.point"] = f"expected {n} coordinates"
        if not 1 <= config.value("system", "breaking") <= max(n, 1):
            problems["system.breaking"] = f"breaking index must lie in 1..{n}"
    return problems


def validate_config(config: ExperimentConfig) -> ExperimentConfig:
    """
    Check every field against the kind's sections, keys and types.

    Raises:
        ConfigError: CONFIG_INVALID listing every problem found
    """
    if config.kind not in KINDS:
        raise ConfigError(f"unknown experiment kind '{config.kind}'{did_you_mean(config.kind, KINDS)}",
                          fields={"experiment.kind": config.kind})
    defaults = DEFAULT_CONFIGS[config.kind]
    problems: Dict[str, str] = {}

    if config.seed < 0:
        problems["experiment.seed"] = "seed must be non-negative"
    if not config.tol > 0:
        problems["experiment.tol"] = "tol must be positive"
    if config.jobs < 1:
        problems["experiment.jobs"] = "jobs must be at least 1"

    for name, values in config.sections.items():
        if name not in defaults:
            problems[name] = f"unknown section for {config.kind}{did_you_mean(name, defaults)}"
            continue
        for key, text in values.items():
            if key not in defaults[name]:
                problems[f"{name}.{key}"] = f"unknown key{did_you_mean(key, defaults[name])}"
                continue
            convert = FIELD_TYPES.get(key)
            if convert is None:
                continue
            try:
                convert(text)
            except ValueError as e:
                problems[f"{name}.{key}"] = f"invalid value '{text}': {e}"

    if not problems:
        problems.update(_kind_problems(config))
    if problems:
        raise ConfigError(f"invalid {config.kind} config", fields=problems)
    return config


def build_config(kind: str, sections: Optional[Dict[str, Dict[str, str]]] = None, **overrides) -> ExperimentConfig:
    """A validated config from defaults plus optional section overrides."""
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind '{kind}'{did_you_mean(kind, KINDS)}",
                          fields={"experiment.kind": kind})
    env = env_defaults()
    config = ExperimentConfig(kind, sections or {}, env["out_dir"], jobs=env["jobs"])
    config = merge_defaults(config)
    return config.with_overrides(**overrides)
