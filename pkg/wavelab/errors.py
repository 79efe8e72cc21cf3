"""Error types raised by the wavelab modules.

Every error carries a short machine code (``err.code``) so the CLI can report
it in manifests and map it to an exit status.
"""

from typing import Any, Dict, List, Optional


class LabError(Exception):
    """Base class for every failure the library raises on purpose."""

    default_code = "LAB_ERROR"

    def __init__(self, message: str, code: Optional[str] = None, **context: Any):
        super().__init__(message)
        self.message = message
        self.code = code or self.default_code
        self.context: Dict[str, Any] = context

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"

    def to_dict(self) -> Dict[str, Any]:
        payload = {"code": self.code, "message": self.message}
        for key, value in self.context.items():
            if isinstance(value, (str, int, float, bool)) or value is None:
                payload[key] = value
        return payload


class DomainError(LabError):
    default_code = "DOMAIN"


class ConvergenceError(LabError):
    default_code = "NO_CONVERGENCE"


class CatastropheError(LabError):
    default_code = "NOT_FOUND"

    def __init__(self, message: str, code: Optional[str] = None, candidates: Optional[List[Any]] = None, **context: Any):
        super().__init__(message, code, **context)
        self.candidates = candidates or []


class ClassificationError(LabError):
    default_code = "INSUFFICIENT_DERIVATIVES"


class QuadratureError(LabError):
    default_code = "QUADRATURE"


class DensityError(LabError):
    default_code = "PDE_MISMATCH"


class FitError(LabError):
    default_code = "RANGE"


class PainleveError(LabError):
    default_code = "NO_CONVERGENCE"


class SimulationError(LabError):
    default_code = "BLOWUP"

    def __init__(self, message: str, code: Optional[str] = None, trajectory: Optional[List[Any]] = None, **context: Any):
        super().__init__(message, code, **context)
        self.trajectory = trajectory or []


class WindowError(LabError):
    default_code = "WINDOW"


class SemihamError(LabError):
    default_code = "COINCIDENT_SPEEDS"


class ConfigError(LabError):
    default_code = "CONFIG_INVALID"

    def __init__(self, message: str, fields: Optional[Dict[str, str]] = None, **context: Any):
        super().__init__(message, "CONFIG_INVALID", **context)
        self.fields: Dict[str, str] = fields or {}

    def __str__(self) -> str:
        if not self.fields:
            return super().__str__()
        details = "; ".join(f"{key}: {msg}" for key, msg in self.fields.items())
        return f"[{self.code}] {self.message} ({details})"


class ExpressionError(ConfigError):
    pass
