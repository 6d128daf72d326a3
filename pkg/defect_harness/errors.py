from __future__ import annotations


class HarnessError(Exception):
    """Base error; `exit_code` is what the CLI returns for it."""

    exit_code = 3
    module = "harness"

    def __init__(self, message: str, *, module: str | None = None) -> None:
        super().__init__(message)
        if module is not None:
            self.module = module


class ConfigError(HarnessError, ValueError):
    exit_code = 2
    module = "config"


class InputError(ConfigError):
    module = "input"


class BoundaryError(InputError):
    module = "lattice"


class BranchError(InputError):
    module = "predictor"


class NumericError(HarnessError, RuntimeError):
    exit_code = 3
    module = "numeric"


class EvaluationError(NumericError):
    """Inadmissible configuration (collision) met while evaluating an energy."""

    module = "potentials"

    def __init__(self, message: str, *, pair: tuple[int, int] | None = None, module: str | None = None) -> None:
        super().__init__(message, module=module)
        self.pair = pair


class EigenError(NumericError):
    module = "potentials"


class QuadratureError(NumericError):
    module = "homogeneous"


class NewtonError(NumericError):
    module = "predictor"

    def __init__(self, message: str, *, point: tuple[float, ...] | None = None) -> None:
        super().__init__(message)
        self.point = point


class PredictorError(NumericError):
    module = "predictor"


class StagnationError(NumericError):
    module = "relax"

    def __init__(self, message: str, *, diagnostics: dict | None = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or {}
