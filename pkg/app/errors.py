# app/errors.py
"""Exception hierarchy shared by the numerical services and the CLI.

Every error carries a human readable ``detail`` and the process ``exit_code``
the CLI should terminate with.
"""


class WaveguideError(Exception):
    exit_code = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


# ------------------ Configuration ------------------
class ConfigError(WaveguideError):
    exit_code = 3

    def __init__(self, detail: str, line: int | None = None):
        if line is not None:
            detail = f"line {line}: {detail}"
        super().__init__(detail)
        self.line = line


# ------------------ Numerics ------------------
class NumericalError(WaveguideError):
    exit_code = 4


class SelfIntersectionError(NumericalError):
    """Raised when the density 1 - eps n.kappa is not positive."""


class ConvergenceError(NumericalError):
    def __init__(self, detail: str, residual: float | None = None):
        if residual is not None:
            detail = f"{detail} (residual={residual:.3e})"
        super().__init__(detail)
        self.residual = residual


class GridError(NumericalError):
    """Inconsistent grids, degenerate curves or exceeded memory caps."""


class DimensionError(GridError):
    pass


class SweepRejected(NumericalError):
    """Discretization error dominates the eps-error of a sweep."""


# ------------------ Acceptance ------------------
class AcceptanceFailure(WaveguideError):
    exit_code = 2
