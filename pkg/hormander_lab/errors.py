"""Exception hierarchy shared by every module of the lab."""

from typing import Optional, Sequence


class LabError(Exception):
    """Root of all lab failures."""


class InputError(LabError):
    """Malformed input: shapes, bounds, file contents, ellipticity."""


class NumericError(LabError):
    """Non-finite values where finite ones are required."""


class FlowEscapeError(NumericError):
    def __init__(self, message: str, time: Optional[float] = None):
        super().__init__(message)
        self.time = time


class ChartRadiusError(LabError):
    """Chart coordinates outside the validated chart ball."""


class OutOfChartError(LabError):
    """Newton inversion of the chart did not converge."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class RankDeficientError(LabError):
    def __init__(self, message: str, achieved_rank: int, dimension: int):
        super().__init__(message)
        self.achieved_rank = achieved_rank
        self.dimension = dimension


class SingularEvaluationError(NumericError):
    """Kernel evaluated too close to its pole."""


class SolverError(LabError):
    def __init__(self, message: str, residual_history: Sequence[float] = ()):
        super().__init__(message)
        self.residual_history = list(residual_history)


class BinningError(LabError):
    """Too few samples in a distance bin."""
