"""Exception hierarchy.  CLI exit codes are attached to the classes."""
from __future__ import annotations


class BifiError(Exception):
    exit_code = 3


class ConfigError(BifiError, ValueError):
    exit_code = 2


class NumericalError(BifiError, ArithmeticError):
    exit_code = 3


class CFLViolation(NumericalError):
    def __init__(self, dt: float, dt_max: float):
        self.dt = dt
        self.dt_max = dt_max
        super().__init__(f"dt={dt:.6g} exceeds the transport stability limit {dt_max:.6g}")


class ProjectionError(NumericalError):
    def __init__(self, residual: float, message: str = "pressure projection did not converge"):
        self.residual = residual
        super().__init__(f"{message} (relative residual {residual:.3e})")


class NonFiniteState(NumericalError):
    def __init__(self, sample_id=None, t: float | None = None):
        self.sample_id = sample_id
        self.t = t
        super().__init__(f"non-finite values in solver state (sample {sample_id}, t={t})")


class LayoutMismatch(BifiError, ValueError):
    exit_code = 3


class RankDeficient(NumericalError):
    exit_code = 4

    def __init__(self, achieved_rank: int, requested: int, residual: float):
        self.achieved_rank = achieved_rank
        self.requested = requested
        self.residual = residual
        super().__init__(
            f"candidate snapshots have numerical rank {achieved_rank} < K={requested} "
            f"(residual {residual:.3e})"
        )


class SingularGramian(NumericalError):
    exit_code = 4

    def __init__(self, condition: float):
        self.condition = condition
        super().__init__(f"Gramian is numerically singular (condition estimate {condition:.3e})")


class MissingArtifact(BifiError, FileNotFoundError):
    exit_code = 2
