"""Exception hierarchy shared by every module of the simulator."""

from __future__ import annotations


class MVSimError(Exception):
    """Base class for all simulator errors."""


class StructuralError(MVSimError):
    """Array shape or layout does not match the owning grid."""


class ConfigurationError(MVSimError):
    """Bad parameter, unknown tag, or invalid scenario value.

    ``field`` names the offending scenario field when there is one.
    """

    def __init__(self, message: str = "", field: str | None = None):
        self.field = field
        super().__init__(message)


class LoadError(ConfigurationError):
    """Scenario text failed validation.

    Carries the offending ``section.key`` and the 1-based line number when it
    could be located.
    """

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        parts = []
        if key is not None:
            parts.append(f"[{key}]")
        if line is not None:
            parts.append(f"(line {line})")
        where = " ".join(parts)
        super().__init__(f"{where} {message}".strip())


class SolverError(MVSimError):
    """An iterative solve did not reach its tolerance."""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")


class DegeneracyError(MVSimError):
    """Magnetization collapsed below the renormalization threshold."""


class StepFailure(MVSimError):
    """A time step could not be completed.

    ``t`` is the time at the start of the failing step and ``cause`` the
    underlying error.  ``partial`` is filled in by the run loop with the
    results gathered up to the failure.
    """

    def __init__(self, message: str, t: float = float("nan"), cause: Exception | None = None,
                 run: str | None = None):
        self.t = t
        self.cause = cause
        self.run = run
        self.partial = None
        tag = f"[{run}] " if run else ""
        super().__init__(f"{tag}{message} at t={t:.6g}")


class CounterexampleError(MVSimError):
    """An inequality's right-hand side vanished while the left did not."""
