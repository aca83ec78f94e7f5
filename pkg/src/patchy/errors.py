"""Exception hierarchy shared by every patchy module."""

from __future__ import annotations

from typing import Any


class PatchyError(Exception):
    """Base class for all errors raised by the package."""


class DomainValidationError(PatchyError, ValueError):
    """A domain failed its construction-time regularity checks."""


class NumericalFailure(PatchyError):
    """An iterative procedure (projection, root bracketing) did not converge."""


class DegenerateBoundary(PatchyError):
    """The level-set gradient vanished where a normal was requested."""


class OutsideDomain(PatchyError):
    """A state (or measured state) is not covered by any patch.

    ``trajectory`` carries the partial trajectory up to and including the
    exit row when the error is raised by an integrator.
    """

    def __init__(self, message: str, *, time: float | None = None,
                 state: Any = None, trajectory: Any = None) -> None:
        super().__init__(message)
        self.time = time
        self.state = state
        self.trajectory = trajectory


class EventOverflow(PatchyError):
    """More than ``max_events`` switching events (chattering guard)."""

    def __init__(self, message: str, *, trajectory: Any = None) -> None:
        super().__init__(message)
        self.trajectory = trajectory


class BranchOverflow(PatchyError):
    """Solution enumeration produced more leaves than ``branch_cap``."""


class NonInwardCollar(PatchyError):
    """A sampled collar point violates the inward-pointing condition."""


class Inconclusive(PatchyError):
    """A precondition gate failed, so the budget conclusion is not tested."""


class PartitionMismatch(PatchyError):
    """A partition does not lie below the recorded index history."""


class ScenarioError(PatchyError):
    """A scenario file could not be parsed or is missing required sections."""
