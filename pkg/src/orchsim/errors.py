"""Exception types shared across the package."""

from __future__ import annotations


class OrchsimError(Exception):
    """Base class for all orchsim errors."""


class SimulationError(OrchsimError):
    """A domain precondition was violated while operating on cluster state."""


class ScenarioError(OrchsimError):
    """A scenario file failed to parse or validate.

    Carries the full list of diagnostics so callers can report every
    problem at once instead of one per invocation.
    """

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics) or "invalid scenario")
