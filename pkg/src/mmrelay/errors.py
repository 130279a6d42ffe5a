"""Exception types shared across the planner.

The CLI maps each family onto a process exit code, so keep the hierarchy flat.
"""


class MMRelayError(Exception):
    """Base class for all planner errors."""


class ScenarioError(MMRelayError):
    """Scenario document could not be parsed or failed validation."""

    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = list(problems or [])


class InfeasibleError(MMRelayError):
    """The optimization problem has no feasible solution."""


class StructuralInfeasibility(InfeasibleError):
    """Coverage makes the placement problem infeasible before any solve.

    ``links`` lists the offending logical link ids.
    """

    def __init__(self, message, links=()):
        super().__init__(message)
        self.links = tuple(links)


class UnboundedError(MMRelayError):
    """Objective can be improved without limit."""


class NumericalError(MMRelayError):
    """The LP engine could not maintain its tolerances."""


class LimitExceeded(MMRelayError):
    """A node, time or iteration cap stopped a solve before it was proven."""

    def __init__(self, message, incumbent=None, gap=None):
        super().__init__(message)
        self.incumbent = incumbent
        self.gap = gap
