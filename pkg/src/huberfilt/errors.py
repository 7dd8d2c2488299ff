"""Package-specific error types.

Each class corresponds to one recoverable failure mode of the pipeline; the
CLI maps any of them to exit code 3.
"""


class HuberfiltError(Exception):
    """Base class for numerical/algorithmic failures in this package."""


class DegenerateWeightsError(HuberfiltError):
    """All confidence weights are zero ("degenerate weights")."""


class DegenerateSketchError(HuberfiltError):
    """A sketch row is identically zero ("degenerate sketch")."""


class FullSpaceError(HuberfiltError):
    """The set-aside basis already spans the ambient space ("full space")."""


class ScoreExceedsCapError(HuberfiltError):
    """A filter score exceeds the declared cap r ("score exceeds cap")."""


class CoverTooLargeError(HuberfiltError):
    """Requested sphere cover exceeds the hard size cap ("cover too large")."""


class InfeasibleError(HuberfiltError):
    """No point satisfied all slab constraints ("infeasible within tolerance")."""


class IntervalStarvedError(HuberfiltError):
    """Label-interval resampling never captured enough points ("interval starved")."""
