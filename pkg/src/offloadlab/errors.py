"""Exception and warning types shared across the package."""


class OffloadLabError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(OffloadLabError, ValueError):
    """A numeric parameter is outside its valid domain."""


class ScenarioError(OffloadLabError, ValueError):
    """A scenario file is malformed or fails validation.

    The message names the offending section/key (and line when known).
    """


class TraceFormatError(OffloadLabError, ValueError):
    """A trace log is malformed; the message is anchored to the bad row."""


class ConsistencyWarning(UserWarning):
    """Two supposedly identical evaluation routes disagreed beyond tolerance."""
