"""Exception hierarchy shared across the package.

Each class maps to a distinct CLI exit code so batch tooling can tell
usage mistakes, bad input data, predictor protocol violations, and
simulated stalls apart.
"""


class StarStreamError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class TraceFormatError(StarStreamError):
    """A trace file could not be parsed (bad row, bad column, bad JSON)."""

    exit_code = 3

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
            if line is not None:
                prefix += f"{line}:"
            prefix += " "
        super().__init__(prefix + message)


class TraceValidationError(StarStreamError):
    """Parsed data violates a trace invariant (ordering, ranges, tiling)."""

    exit_code = 3


class AlignmentError(TraceValidationError):
    """A video trace set has a gap or overlap in its GOP tiling."""


class ProtocolError(StarStreamError):
    """An external predictor response violates the wire contract."""

    exit_code = 4


class PredictionCoverageError(ProtocolError):
    """A prediction file lacks a response for a requested timestamp."""


class ExternalPredictorError(StarStreamError):
    """The external predictor endpoint is down, timed out, or crashed.

    Callers are expected to fall back to the harmonic-mean predictor.
    """

    exit_code = 4


class StallError(StarStreamError):
    """Transmission made no progress for longer than the stall cap."""

    exit_code = 5

    def __init__(self, message, sim_time=None):
        self.sim_time = sim_time
        super().__init__(message)


class UsageError(StarStreamError):
    """Bad command-line or config-file usage."""

    exit_code = 2
