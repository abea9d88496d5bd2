"""Exception hierarchy shared across the fitting stages."""


class HRMPError(Exception):
    """Base class for all fitting errors.

    ``stage`` is filled in by the pipeline when an error escapes a stage so
    callers can tell where a run failed.
    """

    stage: str | None = None

    def __str__(self):
        msg = super().__str__()
        if self.stage:
            return f"[{self.stage}] {msg}"
        return msg


class DegenerateSubset(HRMPError):
    pass


class NotEnoughPoints(HRMPError):
    pass


class SamplingExhausted(HRMPError):
    pass


class InsufficientInliers(HRMPError):
    pass


class EmptyGraph(HRMPError):
    pass


class AllZeroWeights(HRMPError):
    pass


class DegenerateInput(HRMPError):
    pass


class EmptyResult(HRMPError):
    pass


class ZeroVector(HRMPError):
    pass


class NoClusters(HRMPError):
    pass


class LengthMismatch(HRMPError, ValueError):
    pass


class DatasetError(HRMPError):
    """IO-level failure (bad file, malformed content)."""


class ParseError(DatasetError):
    pass


class SchemaMismatch(DatasetError):
    pass
