"""Exception types raised by the qsync package."""


class QSyncError(Exception):
    """Base class for all qsync errors."""


class InvalidParams(QSyncError):
    """String parameters violate their invariants (e.g. L != N1*L1)."""


class LengthMismatch(QSyncError):
    """Two sequences that must have equal length do not."""


class LengthNotDivisible(QSyncError):
    """Sequence length is not divisible by the block count."""


class DimensionMismatch(QSyncError):
    """Interleaved spectra have incompatible shapes."""


class DegenerateInput(QSyncError):
    """Input carries no usable signal (e.g. all-zero receiver string)."""


class TooFewDetections(QSyncError):
    """Not enough detections in the sampling window for a spectral estimate."""


class NoPeak(QSyncError):
    """No dominant spectral peak above the noise floor."""


class NoEdge(QSyncError):
    """Detection rate never rises above the edge threshold."""


class FitDiverged(QSyncError):
    """Period regression produced a nonsensical slope."""


class InsufficientInliers(QSyncError):
    """Too few points survive trimming for a meaningful fit."""


class EstimateNotOk(QSyncError):
    """Operation requires a period estimate with ok=True."""


class ConfigInvalid(QSyncError):
    """Simulation or pipeline configuration violates an invariant."""


class SyncFailed(QSyncError):
    """End-to-end synchronization failed; the message carries the cause."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
