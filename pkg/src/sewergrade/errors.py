"""Exception types shared across the package."""


class SewergradeError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(SewergradeError, ValueError):
    """Tensor arguments disagree on shape, rank, or axis semantics."""


class NonFiniteError(SewergradeError, ArithmeticError):
    """A NaN or Inf appeared where only finite values are legal."""


class CacheError(SewergradeError, RuntimeError):
    """A backward pass ran without (or against the wrong) forward cache."""


class CheckpointError(SewergradeError):
    """Base class for weight-file problems."""


class CorruptCheckpointError(CheckpointError):
    """The file is not a readable weight archive."""


class FingerprintMismatchError(CheckpointError):
    """The stored weights belong to a different architecture."""


class CheckpointVersionError(CheckpointError):
    """The archive uses a format revision this build does not speak."""


class FrameError(SewergradeError):
    """Base class for frame-loading and preprocessing problems."""


class TooFewFramesError(FrameError):
    """A sequence is shorter than the minimum usable length."""


class MixedResolutionError(FrameError):
    """Frames within one sequence disagree on resolution."""


class UndecodableFrameError(FrameError):
    """A frame file exists but cannot be decoded."""


class FrameTooSmallError(FrameError):
    """A frame is smaller than the region the crop rules require."""


class DatasetError(SewergradeError, ValueError):
    """Manifest or split construction violates a dataset precondition."""


class TrainingDivergedError(SewergradeError):
    """The optimizer produced a non-finite loss; training was aborted."""


class ServiceError(SewergradeError):
    """Base class for triage-service failures."""


class UnknownInspectionError(ServiceError, KeyError):
    """No inspection with the given id exists."""


class IllegalTransitionError(ServiceError):
    """The requested status change is not allowed from the current state."""


class NoProductionModelError(ServiceError):
    """Classification was requested but no model is in production."""


class UnknownModelVersionError(ServiceError, KeyError):
    """The registry holds no entry for the given version."""


class PromotionError(ServiceError):
    """The model cannot be promoted from its current registry status."""


class PipelineBusyError(ServiceError):
    """A retraining run is already in progress."""
