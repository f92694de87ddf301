"""Exception types shared across the package."""


class DeltasimError(Exception):
    """Base class for all package errors."""


class NoSolution(DeltasimError):
    """Forward kinematics has no real solution (spheres do not intersect)."""


class Unreachable(DeltasimError):
    """Inverse kinematics target lies outside a leg's reach."""


class Singular(DeltasimError):
    """Kinematic linearization is rank-deficient at this pose."""


class NonConvergence(DeltasimError):
    """Iterative contact resolution exceeded its iteration cap."""


class UnknownTopic(DeltasimError):
    """Publish or subscribe on a topic that was never registered."""


class MonotonicityViolation(DeltasimError):
    """Sample published with a timestamp older than its topic's latest."""


class EmptyStream(DeltasimError):
    """Synchronization requires every companion stream to be non-empty."""


class CorruptFile(DeltasimError):
    """Episode or model file failed validation (magic, version, truncation)."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class VersionMismatch(DeltasimError):
    """File declares a format version this code does not understand."""


class EmptyDataset(DeltasimError):
    """Dataset operation invoked with no usable episodes."""


class ShapeMismatch(DeltasimError):
    """Network input shape inconsistent with the layer stack."""


class NonFiniteLoss(DeltasimError):
    """Training loss became NaN or infinite."""


class AlignmentViolation(DeltasimError):
    """Teleop takeover started with targets away from the current joints."""


class ConfigError(DeltasimError):
    """Bad configuration file: unknown key, wrong type, or invalid value."""
