"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4. Everything else is a library-level failure the caller
is expected to handle (or a bug).
"""


class ExcaplanError(Exception):
    """Base class for all package errors."""


class ConfigError(ExcaplanError):
    """Bad configuration: unknown key, unparsable value, inconsistent spec."""


class DataError(ExcaplanError):
    """Corrupt or inconsistent dataset / model / CSV artifact."""


class NumericError(ExcaplanError):
    """Non-finite loss or failed numerical check."""


class FrameMismatchError(ExcaplanError):
    """Operation requires a tray-frame cloud but got another frame."""


class InvalidTransformError(ExcaplanError):
    """Rotation matrix is not orthonormal with determinant +1."""


class OutOfRangeError(ExcaplanError):
    """Query point outside the height-map footprint."""


class KinematicsError(ExcaplanError):
    """Base class for kinematics failures.

    `phase` is the index of the trajectory phase being interpolated when
    the failure occurred (None outside interpolation).
    """

    def __init__(self, message: str, phase: int | None = None):
        super().__init__(message)
        self.phase = phase


class UnreachableError(KinematicsError):
    """Wrist target outside the boom+stick annulus."""


class JointLimitError(KinematicsError):
    """No IK branch satisfies the joint limits, or a joint step is too large."""


class DegenerateDragError(ExcaplanError):
    """Dragging length reaches past the base projection."""


class PlannerFailureError(ExcaplanError):
    """No valid candidate survived the final CEM pick (after one retry).

    Carries the best-scoring invalid candidate for diagnosis.
    """

    def __init__(self, message: str, best_candidate=None, best_score: float = 0.0):
        super().__init__(message)
        self.best_candidate = best_candidate
        self.best_score = best_score


class ClassImbalanceError(ExcaplanError):
    """Training set does not contain both classes."""


class ModelModeError(ExcaplanError):
    """Operation requires the model to be in a specific train/eval mode."""
