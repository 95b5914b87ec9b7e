"""Exception hierarchy shared by every occo module."""


class OccoError(Exception):
    """Base class for all library errors."""


class InputError(OccoError, ValueError):
    """Malformed or unusable input data (CLI exit code 2)."""


class MalformedHeader(InputError):
    pass


class IndexOutOfRange(InputError):
    pass


class NonTriangleFace(InputError):
    pass


class MissingCoordinateProperty(InputError):
    pass


class DegenerateMesh(InputError):
    pass


class EmptyCloud(InputError):
    pass


class SizeMismatch(InputError):
    pass


class TooLarge(InputError):
    pass


class TooFewItems(InputError):
    pass


class LengthMismatch(InputError):
    pass


class MaskLengthMismatch(InputError):
    pass


class SingleClass(InputError):
    pass


class ShapeMismatch(InputError):
    pass


class NumericError(OccoError, ArithmeticError):
    """Numerical failure (CLI exit code 3)."""


class NonPositiveDepth(NumericError):
    pass


class SingularIntrinsics(NumericError):
    pass


class AllOccluded(NumericError):
    pass


class NonFiniteLoss(NumericError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class ArtifactMismatch(OccoError):
    """A stored artifact does not fit its consumer (CLI exit code 4)."""


class DimsMismatch(ArtifactMismatch):
    pass


class StaleCache(ArtifactMismatch):
    pass
