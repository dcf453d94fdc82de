"""Exception hierarchy shared across the package."""


class FaceMotionError(Exception):
    """Base class for all package errors."""


class IncompatibleShapeError(FaceMotionError):
    """Inputs whose dimensions do not fit together (model vs frame, z vs q, ...)."""


class ModelConfigError(FaceMotionError):
    """A blendshape model is missing a required landmark or region."""


class FormatError(FaceMotionError):
    """A file does not conform to its declared binary or text format."""


class StreamProtocolError(FaceMotionError):
    """A streaming step or event log violates the decode protocol."""
