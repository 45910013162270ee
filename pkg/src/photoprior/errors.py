"""Exception types shared across the package."""


class PhotopriorError(Exception):
    """Base class for all errors raised by this package."""


# --- container / EXIF parsing ---

class MalformedContainer(PhotopriorError):
    """Byte stream is not a well-formed JPEG or TIFF container."""


class OffsetOutOfBounds(MalformedContainer):
    """A TIFF IFD offset points outside the supplied buffer."""


# --- image manipulation ---

class DegenerateRegion(PhotopriorError):
    """Landmark region has zero usable area."""


class DimensionMismatch(PhotopriorError):
    """Arrays that must share a shape do not."""


class InvalidParams(PhotopriorError):
    """Parameter values outside their documented domain."""


# --- autodiff / model ---

class ShapeMismatch(PhotopriorError):
    """Operands have incompatible shapes."""


class CycleDetected(PhotopriorError):
    """Backward pass found a cycle in the tape (corrupted graph)."""


# --- losses / training ---

class EmptyBatch(PhotopriorError):
    """Loss requested for a batch with no samples."""


class EmptyDataset(PhotopriorError):
    """Training requested on an empty dataset."""


class NonFiniteLoss(PhotopriorError):
    """Loss became NaN/Inf during training; carries the failing step index."""

    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value!r} at step {step}")
        self.step = step
        self.value = value


# --- GMM ---

class TooFewSamples(PhotopriorError):
    """Fewer samples than mixture components."""


class DegenerateComponent(PhotopriorError):
    """A mixture component lost all responsibility mass."""


# --- evaluation ---

class EmptyInput(PhotopriorError):
    """An operation received an empty list where values are required."""


class LengthMismatch(PhotopriorError):
    """Score and label sequences differ in length."""


class NoPositives(PhotopriorError):
    """Average precision needs at least one positive label."""


class OneClassOnly(PhotopriorError):
    """AUC needs at least one positive and one negative label."""
