"""Exception hierarchy shared across the package."""


class ReefscaleError(Exception):
    """Base class for all data errors raised by reefscale."""


class GeometryError(ReefscaleError, ValueError):
    pass


class RayAboveHorizon(GeometryError):
    pass


class NonPositiveDepth(GeometryError):
    pass


class DegeneratePolygon(GeometryError):
    pass


class TileTooSmall(ReefscaleError, ValueError):
    pass


class EmptyRaster(ReefscaleError, ValueError):
    pass


class WindowOutOfBounds(ReefscaleError, IndexError):
    pass


class UnknownClass(ReefscaleError, KeyError):
    def __str__(self) -> str:
        # KeyError quotes its message by default
        return str(self.args[0]) if self.args else ""


class NoImages(ReefscaleError, ValueError):
    pass


class RatioOutOfRange(ReefscaleError, ValueError):
    pass


class ProbabilityOutOfRange(ReefscaleError, ValueError):
    pass


class NonDivisorRate(ReefscaleError, ValueError):
    pass


class OutOfTrackRange(ReefscaleError, ValueError):
    pass


class EmptyInput(ReefscaleError, ValueError):
    pass


class DegenerateLabels(ReefscaleError, ValueError):
    pass


class KeyMismatch(ReefscaleError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class StageError(ReefscaleError):
    """Wraps an error raised inside a pipeline stage with the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
