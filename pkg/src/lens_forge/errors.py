class LensError(Exception):
    """Base class for all errors raised by lens_forge."""


class DomainError(LensError, ValueError):
    """An argument lies outside the domain of an operation."""


class PlacementError(LensError):
    """Virtual camera placement could not reach the requested count."""

    def __init__(self, message, resolution=None, feasible=None):
        super().__init__(message)
        self.resolution = resolution
        self.feasible = feasible


class RenderError(LensError):
    """The scene field produced a non-finite value while rendering."""


class DatasetError(LensError):
    """A pose file or image set is malformed or inconsistent."""
