"""Exception types raised across the package."""


class InputError(ValueError):
    """Malformed input: wrong dimensions, bad parameters, unreadable files."""


class EstimationError(RuntimeError):
    """Automatic parameter estimation (noise, centroid, flux) failed."""

    def __init__(self, message, index=None):
        if index is not None:
            message = f"exposure {index}: {message}"
        super().__init__(message)
        self.index = index


class SolverDivergence(RuntimeError):
    """The iterative solver objective blew up."""
