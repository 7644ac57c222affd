"""Multi-frame super-resolution of undersampled point-spread functions."""
from .exceptions import EstimationError, InputError, SolverDivergence
from .image import ImageGrid, LRExposure, LRStack
from .operator import ObservationOperator
from .solvers import SolverConfig, first_guess, quadratic_baseline, shift_and_add, sprite

__version__ = "0.1.0"

__all__ = [
    "EstimationError",
    "InputError",
    "SolverDivergence",
    "ImageGrid",
    "LRExposure",
    "LRStack",
    "ObservationOperator",
    "SolverConfig",
    "first_guess",
    "quadratic_baseline",
    "shift_and_add",
    "sprite",
]
