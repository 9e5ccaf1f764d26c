"""TSP solver toolkit: learned constructive policy, combined local search,
classical baselines, and a benchmark CLI."""

__version__ = "0.1.0"

from .core import Instance, Tour, brute_force_optimal, random_instance, tour_length
from .rng import RngStream

__all__ = [
    "Instance",
    "Tour",
    "RngStream",
    "brute_force_optimal",
    "random_instance",
    "tour_length",
    "__version__",
]
