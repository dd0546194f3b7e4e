"""Two-population tumor/host mixture model with nutrient coupling on a 1D domain."""

from .errors import *  # noqa: F401,F403

__version__ = "0.1.0"
