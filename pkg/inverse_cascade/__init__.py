"""Inverse cascade construction and checks for the forced 2D Navier-Stokes system with a passive tracer."""

from .errors import CascadeError
from .spectral_core import Grid2D, Rank, SpectralField

__version__ = "0.1.0"
