"""Design toolkit for AlN combined overtone resonators and their ladder filters."""

__version__ = "0.1.0"
