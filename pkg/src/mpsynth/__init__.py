"""Measurement and synthesis of reactive systems under probabilistic input assumptions."""

from .values import BOTTOM, is_bottom

__version__ = "0.1.0"
