"""Level-set transport by velocity extension."""

__version__ = "0.1.0"
