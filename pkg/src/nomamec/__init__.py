"""Joint resource allocation for helper-assisted NOMA mobile edge computing."""

__version__ = "0.1.0"
