"""Learning reward machines from traces of partially observable environments."""

__version__ = "0.1.0"
