"""Grid-world benchmark domains with their labelling functions."""
from .domains import DOMAINS, CookieEnv, GravityEnv, KeysEnv, SymbolEnv, make
from .grid import ACTIONS, ACTION_NAMES, GridEnv, Layout, Observation

__all__ = [
    "ACTIONS",
    "ACTION_NAMES",
    "DOMAINS",
    "CookieEnv",
    "GravityEnv",
    "GridEnv",
    "KeysEnv",
    "Layout",
    "Observation",
    "SymbolEnv",
    "make",
]
