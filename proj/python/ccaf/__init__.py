"""Cloth-changing person re-identification framework (C++ core)."""

try:
    from ._ccaf import *  # noqa: F401,F403
    from . import _ccaf as _backend  # noqa: F401
except ImportError:  # extension built out of tree (development layout)
    from _ccaf import *  # noqa: F401,F403
    import _ccaf as _backend  # noqa: F401

__version__ = "0.1.0"
