"""Deterministic LiDAR-camera BEV feature alignment toolkit."""

try:
    from ._bevalign import *  # noqa: F401,F403  (installed package layout)
    from . import _bevalign as _impl
except ImportError:  # in-tree build: the extension sits on sys.path
    from _bevalign import *  # noqa: F401,F403
    import _bevalign as _impl

__all__ = [name for name in dir(_impl) if not name.startswith("_")]
__version__ = "0.1.0"
