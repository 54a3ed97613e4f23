"""Weakly supervised temporal localization toolkit."""

try:
    # Installed layout: the extension lives inside this package.
    from wsloc._core import *  # noqa: F401,F403
    from wsloc import _core as core  # noqa: F401
except ImportError:
    # In-tree build: the extension sits on PYTHONPATH next to the build dir.
    from _core import *  # noqa: F401,F403
    import _core as core  # noqa: F401

__all__ = [name for name in dir(core) if not name.startswith("_")]
