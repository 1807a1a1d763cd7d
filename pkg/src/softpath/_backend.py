"""Kernel backend selection.

The compiled ``_core`` extension is used when it is importable; otherwise,
or when ``SOFTPATH_PURE=1`` is set, the pure-Python ``_purecore`` is used.
Both consume identical random streams and give identical results.
"""

import os

from . import _purecore

core = _purecore
if os.environ.get("SOFTPATH_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _core as core  # type: ignore[no-redef]
    except ImportError:  # extension not built
        core = _purecore

BACKEND = core.BACKEND


def get(name: str | None = None):
    """Return the kernel module by name (``"cython"``/``"python"``) or the default."""
    if name is None:
        return core
    if name == "python":
        return _purecore
    if name == "cython":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")
