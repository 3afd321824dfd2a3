"""Pick the compiled kernels when they import, else the numpy fallback.

Set ``TYPICALITY_BACKEND=python`` to force the fallback.
"""

import os

from . import _pykernels

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _pykernels}
if _compiled is not None:
    _BACKENDS["cython"] = _compiled


def available():
    return sorted(_BACKENDS)


def get(name=None):
    """Kernel module by name; ``None`` means the import-time default."""
    if name is None:
        return kernels
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {available()}") from None


_requested = os.environ.get("TYPICALITY_BACKEND", "").strip().lower()
if _requested:
    kernels = get(_requested)
else:
    kernels = _compiled if _compiled is not None else _pykernels

BACKEND = kernels.NAME
