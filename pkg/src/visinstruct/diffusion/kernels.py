"""Kernel selection.

The compiled extension is preferred when it imports; ``VISINSTRUCT_KERNEL``
(``python`` or ``compiled``) overrides the choice. Both implementations expose
``NAME``, ``axpby`` and ``attention``.
"""
from __future__ import annotations

import logging
import os

from . import _kernels_py

log = logging.getLogger(__name__)

try:
    from . import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

AVAILABLE = {"python": _kernels_py}
if _kernels_c is not None:
    AVAILABLE["compiled"] = _kernels_c


def get_kernel(name: str | None = None):
    """Return the kernel module called ``name``, or the default one."""
    if name is None:
        name = os.environ.get("VISINSTRUCT_KERNEL") or ("compiled" if _kernels_c else "python")
    try:
        return AVAILABLE[name]
    except KeyError:
        raise LookupError(
            f"kernel {name!r} unavailable (have: {', '.join(sorted(AVAILABLE))})"
        ) from None


def default_kernel_name() -> str:
    return get_kernel().NAME
