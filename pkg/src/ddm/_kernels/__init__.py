"""Kernel backend selection.

The compiled extension is preferred when importable; set DDM_FORCE_PYTHON=1
to force the NumPy fallback.  ``impl()`` returns the module providing the
shared kernel entry points (closest_point_on_triangles, cloud_qhat_forward,
cloud_qhat_backward); mesh acceleration structures differ per backend and
are handled by geometry.MeshIndex.
"""

import os

from ..errors import InvalidInputError
from . import py_backend

if os.environ.get("DDM_FORCE_PYTHON"):
    fast = None
else:
    try:
        from . import _fast as fast
    except ImportError:
        fast = None

HAVE_EXT = fast is not None
DEFAULT_BACKEND = "compiled" if HAVE_EXT else "python"


def resolve(backend=None):
    """Normalize a backend name; None/"auto" pick the best available."""
    if backend in (None, "auto"):
        return DEFAULT_BACKEND
    if backend == "python":
        return "python"
    if backend == "compiled":
        if not HAVE_EXT:
            raise InvalidInputError("compiled kernels are not available in this install")
        return "compiled"
    raise InvalidInputError(f"unknown backend {backend!r}")


def impl(backend=None):
    return fast if resolve(backend) == "compiled" else py_backend
