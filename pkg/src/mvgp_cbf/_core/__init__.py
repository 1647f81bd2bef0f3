"""Hot RBF kernel loops.

The compiled module ``_rbf_ext`` is used when it was built and importable;
otherwise the numpy implementation in ``_rbf_py`` takes over. Set the
environment variable ``MVGP_CBF_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _rbf_py as fallback

backend = fallback
HAVE_EXT = False

if os.environ.get("MVGP_CBF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _rbf_ext as backend  # type: ignore[no-redef]

        HAVE_EXT = True
    except ImportError:
        backend = fallback

BACKEND_NAME = "cython" if HAVE_EXT else "numpy"

__all__ = ["backend", "fallback", "HAVE_EXT", "BACKEND_NAME"]
