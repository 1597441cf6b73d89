"""Tree-growing kernels with a compiled path and a numpy fallback.

Set ``FEATFORGE_NO_NUMBA=1`` to force the numpy implementation; it is also
used automatically when numba cannot be imported.
"""
import os

from . import _numpy


def _numba_wanted() -> bool:
    return os.environ.get("FEATFORGE_NO_NUMBA", "").strip().lower() not in ("1", "true", "yes")


BACKEND = "numpy"
if _numba_wanted():
    try:
        from . import _numba as _impl

        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba missing
        _impl = _numpy
else:
    _impl = _numpy

build_tree = _impl.build_tree
predict_leaves = _impl.predict_leaves

__all__ = ["BACKEND", "build_tree", "predict_leaves"]
