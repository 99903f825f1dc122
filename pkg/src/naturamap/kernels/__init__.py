"""Convolution hot-path kernels with a compiled core and a numpy fallback.

The compiled Cython extension is preferred when importable; set
``NATURAMAP_KERNELS=numpy`` to force the fallback (or ``=cython`` to insist
on the extension).  Both backends are bit-for-bit interchangeable.
"""
import os

from . import numpy_backend

_requested = os.environ.get("NATURAMAP_KERNELS", "auto").strip().lower()

if _requested in ("numpy", "python", "pure"):
    _impl = numpy_backend
elif _requested in ("auto", "", "cython", "c"):
    try:
        from . import _kernels as _impl
    except ImportError:
        if _requested in ("cython", "c"):
            raise ImportError(
                "NATURAMAP_KERNELS=cython but the compiled extension is not "
                "available; rebuild with `pip install -e . --no-build-isolation`")
        _impl = numpy_backend
else:
    raise ImportError(f"unknown NATURAMAP_KERNELS value {_requested!r}")

BACKEND = _impl.NAME

im2col3x3 = _impl.im2col3x3
col2im3x3 = _impl.col2im3x3
maxpool2x2 = _impl.maxpool2x2
maxpool2x2_backward = _impl.maxpool2x2_backward


def available_backends():
    """Names of the importable backends (the active one first)."""
    names = [BACKEND]
    if BACKEND != "numpy":
        names.append("numpy")
    else:
        try:
            from . import _kernels  # noqa: F401
            names.append("cython")
        except ImportError:
            pass
    return names


def get_backend(name: str):
    """Return a backend module by name (for benchmarks and equivalence tests)."""
    if name == "numpy":
        return numpy_backend
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
