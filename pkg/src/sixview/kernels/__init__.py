"""Convolution kernel backend selection.

The compiled Cython extension is used when available; otherwise the numpy
im2col fallback.  Override with SIXVIEW_KERNELS={compiled,numpy,auto}.
Results are deterministic within one build for either backend (the two may
differ in the last float32 bits because the compiled path accumulates in
float64).
"""

import os

from . import _convnp

_choice = os.environ.get("SIXVIEW_KERNELS", "auto")
if _choice not in ("auto", "compiled", "numpy"):
    raise ValueError(f"SIXVIEW_KERNELS must be auto|compiled|numpy, got {_choice!r}")

_impl = None
if _choice in ("auto", "compiled"):
    try:
        from . import _convcy as _impl
    except ImportError:
        if _choice == "compiled":
            raise
if _impl is None:
    _impl = _convnp

BACKEND = _impl.BACKEND_NAME
conv2d_forward = _impl.conv2d_forward
conv2d_backward_input = _impl.conv2d_backward_input
conv2d_backward_weight = _impl.conv2d_backward_weight


def available_backends():
    names = ["numpy"]
    try:
        from . import _convcy  # noqa: F401
        names.insert(0, "compiled")
    except ImportError:
        pass
    return names


def get_backend(name):
    """Return the kernel module for an explicit backend name (for benchmarks/tests)."""
    if name == "numpy":
        return _convnp
    if name == "compiled":
        from . import _convcy
        return _convcy
    raise ValueError(f"unknown backend {name!r}")
