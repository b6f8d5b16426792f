"""Kernel backend selection.

The compiled extension is preferred when it was built; otherwise the numpy
fallback is used.  Set KGEMBED_BACKEND=python or =cython to force a choice
(forcing cython raises if the extension is missing).
"""

import os

from kgembed.backend import _pykernels

_KERNEL_NAMES = (
    "ccorr_rows",
    "cconv_rows",
    "cconv2d_forward",
    "cconv2d_backward_input",
    "cconv2d_backward_filters",
    "window_pair_counts",
)


def load_backend(name: str):
    """Return the kernel module for an explicit backend name."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from kgembed.backend import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}; expected 'python' or 'cython'")


def available_backends() -> list[str]:
    names = ["python"]
    try:
        load_backend("cython")
    except ImportError:
        pass
    else:
        names.append("cython")
    return names


_forced = os.environ.get("KGEMBED_BACKEND")
if _forced:
    _impl = load_backend(_forced)
    BACKEND = _forced
else:
    try:
        _impl = load_backend("cython")
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

ccorr_rows = _impl.ccorr_rows
cconv_rows = _impl.cconv_rows
cconv2d_forward = _impl.cconv2d_forward
cconv2d_backward_input = _impl.cconv2d_backward_input
cconv2d_backward_filters = _impl.cconv2d_backward_filters
window_pair_counts = _impl.window_pair_counts
