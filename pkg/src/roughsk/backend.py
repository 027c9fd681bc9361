"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback
gives identical results (up to floating-point associativity) and keeps the
package usable without a C toolchain.  Set ROUGHSK_KERNELS=py to force the
fallback, e.g. for benchmarking.
"""

import os

from . import _kernels_py

_COMPILED_MAX_D = 32

if os.environ.get("ROUGHSK_KERNELS", "").lower() in ("py", "python", "fallback"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_py


def kernel_backend():
    """Name of the active kernel backend: 'compiled' or 'python'."""
    return kernels.BACKEND


def kernels_for(d):
    """Kernel module able to handle state dimension d.

    The compiled kernels keep per-path scratch on the stack and are capped
    at d = 32; larger systems transparently use the numpy fallback.
    """
    if d > _COMPILED_MAX_D:
        return _kernels_py
    return kernels
