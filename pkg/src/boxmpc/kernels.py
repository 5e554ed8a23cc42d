"""Selection between the compiled and pure-NumPy inner-loop kernels.

The compiled extension is optional: when it failed to build (or the
BOXMPC_PURE environment variable is set) every caller transparently gets the
NumPy implementation.  ``get_kernels("compiled")`` raises instead of falling
back so benchmarks cannot silently compare a backend against itself.
"""

import os

from . import _ipm_kernels_py

try:
    from . import _ipm_kernels
except ImportError:
    _ipm_kernels = None

_DEFAULT = "python" if (_ipm_kernels is None or os.environ.get("BOXMPC_PURE")) else "compiled"

CORES = ("auto", "compiled", "python")


def default_core():
    """Name of the core 'auto' resolves to in this process."""
    return _DEFAULT


def available_cores():
    """Concrete cores importable in this process, preferred first."""
    return ("compiled", "python") if _ipm_kernels is not None else ("python",)


def get_kernels(core="auto"):
    """Return the kernel module for a core name ('auto', 'compiled', 'python')."""
    if core == "auto":
        core = _DEFAULT
    if core == "python":
        return _ipm_kernels_py
    if core == "compiled":
        if _ipm_kernels is None:
            raise RuntimeError(
                "compiled kernels unavailable; build the extension or use core='python'")
        return _ipm_kernels
    raise ValueError(f"unknown core {core!r}; expected one of {CORES}")
