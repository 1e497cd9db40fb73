"""Cone kernel backend, compiled when available.

``BACKEND`` names the selected implementation (``"cython"`` or ``"python"``).
"""

from . import _kernels_py as python_kernels

try:
    from . import _kernels as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

active = compiled_kernels if compiled_kernels is not None else python_kernels
BACKEND = active.BACKEND


def available():
    """Return the kernel modules that can be used in this interpreter."""
    mods = [python_kernels]
    if compiled_kernels is not None:
        mods.insert(0, compiled_kernels)
    return mods
