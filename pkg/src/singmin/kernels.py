"""Backend selection for the double-precision kernels.

The compiled Cython module is used when it was built; setting the
environment variable SINGMIN_PURE=1 forces the pure-Python reference.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("SINGMIN_PURE") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"

# vectorized helpers are numpy-bound either way; only the loops are compiled
base = _kernels_py.base
base_d1 = _kernels_py.base_d1
base_d2 = _kernels_py.base_d2
base_d2_majorant = _kernels_py.base_d2_majorant
psi = _kernels_py.psi
t_psi = _kernels_py.t_psi
phi0 = _kernels_py.phi0
element_potential = _kernels_py.element_potential

potential_pieces = _impl.potential_pieces
sweep = _impl.sweep


def implementation(name: str):
    """Return the kernel module for 'python' or 'compiled' (for benchmarks/tests)."""
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels  # type: ignore[attr-defined]

        return _kernels
    raise ValueError(name)
