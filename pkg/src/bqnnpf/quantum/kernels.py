"""Backend selection for the hot gate kernels.

``BQNNPF_BACKEND=numba`` (default when numba imports) runs the ``@njit``
kernels; ``BQNNPF_BACKEND=numpy`` forces the vectorised fallback. Both paths
are tested against each other.
"""

import os
import types

from . import _numpy_kernels

_NAMES = (
    "sv_apply_1q",
    "sv_apply_perm",
    "dm_apply_1q",
    "dm_apply_perm",
    "dm_bitflip",
    "dm_phaseflip",
    "dm_depolarize",
)

try:
    from . import _numba_kernels

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba_kernels = None
    HAS_NUMBA = False

_active = types.SimpleNamespace()
backend = ""


def set_backend(name: str) -> None:
    """Switch every kernel to ``"numba"`` or ``"numpy"``."""
    global backend
    if name == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("numba backend requested but numba is not importable")
        src = _numba_kernels
    elif name == "numpy":
        src = _numpy_kernels
    else:
        raise ValueError(f"unknown kernel backend {name!r}; use 'numba' or 'numpy'")
    for n in _NAMES:
        setattr(_active, n, getattr(src, n))
    backend = name


def get_backend() -> str:
    return backend


def kernel(name: str):
    return getattr(_active, name)


set_backend(os.environ.get("BQNNPF_BACKEND", "numba" if HAS_NUMBA else "numpy").strip().lower())
