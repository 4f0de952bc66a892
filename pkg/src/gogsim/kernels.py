"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the pure-Python
implementation takes over. ``GOGSIM_BACKEND=python`` forces the fallback.
"""
import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled


def default_backend() -> str:
    want = os.environ.get("GOGSIM_BACKEND", "").strip().lower()
    if want in BACKENDS:
        return want
    return "compiled" if _compiled is not None else "python"


def make_kernel(arrays, backend=None):
    name = backend or default_backend()
    if name not in BACKENDS:
        raise ValueError(f"kernel backend {name!r} unavailable; have {sorted(BACKENDS)}")
    return BACKENDS[name].Kernel(arrays)
