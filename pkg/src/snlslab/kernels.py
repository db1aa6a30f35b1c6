"""Backend selection for the pointwise kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback is used. Set ``SNLS_BACKEND=python`` to force the fallback or
``SNLS_BACKEND=cython`` to fail loudly when the extension is missing.
"""
import os
from contextlib import contextmanager
from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

__all__ = ["BACKEND", "get_backend", "available_backends", "use_backend",
           "phase_kick", "abs_pow_sum", "abs_max"]


def available_backends():
    names = ["python"]
    if _ckernels is not None:
        names.insert(0, "cython")
    return names


def get_backend(name: str = "auto") -> ModuleType:
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise ImportError("snlslab._ckernels is not built; run "
                              "`pip install -e . --no-build-isolation`")
        return _ckernels
    if name == "auto":
        return _ckernels if _ckernels is not None else _pykernels
    raise ValueError(f"unknown kernel backend {name!r}")


_impl = get_backend(os.environ.get("SNLS_BACKEND", "auto").strip().lower() or "auto")
BACKEND = "cython" if _impl is _ckernels and _ckernels is not None else "python"

phase_kick = _impl.phase_kick
abs_pow_sum = _impl.abs_pow_sum
abs_max = _impl.abs_max


def _install(impl: ModuleType):
    global BACKEND, phase_kick, abs_pow_sum, abs_max
    BACKEND = "cython" if impl is _ckernels and _ckernels is not None else "python"
    phase_kick = impl.phase_kick
    abs_pow_sum = impl.abs_pow_sum
    abs_max = impl.abs_max


@contextmanager
def use_backend(name: str):
    """Temporarily route every kernel call through backend ``name``."""
    previous = get_backend(BACKEND)
    _install(get_backend(name))
    try:
        yield
    finally:
        _install(previous)
