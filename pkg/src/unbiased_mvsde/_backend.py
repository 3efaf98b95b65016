"""Backend switch between the numba kernels and the pure-numpy path.

The numba path is used when numba imports cleanly and the environment
variable ``UNBIASED_MVSDE_BACKEND`` is not set to ``numpy``.  It can also be
flipped at runtime with :func:`set_backend` (the benchmark and the
cross-backend tests do this).
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

ENV_FLAG = "UNBIASED_MVSDE_BACKEND"

_state = {"backend": None}


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrap


def _default_backend():
    requested = os.environ.get(ENV_FLAG, "numba").strip().lower()
    if requested not in ("numba", "numpy"):
        raise ValueError(f"{ENV_FLAG} must be 'numba' or 'numpy', got {requested!r}")
    if requested == "numba" and not HAVE_NUMBA:
        return "numpy"
    return requested


def get_backend():
    if _state["backend"] is None:
        _state["backend"] = _default_backend()
    return _state["backend"]


def set_backend(name):
    """Force ``"numba"`` or ``"numpy"``; ``None`` re-reads the environment."""
    if name is None:
        _state["backend"] = None
        return
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _state["backend"] = name


def use_numba(model):
    """True when ``model`` has a compiled coefficient code and numba is active."""
    return get_backend() == "numba" and getattr(model, "code", -1) >= 0
