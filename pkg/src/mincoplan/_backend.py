"""Kernel backend selection.

The banded-matrix kernels exist twice: a compiled Cython extension
(``mincoplan._core``) and a pure numpy fallback (``mincoplan._core_py``).
The compiled one is picked automatically when importable; the environment
variable ``MINCOPLAN_BACKEND`` (``compiled`` or ``python``) or the
:func:`use` context manager override the choice.
"""

import contextlib
import os

from . import _core_py

try:
    from . import _core as _compiled
except ImportError:  # pragma: no cover - depends on build environment
    _compiled = None

_BACKENDS = {"python": _core_py}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled


def have_compiled():
    return _compiled is not None


def _default_name():
    forced = os.environ.get("MINCOPLAN_BACKEND", "").strip().lower()
    if forced:
        if forced not in _BACKENDS:
            raise ImportError(
                f"MINCOPLAN_BACKEND={forced!r} requested but that backend is "
                f"unavailable (have: {sorted(_BACKENDS)})"
            )
        return forced
    return "compiled" if _compiled is not None else "python"


_current = _default_name()


def current():
    """Return the active backend module."""
    return _BACKENDS[_current]


def current_name():
    return _current


def available():
    return sorted(_BACKENDS)


def get(name):
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ImportError(f"backend {name!r} unavailable (have: {sorted(_BACKENDS)})")


@contextlib.contextmanager
def use(name):
    """Temporarily switch the active backend (for tests and benchmarks)."""
    global _current
    get(name)
    prev = _current
    _current = name
    try:
        yield _BACKENDS[name]
    finally:
        _current = prev
