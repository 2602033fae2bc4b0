"""Episode-kernel backend selection.

The compiled Cython kernel is preferred when its extension module
imported cleanly; otherwise the pure-Python kernel takes over with the
same call signatures and bit-identical results, just slower. Callers
can pin a backend explicitly (the cross-backend equivalence tests and
the kernel benchmark do).
"""

from __future__ import annotations

from types import ModuleType

from . import _episode_py

try:
    from . import _episode_c
except ImportError:  # pragma: no cover - depends on the build environment
    _episode_c = None

_active = _episode_c if _episode_c is not None else _episode_py

BACKEND_NAMES = ("compiled", "python")


def active_backend_name() -> str:
    """Name of the backend used when none is pinned."""
    return "compiled" if _active is _episode_c else "python"


def available_backends() -> tuple[str, ...]:
    return BACKEND_NAMES if _episode_c is not None else ("python",)


def get_backend(name: str | None = None) -> ModuleType:
    """Resolve a backend module by name (None or "auto" picks the default)."""
    if name is None or name == "auto":
        return _active
    if name == "python":
        return _episode_py
    if name == "compiled":
        if _episode_c is None:
            raise RuntimeError(
                "compiled kernel unavailable; reinstall with a C toolchain "
                "or use backend='python'"
            )
        return _episode_c
    raise ValueError(f"unknown backend {name!r}; expected 'compiled', 'python' or 'auto'")
