"""Pair-interaction engine backends.

The compiled Cython engine is used when its extension module imported
cleanly; otherwise the NumPy fallback takes over.  Set POTTSGAS_ENGINE to
"python" or "cython" to force a backend (the benchmark uses this to compare
the two).
"""

import importlib
import os

from . import engine_py

_requested = os.environ.get("POTTSGAS_ENGINE", "").strip().lower()

engine_cy = None
if _requested != "python":
    try:
        engine_cy = importlib.import_module(__name__ + ".engine_cy")
    except ImportError:
        engine_cy = None
        if _requested == "cython":
            raise ImportError(
                "POTTSGAS_ENGINE=cython but the compiled engine is missing; "
                "build it with `pip install -e . --no-build-isolation`")

if engine_cy is not None:
    PairEngine = engine_cy.PairEngine
    BACKEND = "cython"
else:
    PairEngine = engine_py.PairEngine
    BACKEND = "python"


def get_engine(backend: str | None = None):
    """PairEngine class for an explicit backend name (None = selected)."""
    if backend is None:
        return PairEngine
    if backend == "python":
        return engine_py.PairEngine
    if backend == "cython":
        if engine_cy is None:
            raise ImportError("compiled engine not available")
        return engine_cy.PairEngine
    raise ValueError(f"unknown backend {backend!r}")
