"""Kernel dispatch: compiled Cython implementations when available, pure
numpy otherwise.

Set the environment variable ISOCYCLE_PURE=1 (before import) to force the
fallback, e.g. for benchmarking or debugging. `BACKEND` records the choice.
"""

import os

if os.environ.get("ISOCYCLE_PURE"):
    from isocycle import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from isocycle import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from isocycle import _kernels_py as _impl

        BACKEND = "python"

trig_eval = _impl.trig_eval
mixed_eval = _impl.mixed_eval

__all__ = ["BACKEND", "trig_eval", "mixed_eval"]
