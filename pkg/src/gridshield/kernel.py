"""Integration-kernel selection: compiled extension when available, else the
pure-Python reference.  Set GRIDSHIELD_PURE_PYTHON=1 to force the fallback
(the benchmark harness uses this to compare both paths)."""

import os

if os.environ.get("GRIDSHIELD_PURE_PYTHON"):
    from gridshield import _kernel_py as _impl
else:
    try:
        from gridshield import _kernel as _impl  # type: ignore[attr-defined]
    except ImportError:
        from gridshield import _kernel_py as _impl

run_chunk = _impl.run_chunk
OK = _impl.OK
DIVERGED = _impl.DIVERGED
COMPILED = _impl.__name__.endswith("._kernel")
IMPLEMENTATION = "compiled" if COMPILED else "pure-python"
