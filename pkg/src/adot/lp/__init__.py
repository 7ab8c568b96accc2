"""Dense LP engine: simplex solver and one-step transport subsolver.

The pivot loop comes from the compiled ``_kernel`` extension when it is
available; setting ``ADOT_PURE_PYTHON=1`` forces the NumPy implementation.
"""

import os

if os.environ.get("ADOT_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernel_py as kernel
    BACKEND = "python"
else:
    try:
        from . import _kernel as kernel
        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - depends on the build
        from . import _kernel_py as kernel
        BACKEND = "python"

from .simplex import LinearProgram, LPSolution, solve_lp  # noqa: E402
from .transport import TransportResult, solve_transport  # noqa: E402

__all__ = ["BACKEND", "kernel", "LinearProgram", "LPSolution", "solve_lp",
           "TransportResult", "solve_transport"]
