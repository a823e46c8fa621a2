"""Select the numerical kernel implementation at import time.

The compiled extension is used when it imports cleanly; set ``MSGP_PURE=1``
to force the pure-Python fallback.
"""

import os

from . import _pycore

if os.environ.get("MSGP_PURE", "") not in ("", "0"):
    core = _pycore
    COMPILED = False
else:
    try:
        from . import _core as core
        COMPILED = True
    except ImportError:  # pragma: no cover - depends on the build
        core = _pycore
        COMPILED = False

NAME = "compiled" if COMPILED else "python"

__all__ = ["core", "COMPILED", "NAME", "_pycore"]
