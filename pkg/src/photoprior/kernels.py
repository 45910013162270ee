"""Backend selection for the per-pixel manipulation kernels.

The compiled extension is used when available; the numpy fallback is a
drop-in replacement with bit-identical output. Set PHOTOPRIOR_KERNELS to
"compiled" or "python" to force a backend.
"""

from __future__ import annotations

import os

_forced = os.environ.get("PHOTOPRIOR_KERNELS", "").strip().lower()

if _forced in ("py", "python"):
    from . import _kernels_py as _impl
    BACKEND = "python"
elif _forced in ("c", "cy", "cython", "compiled"):
    from . import _kernels as _impl  # type: ignore[attr-defined]
    BACKEND = "compiled"
elif _forced:
    raise ValueError(f"PHOTOPRIOR_KERNELS={_forced!r}: use 'compiled' or 'python'")
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as _impl
        BACKEND = "python"

piecewise_warp = _impl.piecewise_warp
feather_alpha = _impl.feather_alpha
mirror_blend = _impl.mirror_blend
